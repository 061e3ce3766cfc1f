#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memlens/driver.hpp"
#include "memlens/report.hpp"

namespace memlens {

enum class Op : std::uint8_t {
    CtxCreate,
    CtxDestroy,
    CtxSetCurrent,
    CtxSynchronize,
    MemAlloc,
    MemFree,
    ArrayCreate,
    ArrayDestroy,
    MemcpyHtoD,
    MemcpyDtoH,
    MemcpyDtoD,
    MemcpyHtoA,
    MemcpyAtoH,
    HostAlloc,
    HostWrite,
    HostFree,
};

std::string_view op_name(Op op) noexcept;
std::optional<Op> parse_op(std::string_view name) noexcept;

/// An address, context or array operand: either a literal value or a
/// symbol bound by an earlier event, plus a byte offset (wrapping, so
/// "$c-1" is stored as offset 2^64-1).
struct Ref {
    std::string symbol;  // without the leading '$'; empty for literals
    std::uint64_t value = 0;

    static Ref literal(std::uint64_t v) { return Ref{{}, v}; }
    static Ref sym(std::string name, std::uint64_t offset = 0) { return Ref{std::move(name), offset}; }

    bool is_symbol() const noexcept { return !symbol.empty(); }
    std::string to_string() const;

    bool operator==(const Ref&) const = default;
};

/// One recorded API call. Only the fields the op uses are set.
struct TraceEvent {
    std::size_t line = 0;
    ThreadId thread = 1;
    Op op = Op::CtxCreate;
    TraceLoc loc;

    std::optional<Ref> ctx;
    std::optional<std::string> out;  // symbol bound to the call's result
    std::optional<Ref> dst, src, ptr, addr, array;
    std::optional<std::uint64_t> size, len, offset;
    std::optional<std::uint64_t> width, height, depth, channels;
    std::optional<ElementFormat> format;
    std::optional<std::vector<std::uint8_t>> vbits;

    bool operator==(const TraceEvent&) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ReplayError : public std::runtime_error {
public:
    ReplayError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Pulls events one line at a time. Blank lines and '#' comments are
/// skipped; unknown keys are ignored.
class TraceReader {
public:
    explicit TraceReader(std::istream& in) : in_(in) {}

    /// Next event, or nullopt at end of input. Throws ParseError.
    std::optional<TraceEvent> next();

private:
    std::istream& in_;
    std::size_t line_ = 0;
    std::set<std::string> bound_;
};

std::vector<TraceEvent> parse_trace(std::istream& in);
std::vector<TraceEvent> parse_trace(std::string_view text);

/// Parses one JSON line. `line` is only used for error messages.
TraceEvent parse_event(std::string_view text, std::size_t line);

std::string serialize_event(const TraceEvent& event);
std::string serialize_trace(const std::vector<TraceEvent>& events);

struct ReplayConfig {
    DriverConfig driver;
    std::vector<Suppression> suppressions;
};

struct ReplayStats {
    std::size_t events = 0;
    std::size_t errors = 0;
    std::size_t warnings = 0;
    std::size_t suppressed = 0;

    bool operator==(const ReplayStats&) const = default;
};

struct ReplayResult {
    std::vector<Diagnostic> diagnostics;
    ReplayStats stats;
};

/// Executes events against a Driver in order, resolving symbols.
class Replayer {
public:
    explicit Replayer(ReplayConfig config);

    /// Throws ReplayError on an unbound or rebound symbol.
    void step(const TraceEvent& event);

    /// Diagnostics emitted so far (no end-of-trace leak report).
    const std::vector<Diagnostic>& diagnostics() const noexcept { return driver_.diagnostics(); }

    const Driver& driver() const noexcept { return driver_; }

    /// Runs the end-of-trace leak report (when enabled) and computes stats.
    ReplayResult finish();

private:
    std::uint64_t resolve(const Ref& ref, std::size_t line) const;
    void bind(const std::optional<std::string>& out, std::uint64_t value, std::size_t line);

    ReplayConfig config_;
    Driver driver_;
    std::map<std::string, std::uint64_t> symbols_;
    std::size_t events_ = 0;
};

ReplayResult replay(const std::vector<TraceEvent>& events, const ReplayConfig& config);

/// Streams events from `in` without buffering the whole trace.
ReplayResult replay_stream(std::istream& in, const ReplayConfig& config);

}  // namespace memlens
