#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memlens/diagnostic.hpp"

namespace memlens {

/// Renders a diagnostic in the checker's text style:
///
///   Error: Allocated device memory too small for device->host copy.
///   Expected 8000000 allocated bytes but only found 4000000.
///    at cuMemcpyDtoH_v2 (cuMemcpyDtoH.c:58)
///    by main (example01.cu:60)
///
/// Every line ends in '\n'.
std::string format_text(const Diagnostic& d);

/// Matches `text` against a glob where '*' is any run of characters and
/// '?' is exactly one.
bool glob_match(std::string_view pattern, std::string_view text);

/// Frame pattern that matches any number (including zero) of frames.
inline constexpr std::string_view kFrameEllipsis = "...";

struct Suppression {
    std::string name;
    std::optional<DiagKind> kind;        // nullopt means "*"
    std::vector<std::string> frames;     // innermost first

    bool operator==(const Suppression&) const = default;
};

class SuppressionParseError : public std::runtime_error {
public:
    SuppressionParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Block format, one item per line:
///
///   {
///      driver-noise
///      *
///      libcuda.so*
///      ...
///   }
///
/// Blank lines and lines starting with '#' are ignored.
std::vector<Suppression> parse_suppressions(std::istream& in);
std::vector<Suppression> parse_suppressions(std::string_view text);
std::string serialize_suppressions(const std::vector<Suppression>& sups);

/// True iff the kind matches and the frame patterns match the diagnostic's
/// frames positionally from the innermost one. Frames beyond the last
/// pattern are ignored; "..." matches any run of frames, including none.
bool matches(const Suppression& s, const Diagnostic& d);

struct ReportSummary {
    std::size_t errors = 0;
    std::size_t warnings = 0;
    std::size_t suppressed = 0;
    std::vector<DiagKind> kinds;  // distinct kinds among shown diagnostics

    bool operator==(const ReportSummary&) const = default;
};

/// "ERROR SUMMARY: 1 errors, 0 warnings (0 suppressed)"
std::string summary_line(const ReportSummary& s);

struct FinalReport {
    std::vector<Diagnostic> shown;
    ReportSummary summary;
    std::string json;
};

inline constexpr int kReportSchemaVersion = 1;

FinalReport finalize(const std::vector<Diagnostic>& diagnostics, const std::vector<Suppression>& suppressions);

}  // namespace memlens
