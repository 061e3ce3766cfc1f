#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace memlens {

/// Offset into one 64-bit address space (host, or one device context).
using Address = std::uint64_t;

/// Small integer assigned by the trace author; no OS semantics.
using ThreadId = std::uint32_t;

enum class ContextId : std::uint32_t {};
enum class ArrayHandle : std::uint64_t {};

constexpr std::uint32_t to_underlying(ContextId id) { return static_cast<std::uint32_t>(id); }
constexpr std::uint64_t to_underlying(ArrayHandle h) { return static_cast<std::uint64_t>(h); }

/// Call-site backtrace, innermost frame first. Frames look like
/// "main (example01.cu:60)".
struct TraceLoc {
    std::vector<std::string> frames;

    bool operator==(const TraceLoc&) const = default;
};

}  // namespace memlens
