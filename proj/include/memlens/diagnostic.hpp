#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memlens/types.hpp"

namespace memlens {

enum class Severity : std::uint8_t { Error, Warning };

enum class DiagKind : std::uint8_t {
    DstNotAllocated,
    SrcNotAllocated,
    DstTooSmall,
    SrcTooSmall,
    HostUnaddressable,
    HostUndefined,
    InvalidFree,
    ConcurrentHazard,
    DeviceLeak,
};

inline constexpr DiagKind kAllDiagKinds[] = {
    DiagKind::DstNotAllocated, DiagKind::SrcNotAllocated,   DiagKind::DstTooSmall,
    DiagKind::SrcTooSmall,     DiagKind::HostUnaddressable, DiagKind::HostUndefined,
    DiagKind::InvalidFree,     DiagKind::ConcurrentHazard,  DiagKind::DeviceLeak,
};

enum class TransferKind : std::uint8_t { HtoD, DtoH, DtoD, HtoA, AtoH };

/// What the diagnostic's `address` field names.
enum class Target : std::uint8_t { None, Host, Device, Array };

enum class Hazard : std::uint8_t { ReadAfterWrite, WriteAfterRead, WriteAfterWrite };

std::string_view kind_name(DiagKind kind) noexcept;
std::optional<DiagKind> parse_kind(std::string_view name) noexcept;
std::string_view transfer_name(TransferKind t) noexcept;
/// "host->device", "device->host", ...
std::string_view transfer_direction(TransferKind t) noexcept;
std::string_view severity_name(Severity s) noexcept;
std::string_view target_name(Target t) noexcept;
std::string_view hazard_name(Hazard h) noexcept;

/// HostUndefined, ConcurrentHazard and DeviceLeak are warnings; everything
/// else is an error.
Severity default_severity(DiagKind kind) noexcept;

/// One detected problem. Which optional fields are set depends on `kind`:
///
///   *NotAllocated      transfer, target, address, other_context (hint)
///   *TooSmall          transfer, target, address, expected_bytes, found_bytes
///   HostUnaddressable  transfer (absent for host writes), address, length, offset
///   HostUndefined      transfer, address, length, offset, undefined_bytes
///   InvalidFree        target, address, other_context (hint)
///   ConcurrentHazard   transfer, target, address, length, other_thread, hazard
///   DeviceLeak         target, address, length
struct Diagnostic {
    Severity severity = Severity::Error;
    DiagKind kind = DiagKind::DstNotAllocated;
    std::optional<TransferKind> transfer;
    Target target = Target::None;
    std::optional<std::uint64_t> address;
    std::optional<std::uint64_t> length;
    std::optional<std::uint64_t> expected_bytes;
    std::optional<std::uint64_t> found_bytes;
    std::optional<std::uint64_t> offset;
    std::optional<std::uint64_t> undefined_bytes;
    std::optional<ContextId> other_context;
    std::optional<ThreadId> other_thread;
    std::optional<Hazard> hazard;
    ThreadId thread = 0;
    std::vector<std::string> frames;  // innermost first

    bool is_error() const noexcept { return severity == Severity::Error; }

    bool operator==(const Diagnostic&) const = default;
};

}  // namespace memlens
