#include "memlens/diagnostic.hpp"

namespace memlens {

std::string_view kind_name(DiagKind kind) noexcept {
    switch (kind) {
        case DiagKind::DstNotAllocated: return "DstNotAllocated";
        case DiagKind::SrcNotAllocated: return "SrcNotAllocated";
        case DiagKind::DstTooSmall: return "DstTooSmall";
        case DiagKind::SrcTooSmall: return "SrcTooSmall";
        case DiagKind::HostUnaddressable: return "HostUnaddressable";
        case DiagKind::HostUndefined: return "HostUndefined";
        case DiagKind::InvalidFree: return "InvalidFree";
        case DiagKind::ConcurrentHazard: return "ConcurrentHazard";
        case DiagKind::DeviceLeak: return "DeviceLeak";
    }
    return "?";
}

std::optional<DiagKind> parse_kind(std::string_view name) noexcept {
    for (DiagKind k : kAllDiagKinds) {
        if (kind_name(k) == name) return k;
    }
    return std::nullopt;
}

std::string_view transfer_name(TransferKind t) noexcept {
    switch (t) {
        case TransferKind::HtoD: return "HtoD";
        case TransferKind::DtoH: return "DtoH";
        case TransferKind::DtoD: return "DtoD";
        case TransferKind::HtoA: return "HtoA";
        case TransferKind::AtoH: return "AtoH";
    }
    return "?";
}

std::string_view transfer_direction(TransferKind t) noexcept {
    switch (t) {
        case TransferKind::HtoD: return "host->device";
        case TransferKind::DtoH: return "device->host";
        case TransferKind::DtoD: return "device->device";
        case TransferKind::HtoA: return "host->array";
        case TransferKind::AtoH: return "array->host";
    }
    return "?";
}

std::string_view severity_name(Severity s) noexcept {
    return s == Severity::Error ? "error" : "warning";
}

std::string_view target_name(Target t) noexcept {
    switch (t) {
        case Target::None: return "none";
        case Target::Host: return "host";
        case Target::Device: return "device";
        case Target::Array: return "array";
    }
    return "?";
}

std::string_view hazard_name(Hazard h) noexcept {
    switch (h) {
        case Hazard::ReadAfterWrite: return "read-after-write";
        case Hazard::WriteAfterRead: return "write-after-read";
        case Hazard::WriteAfterWrite: return "write-after-write";
    }
    return "?";
}

Severity default_severity(DiagKind kind) noexcept {
    switch (kind) {
        case DiagKind::HostUndefined:
        case DiagKind::ConcurrentHazard:
        case DiagKind::DeviceLeak:
            return Severity::Warning;
        default:
            return Severity::Error;
    }
}

}  // namespace memlens
