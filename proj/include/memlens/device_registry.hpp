#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "memlens/types.hpp"

namespace memlens {

class RegistryError : public std::runtime_error {
public:
    enum class Code {
        UnknownContext,
        InvalidArgument,
        OverlapWithLive,
        NotABase,
        DuplicateHandle,
        UnknownHandle,
    };

    RegistryError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Code code() const noexcept { return code_; }

private:
    Code code_;
};

enum class ElementFormat : std::uint8_t { U8, U16, U32, S8, S16, S32, F16, F32 };

std::uint32_t format_bytes(ElementFormat f) noexcept;
std::string_view format_name(ElementFormat f) noexcept;
std::optional<ElementFormat> parse_format(std::string_view name) noexcept;

/// Shape of a device array. height == 0 means 1D, depth == 0 means at most 2D.
struct ArrayDescriptor {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::uint64_t depth = 0;
    ElementFormat format = ElementFormat::U8;
    std::uint32_t channels = 1;

    /// Byte capacity, or nullopt when the descriptor is malformed (zero
    /// width, bad channel count) or its size overflows 64 bits.
    std::optional<std::uint64_t> total_bytes() const noexcept;

    bool operator==(const ArrayDescriptor&) const = default;
};

struct LinearAllocation {
    Address base = 0;
    std::uint64_t size = 0;
    ContextId ctx{};
    TraceLoc site;

    bool operator==(const LinearAllocation&) const = default;
};

struct ArrayAllocation {
    ArrayHandle handle{};
    ArrayDescriptor desc;
    ContextId ctx{};
    TraceLoc site;

    std::uint64_t total_bytes() const noexcept { return desc.total_bytes().value_or(0); }

    bool operator==(const ArrayAllocation&) const = default;
};

enum class Coverage : std::uint8_t { NotAllocated, Covered, Truncated };

struct CoverageResult {
    Coverage status = Coverage::NotAllocated;
    std::uint64_t available_bytes = 0;
    std::optional<Address> region_base;
    std::optional<TraceLoc> region_site;
};

struct LiveAllocations {
    std::vector<LinearAllocation> linear;  // by base
    std::vector<ArrayAllocation> arrays;   // by handle

    std::size_t size() const noexcept { return linear.size() + arrays.size(); }
};

/// Per-context lists of linear device regions and device arrays.
class DeviceRegistry {
public:
    /// Context ids start at 1 and are never reused.
    ContextId create_context();
    void destroy_context(ContextId ctx);
    bool has_context(ContextId ctx) const noexcept { return contexts_.contains(ctx); }
    std::vector<ContextId> contexts() const;

    void register_linear(ContextId ctx, Address base, std::uint64_t size, TraceLoc site);

    /// `base` must be exactly the base of a live allocation in `ctx`.
    LinearAllocation unregister_linear(ContextId ctx, Address base);

    /// Coverage is anchored on the region containing `start`: a range that
    /// runs into a neighbouring allocation is still Truncated at the end of
    /// the first one.
    CoverageResult coverage(ContextId ctx, Address start, std::uint64_t len) const;

    /// Lowest-numbered live context other than `except` with a linear
    /// allocation containing `addr`.
    std::optional<ContextId> linear_owner(Address addr, ContextId except) const;

    void register_array(ContextId ctx, ArrayHandle handle, const ArrayDescriptor& desc, TraceLoc site);
    ArrayAllocation unregister_array(ContextId ctx, ArrayHandle handle);
    std::optional<ArrayAllocation> array_lookup(ContextId ctx, ArrayHandle handle) const;
    std::optional<ContextId> array_owner(ArrayHandle handle) const;

    LiveAllocations live_allocations(ContextId ctx) const;

    /// Bytes held by live linear allocations and arrays of `ctx`.
    std::uint64_t live_bytes(ContextId ctx) const;

    bool operator==(const DeviceRegistry&) const = default;

private:
    struct ContextLists {
        std::map<Address, LinearAllocation> linear;
        std::map<ArrayHandle, ArrayAllocation> arrays;

        bool operator==(const ContextLists&) const = default;
    };

    ContextLists& lists(ContextId ctx);
    const ContextLists& lists(ContextId ctx) const;

    std::map<ContextId, ContextLists> contexts_;
    std::uint32_t next_context_ = 1;
};

}  // namespace memlens
