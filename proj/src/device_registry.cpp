#include "memlens/device_registry.hpp"

#include <array>
#include <limits>
#include <sstream>

namespace memlens {

namespace {

struct FormatInfo {
    ElementFormat format;
    std::string_view name;
    std::uint32_t bytes;
};

constexpr std::array<FormatInfo, 8> kFormats{{
    {ElementFormat::U8, "u8", 1},
    {ElementFormat::U16, "u16", 2},
    {ElementFormat::U32, "u32", 4},
    {ElementFormat::S8, "s8", 1},
    {ElementFormat::S16, "s16", 2},
    {ElementFormat::S32, "s32", 4},
    {ElementFormat::F16, "f16", 2},
    {ElementFormat::F32, "f32", 4},
}};

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return false;
    out = a * b;
    return true;
}

}  // namespace

std::uint32_t format_bytes(ElementFormat f) noexcept {
    return kFormats[static_cast<std::size_t>(f)].bytes;
}

std::string_view format_name(ElementFormat f) noexcept {
    return kFormats[static_cast<std::size_t>(f)].name;
}

std::optional<ElementFormat> parse_format(std::string_view name) noexcept {
    for (const auto& info : kFormats) {
        if (info.name == name) return info.format;
    }
    return std::nullopt;
}

std::optional<std::uint64_t> ArrayDescriptor::total_bytes() const noexcept {
    if (width == 0) return std::nullopt;
    if (channels != 1 && channels != 2 && channels != 4) return std::nullopt;
    std::uint64_t total = width;
    for (std::uint64_t factor : {std::max<std::uint64_t>(height, 1), std::max<std::uint64_t>(depth, 1),
                                 std::uint64_t{format_bytes(format)}, std::uint64_t{channels}}) {
        if (!checked_mul(total, factor, total)) return std::nullopt;
    }
    return total;
}

ContextId DeviceRegistry::create_context() {
    const ContextId id{next_context_++};
    contexts_.emplace(id, ContextLists{});
    return id;
}

void DeviceRegistry::destroy_context(ContextId ctx) {
    if (contexts_.erase(ctx) == 0) {
        throw RegistryError(RegistryError::Code::UnknownContext,
                            "unknown context " + std::to_string(to_underlying(ctx)));
    }
}

std::vector<ContextId> DeviceRegistry::contexts() const {
    std::vector<ContextId> out;
    out.reserve(contexts_.size());
    for (const auto& entry : contexts_) out.push_back(entry.first);
    return out;
}

DeviceRegistry::ContextLists& DeviceRegistry::lists(ContextId ctx) {
    auto it = contexts_.find(ctx);
    if (it == contexts_.end()) {
        throw RegistryError(RegistryError::Code::UnknownContext,
                            "unknown context " + std::to_string(to_underlying(ctx)));
    }
    return it->second;
}

const DeviceRegistry::ContextLists& DeviceRegistry::lists(ContextId ctx) const {
    return const_cast<DeviceRegistry*>(this)->lists(ctx);
}

void DeviceRegistry::register_linear(ContextId ctx, Address base, std::uint64_t size, TraceLoc site) {
    auto& linear = lists(ctx).linear;
    if (size == 0 || base == 0 || size > std::numeric_limits<Address>::max() - base) {
        throw RegistryError(RegistryError::Code::InvalidArgument,
                            "bad linear allocation " + hex(base) + " size " + std::to_string(size));
    }
    const Address end = base + size;
    auto next = linear.lower_bound(base);
    if (next != linear.end() && next->first < end) {
        throw RegistryError(RegistryError::Code::OverlapWithLive,
                            "allocation at " + hex(base) + " overlaps " + hex(next->first));
    }
    if (next != linear.begin()) {
        const auto& prev = std::prev(next)->second;
        if (prev.base + prev.size > base) {
            throw RegistryError(RegistryError::Code::OverlapWithLive,
                                "allocation at " + hex(base) + " overlaps " + hex(prev.base));
        }
    }
    linear.emplace(base, LinearAllocation{base, size, ctx, std::move(site)});
}

LinearAllocation DeviceRegistry::unregister_linear(ContextId ctx, Address base) {
    auto& linear = lists(ctx).linear;
    auto it = linear.find(base);
    if (it == linear.end()) {
        throw RegistryError(RegistryError::Code::NotABase,
                            hex(base) + " is not the base of a live allocation");
    }
    LinearAllocation out = std::move(it->second);
    linear.erase(it);
    return out;
}

CoverageResult DeviceRegistry::coverage(ContextId ctx, Address start, std::uint64_t len) const {
    const auto& linear = lists(ctx).linear;
    CoverageResult result;
    auto it = linear.upper_bound(start);
    if (it == linear.begin()) return result;
    const auto& region = std::prev(it)->second;
    const Address end = region.base + region.size;
    if (start >= end) return result;

    result.available_bytes = end - start;
    result.region_base = region.base;
    result.region_site = region.site;
    result.status = result.available_bytes >= len ? Coverage::Covered : Coverage::Truncated;
    return result;
}

std::optional<ContextId> DeviceRegistry::linear_owner(Address addr, ContextId except) const {
    for (const auto& [ctx, entry] : contexts_) {
        if (ctx == except) continue;
        auto it = entry.linear.upper_bound(addr);
        if (it == entry.linear.begin()) continue;
        const auto& region = std::prev(it)->second;
        if (addr - region.base < region.size) return ctx;
    }
    return std::nullopt;
}

void DeviceRegistry::register_array(ContextId ctx, ArrayHandle handle, const ArrayDescriptor& desc,
                                    TraceLoc site) {
    auto& arrays = lists(ctx).arrays;
    if (!desc.total_bytes() || *desc.total_bytes() == 0) {
        throw RegistryError(RegistryError::Code::InvalidArgument, "malformed array descriptor");
    }
    if (array_owner(handle)) {
        throw RegistryError(RegistryError::Code::DuplicateHandle,
                            "array handle " + hex(to_underlying(handle)) + " already live");
    }
    arrays.emplace(handle, ArrayAllocation{handle, desc, ctx, std::move(site)});
}

ArrayAllocation DeviceRegistry::unregister_array(ContextId ctx, ArrayHandle handle) {
    auto& arrays = lists(ctx).arrays;
    auto it = arrays.find(handle);
    if (it == arrays.end()) {
        throw RegistryError(RegistryError::Code::UnknownHandle,
                            "unknown array handle " + hex(to_underlying(handle)));
    }
    ArrayAllocation out = std::move(it->second);
    arrays.erase(it);
    return out;
}

std::optional<ArrayAllocation> DeviceRegistry::array_lookup(ContextId ctx, ArrayHandle handle) const {
    const auto& arrays = lists(ctx).arrays;
    auto it = arrays.find(handle);
    if (it == arrays.end()) return std::nullopt;
    return it->second;
}

std::optional<ContextId> DeviceRegistry::array_owner(ArrayHandle handle) const {
    for (const auto& [ctx, entry] : contexts_) {
        if (entry.arrays.contains(handle)) return ctx;
    }
    return std::nullopt;
}

LiveAllocations DeviceRegistry::live_allocations(ContextId ctx) const {
    const auto& entry = lists(ctx);
    LiveAllocations out;
    for (const auto& [base, alloc] : entry.linear) out.linear.push_back(alloc);
    for (const auto& [handle, alloc] : entry.arrays) out.arrays.push_back(alloc);
    return out;
}

std::uint64_t DeviceRegistry::live_bytes(ContextId ctx) const {
    const auto& entry = lists(ctx);
    std::uint64_t total = 0;
    for (const auto& [base, alloc] : entry.linear) total += alloc.size;
    for (const auto& [handle, alloc] : entry.arrays) total += alloc.total_bytes();
    return total;
}

}  // namespace memlens
