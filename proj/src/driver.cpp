#include "memlens/driver.hpp"

#include <algorithm>
#include <limits>

namespace memlens {

namespace {

std::optional<Address> bump(Address cursor, std::uint64_t size, std::uint64_t align) {
    constexpr Address kMax = std::numeric_limits<Address>::max();
    if (size > kMax - cursor) return std::nullopt;
    const Address end = cursor + size;
    if (end > kMax - (align - 1)) return std::nullopt;
    return (end + align - 1) / align * align;
}

}  // namespace

std::string_view status_name(DriverStatus s) noexcept {
    switch (s) {
        case DriverStatus::Success: return "Success";
        case DriverStatus::InvalidValue: return "InvalidValue";
        case DriverStatus::InvalidContext: return "InvalidContext";
        case DriverStatus::OutOfMemory: return "OutOfMemory";
        case DriverStatus::NotInitialized: return "NotInitialized";
    }
    return "?";
}

Driver::Driver(DriverConfig config) : config_(config) {}

std::optional<ContextId> Driver::resolve(const CallSite& call) const {
    if (call.ctx) {
        if (registry_.has_context(*call.ctx)) return call.ctx;
        return std::nullopt;
    }
    return current_context(call.thread);
}

std::optional<ContextId> Driver::current_context(ThreadId thread) const {
    auto it = current_.find(thread);
    if (it == current_.end()) return std::nullopt;
    return it->second;
}

const DeviceSpace* Driver::device_space(ContextId ctx) const {
    auto it = devices_.find(ctx);
    return it == devices_.end() ? nullptr : &it->second;
}

DriverStatus Driver::emit(std::vector<Diagnostic> diags) {
    const bool failed = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.is_error(); });
    for (auto& d : diags) diagnostics_.push_back(std::move(d));
    return failed ? DriverStatus::InvalidValue : DriverStatus::Success;
}

Diagnostic Driver::invalid_free(const CallSite& call, Target target, std::uint64_t address,
                                std::optional<ContextId> hint) const {
    Diagnostic d;
    d.kind = DiagKind::InvalidFree;
    d.severity = default_severity(DiagKind::InvalidFree);
    d.target = target;
    d.address = address;
    d.other_context = hint;
    d.thread = call.thread;
    d.frames = call.loc.frames;
    return d;
}

TransferEnv Driver::env(const CallSite& call, ContextId ctx) {
    return TransferEnv{ctx, call.thread, call.loc, registry_, host_, devices_.at(ctx), config_.check};
}

DriverStatus Driver::no_context() const {
    return initialized_ ? DriverStatus::InvalidContext : DriverStatus::NotInitialized;
}

DriverResult<ContextId> Driver::ctx_create(const CallSite& call) {
    const ContextId id = registry_.create_context();
    devices_.emplace(id, DeviceSpace{});
    device_cursor_.emplace(id, kDeviceHeapBase);
    initialized_ = true;
    current_[call.thread] = id;
    return {id, DriverStatus::Success};
}

DriverStatus Driver::ctx_destroy(const CallSite& call) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    if (config_.leak_check) emit(leak_report(registry_, *ctx, call.thread));
    registry_.destroy_context(*ctx);
    devices_.erase(*ctx);
    device_cursor_.erase(*ctx);
    std::erase_if(current_, [&](const auto& entry) { return entry.second == *ctx; });
    return DriverStatus::Success;
}

DriverStatus Driver::ctx_set_current(const CallSite& call, ContextId ctx) {
    if (!registry_.has_context(ctx)) return no_context();
    current_[call.thread] = ctx;
    return DriverStatus::Success;
}

DriverStatus Driver::ctx_synchronize(const CallSite& call) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    devices_.at(*ctx).access.synchronize();
    return DriverStatus::Success;
}

DriverResult<Address> Driver::mem_alloc(const CallSite& call, std::uint64_t size) {
    auto fail = [](DriverStatus s) { return DriverResult<Address>{0, s}; };
    const auto ctx = resolve(call);
    if (!ctx) return fail(no_context());
    if (size == 0) return fail(DriverStatus::InvalidValue);
    const std::uint64_t live = registry_.live_bytes(*ctx);
    if (size > config_.device_capacity || live > config_.device_capacity - size) {
        return fail(DriverStatus::OutOfMemory);
    }
    Address& cursor = device_cursor_.at(*ctx);
    const auto next = bump(cursor, size, kDeviceAlignment);
    if (!next) return fail(DriverStatus::OutOfMemory);

    const Address base = cursor;
    registry_.register_linear(*ctx, base, size, call.loc);
    devices_.at(*ctx).linear.mark_addressable(base, size, false);
    cursor = *next;
    return {base, DriverStatus::Success};
}

DriverStatus Driver::mem_free(const CallSite& call, Address ptr) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    const auto cov = registry_.coverage(*ctx, ptr, 0);
    if (cov.status == Coverage::NotAllocated || *cov.region_base != ptr) {
        const auto hint = cov.status == Coverage::NotAllocated ? registry_.linear_owner(ptr, *ctx) : std::nullopt;
        return emit({invalid_free(call, Target::Device, ptr, hint)});
    }
    const LinearAllocation freed = registry_.unregister_linear(*ctx, ptr);
    DeviceSpace& space = devices_.at(*ctx);
    space.linear.mark_unaddressable(freed.base, freed.size);
    space.access.drop(RegionKey{false, freed.base});
    return DriverStatus::Success;
}

DriverResult<ArrayHandle> Driver::array_create(const CallSite& call, const ArrayDescriptor& desc) {
    auto fail = [](DriverStatus s) { return DriverResult<ArrayHandle>{ArrayHandle{0}, s}; };
    const auto ctx = resolve(call);
    if (!ctx) return fail(no_context());
    const auto total = desc.total_bytes();
    if (!total) return fail(DriverStatus::InvalidValue);
    const std::uint64_t live = registry_.live_bytes(*ctx);
    if (*total > config_.device_capacity || live > config_.device_capacity - *total) {
        return fail(DriverStatus::OutOfMemory);
    }
    const ArrayHandle handle{next_array_++};
    registry_.register_array(*ctx, handle, desc, call.loc);
    devices_.at(*ctx).arrays[handle].mark_addressable(0, *total, false);
    return {handle, DriverStatus::Success};
}

DriverStatus Driver::array_destroy(const CallSite& call, ArrayHandle handle) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    if (!registry_.array_lookup(*ctx, handle)) {
        return emit({invalid_free(call, Target::Array, to_underlying(handle), registry_.array_owner(handle))});
    }
    registry_.unregister_array(*ctx, handle);
    DeviceSpace& space = devices_.at(*ctx);
    space.arrays.erase(handle);
    space.access.drop(RegionKey{true, to_underlying(handle)});
    return DriverStatus::Success;
}

DriverStatus Driver::memcpy_htod(const CallSite& call, Address dst, Address src_host, std::uint64_t len) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    TransferEnv e = env(call, *ctx);
    return emit(check_htod(e, dst, src_host, len));
}

DriverStatus Driver::memcpy_dtoh(const CallSite& call, Address dst_host, Address src, std::uint64_t len) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    TransferEnv e = env(call, *ctx);
    return emit(check_dtoh(e, dst_host, src, len));
}

DriverStatus Driver::memcpy_dtod(const CallSite& call, Address dst, Address src, std::uint64_t len) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    TransferEnv e = env(call, *ctx);
    return emit(check_dtod(e, dst, src, len));
}

DriverStatus Driver::memcpy_htoa(const CallSite& call, ArrayHandle dst, std::uint64_t offset,
                                 Address src_host, std::uint64_t len) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    TransferEnv e = env(call, *ctx);
    return emit(check_array_transfer(e, TransferKind::HtoA, dst, offset, src_host, len));
}

DriverStatus Driver::memcpy_atoh(const CallSite& call, Address dst_host, ArrayHandle src,
                                 std::uint64_t offset, std::uint64_t len) {
    const auto ctx = resolve(call);
    if (!ctx) return no_context();
    TransferEnv e = env(call, *ctx);
    return emit(check_array_transfer(e, TransferKind::AtoH, src, offset, dst_host, len));
}

Address Driver::host_alloc(const CallSite&, std::uint64_t size) {
    if (size == 0) return 0;
    const auto next = bump(host_cursor_, size, kHostAlignment);
    if (!next) return 0;
    const Address base = host_cursor_;
    host_.mark_addressable(base, size, false);
    host_blocks_.emplace(base, size);
    host_cursor_ = *next;
    return base;
}

void Driver::host_write(const CallSite& call, Address addr, std::uint64_t len,
                        std::optional<std::span<const std::uint8_t>> vbits) {
    if (auto bad = first_unaddressable(host_, addr, len)) {
        Diagnostic d;
        d.kind = DiagKind::HostUnaddressable;
        d.severity = default_severity(d.kind);
        d.target = Target::Host;
        d.address = addr;
        d.length = len;
        d.offset = *bad;
        d.thread = call.thread;
        d.frames = call.loc.frames;
        emit({std::move(d)});
        return;
    }
    if (vbits) {
        if (vbits->size() != len) throw std::invalid_argument("host_write: vbits length mismatch");
        host_.write_vbits(addr, *vbits);
    } else {
        host_.fill_vbits(addr, len, kVbitsDefined);
    }
}

DriverStatus Driver::host_free(const CallSite& call, Address addr) {
    if (addr == 0) return DriverStatus::Success;
    auto it = host_blocks_.find(addr);
    if (it == host_blocks_.end()) return emit({invalid_free(call, Target::Host, addr, std::nullopt)});
    host_.mark_unaddressable(it->first, it->second);
    host_blocks_.erase(it);
    return DriverStatus::Success;
}

void Driver::finish() {
    if (!config_.leak_check) return;
    for (ContextId ctx : registry_.contexts()) emit(leak_report(registry_, ctx, 0));
}

}  // namespace memlens
