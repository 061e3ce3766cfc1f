#include "memlens/checker.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace memlens {

std::optional<Hazard> classify_access(const AccessStamp& previous, const AccessStamp& incoming,
                                      bool overlap) noexcept {
    if (!overlap || previous.thread == incoming.thread || previous.synced_after) return std::nullopt;
    if (previous.is_write && incoming.is_write) return Hazard::WriteAfterWrite;
    if (previous.is_write) return Hazard::ReadAfterWrite;
    if (incoming.is_write) return Hazard::WriteAfterRead;
    return std::nullopt;
}

const RangeStamp* AccessLog::most_recent_overlap(RegionKey key, Address lo, Address hi) const {
    auto it = regions_.find(key);
    if (it == regions_.end() || lo >= hi) return nullptr;
    const auto& stamps = it->second;
    for (auto s = stamps.rbegin(); s != stamps.rend(); ++s) {
        if (s->lo < hi && lo < s->hi) return &*s;
    }
    return nullptr;
}

std::optional<HazardHit> AccessLog::check(RegionKey key, Address lo, Address hi, ThreadId thread,
                                          bool is_write) const {
    const RangeStamp* prev = most_recent_overlap(key, lo, hi);
    if (!prev) return std::nullopt;
    const AccessStamp incoming{thread, next_seq_, is_write, false};
    if (auto hazard = classify_access(prev->stamp, incoming, true)) {
        return HazardHit{*hazard, prev->stamp.thread};
    }
    return std::nullopt;
}

void AccessLog::record(RegionKey key, Address lo, Address hi, ThreadId thread, bool is_write) {
    if (lo >= hi) return;
    auto& stamps = regions_[key];
    // A stamp lying entirely inside the new one can never again be the most
    // recent overlap of any range.
    std::erase_if(stamps, [&](const RangeStamp& s) { return lo <= s.lo && s.hi <= hi; });
    stamps.push_back(RangeStamp{AccessStamp{thread, next_seq_++, is_write, false}, lo, hi});
}

void AccessLog::synchronize() {
    for (auto& [key, stamps] : regions_) {
        for (auto& s : stamps) s.stamp.synced_after = true;
    }
}

std::span<const RangeStamp> AccessLog::history(RegionKey key) const {
    auto it = regions_.find(key);
    if (it == regions_.end()) return {};
    return it->second;
}

std::optional<std::uint64_t> first_unaddressable(const ShadowMap& map, Address start, std::uint64_t len) {
    const std::uint64_t room = std::numeric_limits<Address>::max() - start;
    if (len > room) {
        if (auto bad = map.check_addressable(start, room)) return bad;
        return room;
    }
    return map.check_addressable(start, len);
}

namespace {

enum class Role { Src, Dst };

class TransferCheck {
public:
    TransferCheck(TransferEnv& env, TransferKind kind) : env_(env), kind_(kind) {}

    Diagnostic make(DiagKind kind) const {
        Diagnostic d;
        d.kind = kind;
        d.severity = default_severity(kind);
        d.transfer = kind_;
        d.thread = env_.thread;
        d.frames = env_.loc.frames;
        return d;
    }

    // Registry check for one linear device endpoint. Returns the containing
    // region when the whole range is covered.
    std::optional<RegionKey> device_endpoint(Role role, Address addr, std::uint64_t len) {
        const CoverageResult cov = env_.registry.coverage(env_.ctx, addr, len);
        if (cov.status == Coverage::Covered) return RegionKey{false, *cov.region_base};

        Diagnostic d;
        if (cov.status == Coverage::NotAllocated) {
            d = make(role == Role::Src ? DiagKind::SrcNotAllocated : DiagKind::DstNotAllocated);
            d.other_context = env_.registry.linear_owner(addr, env_.ctx);
        } else {
            d = make(role == Role::Src ? DiagKind::SrcTooSmall : DiagKind::DstTooSmall);
            d.expected_bytes = len;
            d.found_bytes = cov.available_bytes;
        }
        d.target = Target::Device;
        d.address = addr;
        diags_.push_back(std::move(d));
        return std::nullopt;
    }

    std::optional<RegionKey> array_endpoint(Role role, ArrayHandle handle, std::uint64_t offset,
                                            std::uint64_t len) {
        const auto array = env_.registry.array_lookup(env_.ctx, handle);
        Diagnostic d;
        if (!array) {
            d = make(role == Role::Src ? DiagKind::SrcNotAllocated : DiagKind::DstNotAllocated);
            d.other_context = env_.registry.array_owner(handle);
        } else {
            const std::uint64_t total = array->total_bytes();
            if (len == 0 || (offset <= total && len <= total - offset)) {
                return RegionKey{true, to_underlying(handle)};
            }
            d = make(role == Role::Src ? DiagKind::SrcTooSmall : DiagKind::DstTooSmall);
            d.expected_bytes = len;
            d.found_bytes = total - std::min(offset, total);
        }
        d.target = Target::Array;
        d.address = to_underlying(handle);
        diags_.push_back(std::move(d));
        return std::nullopt;
    }

    bool host_addressable(Address addr, std::uint64_t len) {
        if (auto bad = first_unaddressable(env_.host, addr, len)) {
            Diagnostic d = make(DiagKind::HostUnaddressable);
            d.target = Target::Host;
            d.address = addr;
            d.length = len;
            d.offset = *bad;
            diags_.push_back(std::move(d));
            return false;
        }
        return true;
    }

    void host_source(Address addr, std::uint64_t len) {
        if (!host_addressable(addr, len)) return;
        const DefinednessReport report = env_.host.check_defined(addr, len);
        if (report.fully_defined) return;
        Diagnostic d = make(DiagKind::HostUndefined);
        if (env_.options.undef_is_error) d.severity = Severity::Error;
        d.target = Target::Host;
        d.address = addr;
        d.length = len;
        d.offset = report.first_undefined_offset;
        d.undefined_bytes = report.undefined_byte_count;
        diags_.push_back(std::move(d));
    }

    bool has_error() const {
        return std::any_of(diags_.begin(), diags_.end(), [](const Diagnostic& d) { return d.is_error(); });
    }

    // Concurrency check and stamp for an applied access. For arrays `lo` is
    // an offset inside the array.
    void access(RegionKey key, Address lo, std::uint64_t len, bool is_write) {
        if (len == 0) return;
        const Address hi = lo + len;
        if (auto hit = env_.device.access.check(key, lo, hi, env_.thread, is_write)) {
            Diagnostic d = make(DiagKind::ConcurrentHazard);
            d.length = len;
            if (key.is_array) {
                d.target = Target::Array;
                d.address = key.id;
                d.offset = lo;
            } else {
                d.target = Target::Device;
                d.address = lo;
            }
            d.other_thread = hit->other_thread;
            d.hazard = hit->hazard;
            diags_.push_back(std::move(d));
        }
        env_.device.access.record(key, lo, hi, env_.thread, is_write);
    }

    ShadowMap& array_shadow(ArrayHandle handle) {
        auto it = env_.device.arrays.find(handle);
        if (it == env_.device.arrays.end()) {
            throw std::logic_error("live array without a shadow");
        }
        return it->second;
    }

    std::vector<Diagnostic> take() { return std::move(diags_); }

private:
    TransferEnv& env_;
    TransferKind kind_;
    std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> check_htod(TransferEnv& env, Address dst, Address src, std::uint64_t len) {
    TransferCheck check(env, TransferKind::HtoD);
    const auto region = check.device_endpoint(Role::Dst, dst, len);
    check.host_source(src, len);
    if (check.has_error()) return check.take();

    copy_vbits(env.host, src, env.device.linear, dst, len);
    check.access(*region, dst, len, true);
    return check.take();
}

std::vector<Diagnostic> check_dtoh(TransferEnv& env, Address dst, Address src, std::uint64_t len) {
    TransferCheck check(env, TransferKind::DtoH);
    const auto region = check.device_endpoint(Role::Src, src, len);
    check.host_addressable(dst, len);
    if (check.has_error()) return check.take();

    copy_vbits(env.device.linear, src, env.host, dst, len);
    check.access(*region, src, len, false);
    return check.take();
}

std::vector<Diagnostic> check_dtod(TransferEnv& env, Address dst, Address src, std::uint64_t len) {
    TransferCheck check(env, TransferKind::DtoD);
    const auto src_region = check.device_endpoint(Role::Src, src, len);
    const auto dst_region = check.device_endpoint(Role::Dst, dst, len);
    if (check.has_error()) return check.take();

    copy_vbits(env.device.linear, src, env.device.linear, dst, len);
    check.access(*src_region, src, len, false);
    check.access(*dst_region, dst, len, true);
    return check.take();
}

std::vector<Diagnostic> check_array_transfer(TransferEnv& env, TransferKind kind, ArrayHandle handle,
                                             std::uint64_t array_offset, Address host_addr,
                                             std::uint64_t len) {
    if (kind != TransferKind::HtoA && kind != TransferKind::AtoH) {
        throw std::invalid_argument("array transfer must be HtoA or AtoH");
    }
    TransferCheck check(env, kind);
    const bool to_array = kind == TransferKind::HtoA;
    const auto region = check.array_endpoint(to_array ? Role::Dst : Role::Src, handle, array_offset, len);
    if (to_array) {
        check.host_source(host_addr, len);
    } else {
        check.host_addressable(host_addr, len);
    }
    if (check.has_error()) return check.take();

    ShadowMap& shadow = check.array_shadow(handle);
    if (to_array) {
        copy_vbits(env.host, host_addr, shadow, array_offset, len);
    } else {
        copy_vbits(shadow, array_offset, env.host, host_addr, len);
    }
    check.access(*region, array_offset, len, to_array);
    return check.take();
}

std::vector<Diagnostic> leak_report(const DeviceRegistry& registry, ContextId ctx, ThreadId reporter) {
    const LiveAllocations live = registry.live_allocations(ctx);
    std::vector<Diagnostic> out;
    out.reserve(live.size());
    auto leak = [&](Target target, std::uint64_t address, std::uint64_t bytes, const TraceLoc& site) {
        Diagnostic d;
        d.kind = DiagKind::DeviceLeak;
        d.severity = default_severity(DiagKind::DeviceLeak);
        d.target = target;
        d.address = address;
        d.length = bytes;
        d.thread = reporter;
        d.frames = site.frames;
        out.push_back(std::move(d));
    };
    for (const auto& a : live.linear) leak(Target::Device, a.base, a.size, a.site);
    for (const auto& a : live.arrays) leak(Target::Array, to_underlying(a.handle), a.total_bytes(), a.site);
    return out;
}

}  // namespace memlens
