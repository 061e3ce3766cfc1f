#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "memlens/device_registry.hpp"
#include "memlens/diagnostic.hpp"
#include "memlens/shadow_memory.hpp"

namespace memlens {

struct AccessStamp {
    ThreadId thread = 0;
    std::uint64_t seq = 0;
    bool is_write = false;
    bool synced_after = false;

    bool operator==(const AccessStamp&) const = default;
};

/// The concurrency rule: a hazard exists iff the ranges overlap, the
/// threads differ, no synchronization happened after `previous`, and at
/// least one of the two accesses writes.
std::optional<Hazard> classify_access(const AccessStamp& previous, const AccessStamp& incoming,
                                      bool overlap) noexcept;

/// A device region whose accesses are stamped: a linear allocation (keyed
/// by base address) or a device array (keyed by handle).
struct RegionKey {
    bool is_array = false;
    std::uint64_t id = 0;

    auto operator<=>(const RegionKey&) const = default;
};

struct RangeStamp {
    AccessStamp stamp;
    Address lo = 0;  // [lo, hi)
    Address hi = 0;

    bool operator==(const RangeStamp&) const = default;
};

struct HazardHit {
    Hazard hazard;
    ThreadId other_thread;
};

/// Access history for the regions of one context.
class AccessLog {
public:
    /// Most recent recorded stamp in `key` overlapping [lo, hi).
    const RangeStamp* most_recent_overlap(RegionKey key, Address lo, Address hi) const;

    std::optional<HazardHit> check(RegionKey key, Address lo, Address hi, ThreadId thread,
                                   bool is_write) const;

    void record(RegionKey key, Address lo, Address hi, ThreadId thread, bool is_write);

    /// Marks every recorded stamp as followed by a synchronization.
    void synchronize();

    void drop(RegionKey key) { regions_.erase(key); }

    std::span<const RangeStamp> history(RegionKey key) const;

    bool operator==(const AccessLog&) const = default;

private:
    std::map<RegionKey, std::vector<RangeStamp>> regions_;
    std::uint64_t next_seq_ = 1;
};

/// Device-side shadow state of one context.
struct DeviceSpace {
    ShadowMap linear;
    std::map<ArrayHandle, ShadowMap> arrays;  // offsets within the array
    AccessLog access;

    bool operator==(const DeviceSpace&) const = default;
};

struct CheckOptions {
    bool undef_is_error = false;
};

/// Everything one transfer check reads or updates.
struct TransferEnv {
    ContextId ctx{};
    ThreadId thread = 0;
    const TraceLoc& loc;
    const DeviceRegistry& registry;
    ShadowMap& host;
    DeviceSpace& device;
    CheckOptions options;
};

// Each check_* call emits its diagnostics in a fixed order (registry,
// then host shadow, then concurrency). When no Error-severity diagnostic
// was emitted the transfer is applied: V-bits are copied and access stamps
// recorded. Otherwise no state is touched.

std::vector<Diagnostic> check_htod(TransferEnv& env, Address dst, Address src, std::uint64_t len);
std::vector<Diagnostic> check_dtoh(TransferEnv& env, Address dst, Address src, std::uint64_t len);
std::vector<Diagnostic> check_dtod(TransferEnv& env, Address dst, Address src, std::uint64_t len);

/// kind must be HtoA or AtoH. The array capacity is its descriptor's
/// total_bytes.
std::vector<Diagnostic> check_array_transfer(TransferEnv& env, TransferKind kind, ArrayHandle handle,
                                             std::uint64_t array_offset, Address host_addr,
                                             std::uint64_t len);

/// One DeviceLeak warning per live allocation of `ctx`, linear regions by
/// base followed by arrays by handle.
std::vector<Diagnostic> leak_report(const DeviceRegistry& registry, ContextId ctx, ThreadId reporter);

/// Lowest unaddressable offset in a host range. Ranges running past the
/// top of the address space are unaddressable from the overflow point on.
std::optional<std::uint64_t> first_unaddressable(const ShadowMap& map, Address start, std::uint64_t len);

}  // namespace memlens
