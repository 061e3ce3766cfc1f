#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "memlens/checker.hpp"

namespace memlens {

enum class DriverStatus : std::uint8_t { Success, InvalidValue, InvalidContext, OutOfMemory, NotInitialized };

std::string_view status_name(DriverStatus s) noexcept;

inline constexpr Address kDeviceHeapBase = 0x0100'0000;
inline constexpr std::uint64_t kDeviceAlignment = 256;
inline constexpr Address kHostHeapBase = 0x4000'0000;
inline constexpr std::uint64_t kHostAlignment = 16;
inline constexpr std::uint64_t kDefaultDeviceCapacity = std::uint64_t{1} << 30;

struct DriverConfig {
    /// Upper bound on live device bytes (linear + arrays) per context.
    std::uint64_t device_capacity = kDefaultDeviceCapacity;
    bool leak_check = true;
    CheckOptions check;
};

/// Who is calling: thread, call-site backtrace and an optional explicit
/// context that overrides the thread's current one for this call only.
struct CallSite {
    ThreadId thread = 1;
    TraceLoc loc;
    std::optional<ContextId> ctx;
};

template <typename T>
struct DriverResult {
    T value{};
    DriverStatus status = DriverStatus::Success;
};

/// Emulated driver API. Every memory-related entry point runs the checker
/// before touching simulator state, and collects the diagnostics.
class Driver {
public:
    explicit Driver(DriverConfig config = {});

    DriverResult<ContextId> ctx_create(const CallSite& call);
    DriverStatus ctx_destroy(const CallSite& call);
    DriverStatus ctx_set_current(const CallSite& call, ContextId ctx);
    DriverStatus ctx_synchronize(const CallSite& call);

    DriverResult<Address> mem_alloc(const CallSite& call, std::uint64_t size);
    DriverStatus mem_free(const CallSite& call, Address ptr);

    DriverResult<ArrayHandle> array_create(const CallSite& call, const ArrayDescriptor& desc);
    DriverStatus array_destroy(const CallSite& call, ArrayHandle handle);

    DriverStatus memcpy_htod(const CallSite& call, Address dst, Address src_host, std::uint64_t len);
    DriverStatus memcpy_dtoh(const CallSite& call, Address dst_host, Address src, std::uint64_t len);
    DriverStatus memcpy_dtod(const CallSite& call, Address dst, Address src, std::uint64_t len);
    DriverStatus memcpy_htoa(const CallSite& call, ArrayHandle dst, std::uint64_t offset, Address src_host,
                             std::uint64_t len);
    DriverStatus memcpy_atoh(const CallSite& call, Address dst_host, ArrayHandle src, std::uint64_t offset,
                             std::uint64_t len);

    /// Emulated host heap. host_alloc(0) returns 0.
    Address host_alloc(const CallSite& call, std::uint64_t size);
    /// Stores `len` bytes. Without `vbits` the bytes become fully defined,
    /// otherwise their V-bits are set from `vbits` (set bit = undefined).
    void host_write(const CallSite& call, Address addr, std::uint64_t len,
                    std::optional<std::span<const std::uint8_t>> vbits = std::nullopt);
    /// host_free(0) is a no-op.
    DriverStatus host_free(const CallSite& call, Address addr);

    /// End of program: leak report for every live context (if enabled).
    void finish();

    const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }
    std::size_t diagnostic_count() const noexcept { return diagnostics_.size(); }

    const DeviceRegistry& registry() const noexcept { return registry_; }
    const ShadowMap& host_shadow() const noexcept { return host_; }
    const DeviceSpace* device_space(ContextId ctx) const;
    std::optional<ContextId> current_context(ThreadId thread) const;
    const DriverConfig& config() const noexcept { return config_; }

private:
    std::optional<ContextId> resolve(const CallSite& call) const;
    /// Status for a call without a usable context: NotInitialized until the
    /// first context has been created, InvalidContext afterwards.
    DriverStatus no_context() const;
    DriverStatus emit(std::vector<Diagnostic> diags);
    Diagnostic invalid_free(const CallSite& call, Target target, std::uint64_t address,
                            std::optional<ContextId> hint) const;
    TransferEnv env(const CallSite& call, ContextId ctx);

    DriverConfig config_;
    DeviceRegistry registry_;
    ShadowMap host_;
    std::map<Address, std::uint64_t> host_blocks_;
    Address host_cursor_ = kHostHeapBase;
    std::map<ContextId, DeviceSpace> devices_;
    std::map<ContextId, Address> device_cursor_;
    std::map<ThreadId, ContextId> current_;
    std::uint64_t next_array_ = 1;
    bool initialized_ = false;
    std::vector<Diagnostic> diagnostics_;
};

}  // namespace memlens
