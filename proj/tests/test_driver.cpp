#include <random>

#include "doctest.h"
#include "memlens/driver.hpp"

using namespace memlens;

namespace {

CallSite at(const char* frame, ThreadId t = 1) { return CallSite{t, TraceLoc{{frame}}, std::nullopt}; }

std::size_t count_kind(const Driver& d, DiagKind k) {
    std::size_t n = 0;
    for (const auto& x : d.diagnostics()) n += x.kind == k;
    return n;
}

}  // namespace

TEST_CASE("context lifecycle") {
    Driver d;
    CHECK(d.mem_alloc(at("early"), 16).status == DriverStatus::NotInitialized);
    const auto c = d.ctx_create(at("create"));
    CHECK(c.status == DriverStatus::Success);
    CHECK(to_underlying(c.value) == 1);
    CHECK(d.current_context(1) == c.value);
    CHECK(d.mem_alloc(at("alloc"), 64).status == DriverStatus::Success);
    CHECK(d.ctx_destroy(at("destroy")) == DriverStatus::Success);
    CHECK(count_kind(d, DiagKind::DeviceLeak) == 1);
    CHECK(d.ctx_destroy(at("destroy again")) == DriverStatus::InvalidContext);
    CHECK(d.mem_alloc(at("late"), 16).status == DriverStatus::InvalidContext);
    CHECK(d.ctx_set_current(at("set"), c.value) == DriverStatus::InvalidContext);
}

TEST_CASE("explicit context destroy by override") {
    Driver d;
    const auto a = d.ctx_create(at("a")).value;
    const auto b = d.ctx_create(at("b")).value;
    CHECK(d.current_context(1) == b);
    CallSite call = at("destroy a");
    call.ctx = a;
    CHECK(d.ctx_destroy(call) == DriverStatus::Success);
    CHECK(d.current_context(1) == b);
    CHECK(d.ctx_set_current(at("set"), a) == DriverStatus::InvalidContext);
}

TEST_CASE("device allocation") {
    DriverConfig cfg;
    cfg.device_capacity = 1 << 20;
    Driver d(cfg);
    d.ctx_create(at("c"));
    const auto a = d.mem_alloc(at("a"), 1000);
    CHECK(a.status == DriverStatus::Success);
    CHECK(a.value == kDeviceHeapBase);
    const auto b = d.mem_alloc(at("b"), 10);
    CHECK(b.value == kDeviceHeapBase + 1024);
    CHECK(d.mem_alloc(at("zero"), 0).status == DriverStatus::InvalidValue);
    const auto big = d.mem_alloc(at("big"), 2 << 20);
    CHECK(big.status == DriverStatus::OutOfMemory);
    CHECK(big.value == 0);
    CHECK(d.diagnostics().empty());
    // Fresh device memory is undefined.
    CHECK(d.device_space(*d.current_context(1))->linear.undefined_bit_count(a.value, 1000) == 8000);
}

TEST_CASE("vector-sum-sized allocation succeeds under the default capacity") {
    Driver d;
    d.ctx_create(at("c"));
    CHECK(d.mem_alloc(at("main (example01.cu:55)"), 4000000).status == DriverStatus::Success);
}

TEST_CASE("capacity counts live bytes") {
    DriverConfig cfg;
    cfg.device_capacity = 1000;
    Driver d(cfg);
    d.ctx_create(at("c"));
    const auto a = d.mem_alloc(at("a"), 600);
    CHECK(d.mem_alloc(at("b"), 600).status == DriverStatus::OutOfMemory);
    CHECK(d.mem_free(at("free"), a.value) == DriverStatus::Success);
    CHECK(d.mem_alloc(at("b"), 600).status == DriverStatus::Success);
}

TEST_CASE("frees") {
    Driver d;
    d.ctx_create(at("c"));
    const Address p = d.mem_alloc(at("a"), 64).value;
    CHECK(d.mem_free(at("interior"), p + 8) == DriverStatus::InvalidValue);
    CHECK(d.mem_free(at("ok"), p) == DriverStatus::Success);
    CHECK(d.mem_free(at("double"), p) == DriverStatus::InvalidValue);
    REQUIRE(d.diagnostics().size() == 2);
    for (const auto& x : d.diagnostics()) {
        CHECK(x.kind == DiagKind::InvalidFree);
        CHECK(x.severity == Severity::Error);
        CHECK(x.target == Target::Device);
    }
    CHECK(d.diagnostics()[0].address == p + 8);
    CHECK(d.diagnostics()[1].frames.front() == "double");
}

TEST_CASE("free of another context's pointer carries a hint") {
    Driver d;
    const auto a = d.ctx_create(at("a")).value;
    const Address p = d.mem_alloc(at("alloc in a"), 64).value;
    d.ctx_create(at("b"));
    CHECK(d.mem_free(at("free in b"), p) == DriverStatus::InvalidValue);
    REQUIRE(d.diagnostics().size() == 1);
    CHECK(d.diagnostics()[0].other_context == a);
}

TEST_CASE("arrays") {
    Driver d;
    d.ctx_create(at("c"));
    const auto h = d.array_create(at("arr"), ArrayDescriptor{1024, 0, 0, ElementFormat::F32, 1});
    CHECK(h.status == DriverStatus::Success);
    CHECK(d.registry().array_lookup(*d.current_context(1), h.value)->total_bytes() == 4096);
    CHECK(d.array_create(at("bad"), ArrayDescriptor{0, 0, 0, ElementFormat::F32, 1}).status ==
          DriverStatus::InvalidValue);
    CHECK(d.array_destroy(at("destroy"), h.value) == DriverStatus::Success);
    CHECK(d.array_destroy(at("destroy again"), h.value) == DriverStatus::InvalidValue);
    REQUIRE(d.diagnostics().size() == 1);
    CHECK(d.diagnostics()[0].kind == DiagKind::InvalidFree);
    CHECK(d.diagnostics()[0].target == Target::Array);
}

TEST_CASE("the vector sum scenario") {
    Driver d;
    d.ctx_create(at("main (example01.cu:50)"));
    const Address c = d.mem_alloc(at("main (example01.cu:55)"), 4000000).value;
    const Address a = d.mem_alloc(at("main (example01.cu:56)"), 8000000).value;
    const Address b = d.mem_alloc(at("main (example01.cu:57)"), 8000000).value;
    const Address ha = d.host_alloc(at("main (example01.cu:40)"), 8000000);
    const Address hb = d.host_alloc(at("main (example01.cu:41)"), 8000000);
    const Address hc = d.host_alloc(at("main (example01.cu:42)"), 8000000);
    d.host_write(at("main (example01.cu:45)"), ha, 8000000);
    d.host_write(at("main (example01.cu:46)"), hb, 8000000);
    CHECK(d.memcpy_htod(at("main (example01.cu:58)"), a, ha, 8000000) == DriverStatus::Success);
    CHECK(d.memcpy_htod(at("main (example01.cu:59)"), b, hb, 8000000) == DriverStatus::Success);
    CallSite copy{1, TraceLoc{{"cuMemcpyDtoH_v2 (cuMemcpyDtoH.c:58)", "main (example01.cu:60)"}}, std::nullopt};
    CHECK(d.memcpy_dtoh(copy, hc, c, 8000000) == DriverStatus::InvalidValue);
    REQUIRE(d.diagnostics().size() == 1);
    const auto& x = d.diagnostics()[0];
    CHECK(x.kind == DiagKind::SrcTooSmall);
    CHECK(x.expected_bytes == 8000000u);
    CHECK(x.found_bytes == 4000000u);
    CHECK(x.frames.back() == "main (example01.cu:60)");
}

TEST_CASE("zero length copy succeeds") {
    Driver d;
    d.ctx_create(at("c"));
    const Address p = d.mem_alloc(at("a"), 16).value;
    const Address h = d.host_alloc(at("h"), 16);
    CHECK(d.memcpy_htod(at("copy"), p, h, 0) == DriverStatus::Success);
    CHECK(d.diagnostics().empty());
}

TEST_CASE("host heap") {
    Driver d;
    const Address h = d.host_alloc(at("h"), 8);
    CHECK(h == kHostHeapBase);
    CHECK(d.host_alloc(at("zero"), 0) == 0);
    CHECK(d.host_shadow().undefined_bit_count(h, 8) == 64);
    d.host_write(at("w"), h, 8);
    CHECK(d.host_shadow().check_defined(h, 8).fully_defined);
    d.host_write(at("past end"), h, 9);
    REQUIRE(d.diagnostics().size() == 1);
    CHECK(d.diagnostics()[0].kind == DiagKind::HostUnaddressable);
    CHECK_FALSE(d.diagnostics()[0].transfer.has_value());
    CHECK(d.host_free(at("f"), 0) == DriverStatus::Success);
    CHECK(d.host_free(at("f"), h) == DriverStatus::Success);
    CHECK(d.host_free(at("f"), h) == DriverStatus::InvalidValue);
    CHECK(d.diagnostics().back().target == Target::Host);
    CHECK(d.host_shadow().check_addressable(h, 1) == 0u);
}

TEST_CASE("host writes with explicit V-bits") {
    Driver d;
    const Address h = d.host_alloc(at("h"), 4);
    const std::uint8_t v[] = {0, 0x80, 0, 0x03};
    d.host_write(at("w"), h, 4, std::span<const std::uint8_t>(v));
    CHECK(d.host_shadow().undefined_bit_count(h, 4) == 3);
}

TEST_CASE("synchronize clears hazards") {
    Driver d;
    d.ctx_create(at("c", 1));
    const auto ctx = *d.current_context(1);
    CHECK(d.ctx_set_current(at("set", 2), ctx) == DriverStatus::Success);
    const Address p = d.mem_alloc(at("a"), 16).value;
    const Address h = d.host_alloc(at("h"), 16);
    d.host_write(at("w"), h, 16);
    CHECK(d.memcpy_htod(at("t1 write", 1), p, h, 16) == DriverStatus::Success);
    CHECK(d.memcpy_dtoh(at("t2 read", 2), h, p, 16) == DriverStatus::Success);
    REQUIRE(count_kind(d, DiagKind::ConcurrentHazard) == 1);
    CHECK(d.ctx_synchronize(at("sync", 1)) == DriverStatus::Success);
    CHECK(d.memcpy_htod(at("t1 write again", 1), p, h, 16) == DriverStatus::Success);
    CHECK(count_kind(d, DiagKind::ConcurrentHazard) == 1);
}

TEST_CASE("finish reports leaks of every live context") {
    Driver d;
    d.ctx_create(at("a"));
    d.mem_alloc(at("a1"), 8);
    d.ctx_create(at("b"));
    d.mem_alloc(at("b1"), 8);
    d.array_create(at("b2"), ArrayDescriptor{4, 0, 0, ElementFormat::U8, 1});
    d.finish();
    CHECK(count_kind(d, DiagKind::DeviceLeak) == 3);

    DriverConfig quiet;
    quiet.leak_check = false;
    Driver q(quiet);
    q.ctx_create(at("a"));
    q.mem_alloc(at("a1"), 8);
    q.ctx_destroy(at("d"));
    q.finish();
    CHECK(q.diagnostics().empty());
}

TEST_CASE("status matches errors, failing calls leave state alone, allocations never overlap") {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 40; ++round) {
        DriverConfig cfg;
        cfg.device_capacity = 4096 + rng() % 8192;
        Driver d(cfg);
        d.ctx_create(at("c1"));
        d.ctx_create(at("c2", 2));
        std::vector<Address> dev, host;
        std::vector<ArrayHandle> arrays;
        std::map<ContextId, std::vector<std::pair<Address, std::uint64_t>>> handed_out;
        for (int step = 0; step < 200; ++step) {
            const ThreadId t = 1 + rng() % 2;
            const CallSite call = at("fuzz", t);
            auto pick = [&](const std::vector<Address>& v) -> Address {
                const Address base = v.empty() ? 0x1234 : v[rng() % v.size()];
                return base + (rng() % 4 == 0 ? rng() % 600 : 0);
            };
            const std::uint64_t len = rng() % 520;
            const std::size_t before = d.diagnostic_count();
            const DeviceRegistry reg0 = d.registry();
            const ShadowMap host0 = d.host_shadow();
            const ContextId cur = *d.current_context(t);
            const DeviceSpace dev0 = *d.device_space(cur);

            std::optional<DriverStatus> status;
            switch (rng() % 9) {
                case 0: {
                    const std::uint64_t n = 1 + rng() % 512;
                    const auto r = d.mem_alloc(call, n);
                    if (r.status == DriverStatus::Success) {
                        dev.push_back(r.value);
                        auto& mine = handed_out[cur];
                        for (auto [b, m] : mine) REQUIRE((r.value >= b + m || b >= r.value + n));
                        mine.emplace_back(r.value, n);
                    }
                    break;
                }
                case 1: status = d.mem_free(call, pick(dev)); break;
                case 2: host.push_back(d.host_alloc(call, 1 + rng() % 512)); break;
                case 3:
                    if (!host.empty()) d.host_write(call, pick(host), len);
                    break;
                case 4: status = d.memcpy_htod(call, pick(dev), pick(host), len); break;
                case 5: status = d.memcpy_dtoh(call, pick(host), pick(dev), len); break;
                case 6: status = d.memcpy_dtod(call, pick(dev), pick(dev), len); break;
                case 7: {
                    const auto r = d.array_create(call, ArrayDescriptor{1 + rng() % 32, 0, 0, ElementFormat::U16, 1});
                    if (r.status == DriverStatus::Success) arrays.push_back(r.value);
                    break;
                }
                default: {
                    const ArrayHandle h = arrays.empty() ? ArrayHandle{99} : arrays[rng() % arrays.size()];
                    status = rng() % 2 ? d.memcpy_htoa(call, h, rng() % 70, pick(host), len % 80)
                                       : d.memcpy_atoh(call, pick(host), h, rng() % 70, len % 80);
                    break;
                }
            }
            if (!status) continue;
            bool error = false;
            for (std::size_t i = before; i < d.diagnostic_count(); ++i) error = error || d.diagnostics()[i].is_error();
            REQUIRE((*status == DriverStatus::InvalidValue) == error);
            if (error) {
                REQUIRE(d.registry() == reg0);
                REQUIRE(d.host_shadow() == host0);
                REQUIRE(*d.device_space(cur) == dev0);
            }
        }
    }
}
