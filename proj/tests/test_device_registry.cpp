#include <algorithm>
#include <random>

#include "doctest.h"
#include "memlens/device_registry.hpp"

using namespace memlens;

namespace {

TraceLoc site(const char* f) { return TraceLoc{{f}}; }

RegistryError::Code code_of(auto&& fn) {
    try {
        fn();
    } catch (const RegistryError& e) {
        return e.code();
    }
    FAIL("no RegistryError thrown");
    return RegistryError::Code::InvalidArgument;
}

// Sorted vector of (base, size) as the reference.
struct IntervalOracle {
    std::vector<std::pair<Address, std::uint64_t>> v;

    bool overlaps(Address b, std::uint64_t n) const {
        return std::any_of(v.begin(), v.end(), [&](auto& r) { return b < r.first + r.second && r.first < b + n; });
    }
    void add(Address b, std::uint64_t n) {
        v.emplace_back(b, n);
        std::sort(v.begin(), v.end());
    }
    bool remove(Address b) {
        auto it = std::find_if(v.begin(), v.end(), [&](auto& r) { return r.first == b; });
        if (it == v.end()) return false;
        v.erase(it);
        return true;
    }
    CoverageResult cover(Address s, std::uint64_t len) const {
        CoverageResult r;
        for (auto& [b, n] : v) {
            if (s >= b && s < b + n) {
                r.available_bytes = b + n - s;
                r.status = r.available_bytes >= len ? Coverage::Covered : Coverage::Truncated;
                r.region_base = b;
            }
        }
        return r;
    }
};

}  // namespace

TEST_CASE("vector-sum-sized region is covered") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x10000, 4000000, site("main (example01.cu:55)"));
    const auto cov = r.coverage(c, 0x10000, 4000000);
    CHECK(cov.status == Coverage::Covered);
    CHECK(cov.available_bytes == 4000000);
    REQUIRE(cov.region_site.has_value());
    CHECK(cov.region_site->frames.front() == "main (example01.cu:55)");
}

TEST_CASE("oversize query is truncated at the region end") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x10000, 4000000, site("a"));
    const auto cov = r.coverage(c, 0x10000, 8000000);
    CHECK(cov.status == Coverage::Truncated);
    CHECK(cov.available_bytes == 4000000);
    CHECK(r.coverage(c, 0x10000 + 4000000, 1).status == Coverage::NotAllocated);
    CHECK(r.coverage(c, 0x10000 + 3999999, 0).status == Coverage::Covered);
}

TEST_CASE("copy spanning two adjacent regions truncates at the first") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x1000, 0x100, site("a"));
    r.register_linear(c, 0x1100, 0x100, site("b"));
    const auto cov = r.coverage(c, 0x10f0, 0x20);
    CHECK(cov.status == Coverage::Truncated);
    CHECK(cov.available_bytes == 0x10);
}

TEST_CASE("registering the same base twice overlaps") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x1000, 16, site("a"));
    CHECK(code_of([&] { r.register_linear(c, 0x1000, 16, site("b")); }) == RegistryError::Code::OverlapWithLive);
    CHECK(code_of([&] { r.register_linear(c, 0x0ff8, 9, site("b")); }) == RegistryError::Code::OverlapWithLive);
    r.register_linear(c, 0x0ff8, 8, site("b"));
}

TEST_CASE("bad arguments and unknown contexts") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    CHECK(code_of([&] { r.register_linear(c, 0, 16, site("a")); }) == RegistryError::Code::InvalidArgument);
    CHECK(code_of([&] { r.register_linear(c, 0x1000, 0, site("a")); }) == RegistryError::Code::InvalidArgument);
    CHECK(code_of([&] { r.register_linear(ContextId{42}, 0x1000, 1, site("a")); }) ==
          RegistryError::Code::UnknownContext);
    CHECK(code_of([&] { (void)r.coverage(ContextId{42}, 0x1000, 1); }) == RegistryError::Code::UnknownContext);
    CHECK(code_of([&] { (void)r.live_allocations(ContextId{42}); }) == RegistryError::Code::UnknownContext);
}

TEST_CASE("unregister then query is not allocated") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x1000, 64, site("a"));
    const auto rec = r.unregister_linear(c, 0x1000);
    CHECK(rec.size == 64);
    CHECK(rec.ctx == c);
    CHECK(r.coverage(c, 0x1000, 1).status == Coverage::NotAllocated);
}

TEST_CASE("interior pointer is not a base") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x1000, 64, site("a"));
    CHECK(code_of([&] { (void)r.unregister_linear(c, 0x1001); }) == RegistryError::Code::NotABase);
    CHECK(r.coverage(c, 0x1000, 64).status == Coverage::Covered);
}

TEST_CASE("register followed by unregister restores the registry") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    r.register_linear(c, 0x1000, 64, site("a"));
    const DeviceRegistry before = r;
    r.register_linear(c, 0x2000, 8, site("b"));
    (void)r.unregister_linear(c, 0x2000);
    CHECK(r == before);
}

TEST_CASE("context ids are never reused") {
    DeviceRegistry r;
    const ContextId a = r.create_context();
    r.destroy_context(a);
    const ContextId b = r.create_context();
    CHECK(to_underlying(a) == 1);
    CHECK(to_underlying(b) == 2);
    CHECK_FALSE(r.has_context(a));
}

TEST_CASE("contexts are independent") {
    DeviceRegistry r;
    const ContextId a = r.create_context();
    const ContextId b = r.create_context();
    r.register_linear(a, 0x1000, 64, site("a"));
    // Same addresses in another context are fine.
    r.register_linear(b, 0x1000, 32, site("b"));
    CHECK(r.coverage(a, 0x1000, 64).status == Coverage::Covered);
    CHECK(r.coverage(b, 0x1000, 64).status == Coverage::Truncated);
    (void)r.unregister_linear(b, 0x1000);
    CHECK(r.coverage(a, 0x1000, 64).status == Coverage::Covered);
    CHECK(r.linear_owner(0x1010, b) == a);
    CHECK_FALSE(r.linear_owner(0x1010, a).has_value());
}

TEST_CASE("array descriptor sizes") {
    ArrayDescriptor d{1024, 0, 0, ElementFormat::F32, 1};
    CHECK(d.total_bytes() == 4096u);
    CHECK(ArrayDescriptor{16, 4, 2, ElementFormat::U16, 4}.total_bytes() == 16u * 4 * 2 * 2 * 4);
    CHECK_FALSE(ArrayDescriptor{0, 4, 0, ElementFormat::U8, 1}.total_bytes().has_value());
    CHECK_FALSE(ArrayDescriptor{4, 0, 0, ElementFormat::U8, 3}.total_bytes().has_value());
    CHECK_FALSE(ArrayDescriptor{~0ull, ~0ull, 0, ElementFormat::U8, 1}.total_bytes().has_value());
    for (auto f : {ElementFormat::U8, ElementFormat::U16, ElementFormat::U32, ElementFormat::S8, ElementFormat::S16,
                   ElementFormat::S32, ElementFormat::F16, ElementFormat::F32}) {
        CHECK(parse_format(format_name(f)) == f);
    }
    CHECK(format_bytes(ElementFormat::F16) == 2);
    CHECK_FALSE(parse_format("f64").has_value());
}

TEST_CASE("array register, lookup, unregister") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    const ArrayDescriptor d{1024, 0, 0, ElementFormat::F32, 1};
    r.register_array(c, ArrayHandle{7}, d, site("a"));
    REQUIRE(r.array_lookup(c, ArrayHandle{7}).has_value());
    CHECK(r.array_lookup(c, ArrayHandle{7})->total_bytes() == 4096);
    CHECK(code_of([&] { r.register_array(c, ArrayHandle{7}, d, site("b")); }) ==
          RegistryError::Code::DuplicateHandle);
    CHECK(code_of([&] { r.register_array(c, ArrayHandle{8}, ArrayDescriptor{}, site("b")); }) ==
          RegistryError::Code::InvalidArgument);
    CHECK(r.array_owner(ArrayHandle{7}) == c);
    (void)r.unregister_array(c, ArrayHandle{7});
    CHECK_FALSE(r.array_lookup(c, ArrayHandle{7}).has_value());
    CHECK(code_of([&] { (void)r.unregister_array(c, ArrayHandle{7}); }) == RegistryError::Code::UnknownHandle);
}

TEST_CASE("live allocations") {
    DeviceRegistry r;
    const ContextId c = r.create_context();
    CHECK(r.live_allocations(c).size() == 0);
    r.register_linear(c, 0x3000, 8, site("a"));
    r.register_linear(c, 0x1000, 8, site("b"));
    r.register_linear(c, 0x2000, 8, site("c"));
    (void)r.unregister_linear(c, 0x2000);
    const auto live = r.live_allocations(c);
    REQUIRE(live.size() == 2);
    CHECK(live.linear[0].base == 0x1000);
    CHECK(live.linear[1].base == 0x3000);
    CHECK(live.linear[1].site.frames.front() == "a");
    CHECK(r.live_bytes(c) == 16);
}

TEST_CASE("random registrations agree with a sorted-vector oracle") {
    std::mt19937_64 rng(3);
    DeviceRegistry r;
    const ContextId c = r.create_context();
    const ContextId other = r.create_context();
    r.register_linear(other, 0x100, 0x10000, site("bystander"));
    IntervalOracle o;
    std::map<std::uint64_t, ArrayDescriptor> arrays;
    for (int i = 0; i < 3000; ++i) {
        const int op = static_cast<int>(rng() % 5);
        const Address b = 1 + rng() % 8192;
        const std::uint64_t n = 1 + rng() % 200;
        if (op == 0) {
            if (o.overlaps(b, n)) {
                REQUIRE(code_of([&] { r.register_linear(c, b, n, site("x")); }) ==
                        RegistryError::Code::OverlapWithLive);
            } else {
                r.register_linear(c, b, n, site("x"));
                o.add(b, n);
            }
        } else if (op == 1) {
            Address target = b;
            if (!o.v.empty() && rng() % 2) target = o.v[rng() % o.v.size()].first;
            if (o.remove(target)) {
                REQUIRE(r.unregister_linear(c, target).base == target);
            } else {
                REQUIRE(code_of([&] { (void)r.unregister_linear(c, target); }) == RegistryError::Code::NotABase);
            }
        } else if (op == 2) {
            const auto want = o.cover(b, n);
            const auto got = r.coverage(c, b, n);
            REQUIRE(got.status == want.status);
            if (want.status != Coverage::NotAllocated) {
                REQUIRE(got.available_bytes == want.available_bytes);
                REQUIRE(got.region_base == want.region_base);
            }
        } else if (op == 3) {
            const std::uint64_t h = 1 + rng() % 20;
            const ArrayDescriptor d{1 + rng() % 8, rng() % 3, 0, ElementFormat::U16, 2};
            if (arrays.count(h)) {
                REQUIRE(code_of([&] { r.register_array(c, ArrayHandle{h}, d, site("a")); }) ==
                        RegistryError::Code::DuplicateHandle);
                (void)r.unregister_array(c, ArrayHandle{h});
                arrays.erase(h);
            } else {
                r.register_array(c, ArrayHandle{h}, d, site("a"));
                arrays[h] = d;
            }
        } else {
            const std::uint64_t h = 1 + rng() % 20;
            const auto got = r.array_lookup(c, ArrayHandle{h});
            REQUIRE(got.has_value() == (arrays.count(h) == 1));
            if (got) REQUIRE(got->desc == arrays[h]);
        }
        REQUIRE(r.live_allocations(c).size() == o.v.size() + arrays.size());
    }
    // Every live extent is covered exactly; the other context never moved.
    for (auto& [b, n] : o.v) REQUIRE(r.coverage(c, b, n).status == Coverage::Covered);
    CHECK(r.live_allocations(other).size() == 1);
    CHECK(r.coverage(other, 0x100, 0x10000).status == Coverage::Covered);
}
