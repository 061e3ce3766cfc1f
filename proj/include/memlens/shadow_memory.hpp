#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "memlens/types.hpp"

namespace memlens {

class ShadowError : public std::runtime_error {
public:
    enum class Code { InvalidRange, Unaddressable };

    ShadowError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Code code() const noexcept { return code_; }

private:
    Code code_;
};

/// Result of a definedness query. A byte is undefined if any of its
/// eight V-bits is undefined.
struct DefinednessReport {
    bool fully_defined = true;
    std::optional<std::uint64_t> first_undefined_offset;
    std::uint64_t undefined_byte_count = 0;

    bool operator==(const DefinednessReport&) const = default;
};

/// V-bit byte values. A set bit marks an undefined data bit.
inline constexpr std::uint8_t kVbitsDefined = 0x00;
inline constexpr std::uint8_t kVbitsUndefined = 0xFF;

/// Sparse shadow of one address space.
///
/// A byte is addressable iff it lies inside a tracked span; every tracked
/// byte carries eight V-bits. Spans whose V-bits are all equal are stored
/// as a single fill byte so large, freshly allocated regions stay cheap.
class ShadowMap {
public:
    ShadowMap() = default;

    /// Makes [start, start+len) addressable, overwriting whatever was
    /// tracked there. Throws ShadowError(InvalidRange) on overflow.
    void mark_addressable(Address start, std::uint64_t len, bool defined);

    /// Drops [start, start+len) from tracking. Untracked bytes are ignored.
    void mark_unaddressable(Address start, std::uint64_t len);

    /// Offset of the lowest unaddressable byte in the range, if any.
    std::optional<std::uint64_t> check_addressable(Address start, std::uint64_t len) const;

    /// Throws ShadowError(Unaddressable) if any byte in range is untracked.
    DefinednessReport check_defined(Address start, std::uint64_t len) const;

    /// Raw V-bit bytes for the range (throws if unaddressable).
    std::vector<std::uint8_t> read_vbits(Address start, std::uint64_t len) const;

    /// Overwrites V-bits from `vbits`; the whole range must be addressable.
    void write_vbits(Address start, std::span<const std::uint8_t> vbits);

    /// Sets every V-bit byte in an addressable range to `value`.
    void fill_vbits(Address start, std::uint64_t len, std::uint8_t value);

    /// Number of undefined bits in an addressable range.
    std::uint64_t undefined_bit_count(Address start, std::uint64_t len) const;

    std::uint64_t tracked_bytes() const noexcept;
    std::size_t span_count() const noexcept { return spans_.size(); }
    bool empty() const noexcept { return spans_.empty(); }

    /// Visits every span as (start, length).
    template <typename Fn>
    void for_each_span(Fn&& fn) const {
        for (const auto& [start, span] : spans_) fn(start, span.length);
    }

    bool operator==(const ShadowMap& other) const;

private:
    struct Span {
        std::uint64_t length = 0;
        std::uint8_t fill = kVbitsUndefined;  // used when bytes is empty
        std::vector<std::uint8_t> bytes;      // materialized V-bits

        bool uniform() const noexcept { return bytes.empty(); }
        std::uint8_t at(std::uint64_t i) const noexcept { return uniform() ? fill : bytes[i]; }
        void materialize();
    };

    using SpanMap = std::map<Address, Span>;

    static Address checked_end(Address start, std::uint64_t len);
    void split_at(Address at);
    void erase_range(Address start, Address end);
    void require_addressable(Address start, std::uint64_t len) const;

    template <typename Fn>
    void visit(Address start, std::uint64_t len, Fn&& fn) const;
    template <typename Fn>
    void visit_mut(Address start, std::uint64_t len, Fn&& fn);

    SpanMap spans_;
};

/// Copies V-bits from one range to another, bit-exact. The maps may be the
/// same object; overlapping ranges behave as if staged through a scratch
/// buffer. Throws ShadowError(Unaddressable) if either range is not fully
/// addressable, in which case neither map is modified.
void copy_vbits(const ShadowMap& src_map, Address src, ShadowMap& dst_map, Address dst,
                std::uint64_t len);

}  // namespace memlens
