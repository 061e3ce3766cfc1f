#include "memlens/shadow_memory.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <sstream>

namespace memlens {

namespace {

std::string range_text(Address start, std::uint64_t len) {
    std::ostringstream os;
    os << "[0x" << std::hex << start << ", +" << std::dec << len << ")";
    return os.str();
}

}  // namespace

void ShadowMap::Span::materialize() {
    if (uniform() && length > 0) bytes.assign(length, fill);
}

Address ShadowMap::checked_end(Address start, std::uint64_t len) {
    if (len > std::numeric_limits<Address>::max() - start) {
        throw ShadowError(ShadowError::Code::InvalidRange,
                          "address range overflows: " + range_text(start, len));
    }
    return start + len;
}

void ShadowMap::split_at(Address at) {
    auto it = spans_.upper_bound(at);
    if (it == spans_.begin()) return;
    --it;
    const Address base = it->first;
    Span& span = it->second;
    if (at <= base || at >= base + span.length) return;

    const std::uint64_t head = at - base;
    Span tail;
    tail.length = span.length - head;
    tail.fill = span.fill;
    if (!span.uniform()) {
        tail.bytes.assign(span.bytes.begin() + static_cast<std::ptrdiff_t>(head), span.bytes.end());
        span.bytes.resize(head);
    }
    span.length = head;
    spans_.emplace(at, std::move(tail));
}

void ShadowMap::erase_range(Address start, Address end) {
    if (start >= end) return;
    split_at(start);
    split_at(end);
    auto first = spans_.lower_bound(start);
    auto last = spans_.lower_bound(end);
    spans_.erase(first, last);
}

void ShadowMap::mark_addressable(Address start, std::uint64_t len, bool defined) {
    const Address end = checked_end(start, len);
    if (len == 0) return;
    erase_range(start, end);
    Span span;
    span.length = len;
    span.fill = defined ? kVbitsDefined : kVbitsUndefined;
    spans_.emplace(start, std::move(span));
}

void ShadowMap::mark_unaddressable(Address start, std::uint64_t len) {
    const Address end = checked_end(start, len);
    erase_range(start, end);
}

std::optional<std::uint64_t> ShadowMap::check_addressable(Address start, std::uint64_t len) const {
    const Address end = checked_end(start, len);
    Address pos = start;
    auto it = spans_.upper_bound(pos);
    if (it != spans_.begin()) --it;
    while (pos < end) {
        if (it == spans_.end() || it->first > pos || it->first + it->second.length <= pos) {
            return pos - start;
        }
        pos = it->first + it->second.length;
        ++it;
    }
    return std::nullopt;
}

void ShadowMap::require_addressable(Address start, std::uint64_t len) const {
    if (auto bad = check_addressable(start, len)) {
        throw ShadowError(ShadowError::Code::Unaddressable,
                          "unaddressable byte at offset " + std::to_string(*bad) + " of " +
                              range_text(start, len));
    }
}

// Calls fn(span, offset_in_span, count, offset_in_range) for each piece of
// an addressable range, in address order.
template <typename Fn>
void ShadowMap::visit(Address start, std::uint64_t len, Fn&& fn) const {
    require_addressable(start, len);
    if (len == 0) return;
    auto it = std::prev(spans_.upper_bound(start));
    std::uint64_t done = 0;
    while (done < len) {
        const Address pos = start + done;
        const std::uint64_t in_span = pos - it->first;
        const std::uint64_t n = std::min(it->second.length - in_span, len - done);
        fn(it->second, in_span, n, done);
        done += n;
        ++it;
    }
}

template <typename Fn>
void ShadowMap::visit_mut(Address start, std::uint64_t len, Fn&& fn) {
    require_addressable(start, len);
    if (len == 0) return;
    auto it = std::prev(spans_.upper_bound(start));
    std::uint64_t done = 0;
    while (done < len) {
        const Address pos = start + done;
        const std::uint64_t in_span = pos - it->first;
        const std::uint64_t n = std::min(it->second.length - in_span, len - done);
        fn(it->second, in_span, n, done);
        done += n;
        ++it;
    }
}

DefinednessReport ShadowMap::check_defined(Address start, std::uint64_t len) const {
    DefinednessReport report;
    visit(start, len, [&](const Span& span, std::uint64_t off, std::uint64_t n, std::uint64_t at) {
        if (span.uniform()) {
            if (span.fill == kVbitsDefined) return;
            if (!report.first_undefined_offset) report.first_undefined_offset = at;
            report.undefined_byte_count += n;
            return;
        }
        for (std::uint64_t i = 0; i < n; ++i) {
            if (span.bytes[off + i] != kVbitsDefined) {
                if (!report.first_undefined_offset) report.first_undefined_offset = at + i;
                ++report.undefined_byte_count;
            }
        }
    });
    report.fully_defined = report.undefined_byte_count == 0;
    return report;
}

std::vector<std::uint8_t> ShadowMap::read_vbits(Address start, std::uint64_t len) const {
    require_addressable(start, len);
    std::vector<std::uint8_t> out(len);
    visit(start, len, [&](const Span& span, std::uint64_t off, std::uint64_t n, std::uint64_t at) {
        if (span.uniform()) {
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(at), n, span.fill);
        } else {
            std::memcpy(out.data() + at, span.bytes.data() + off, n);
        }
    });
    return out;
}

void ShadowMap::write_vbits(Address start, std::span<const std::uint8_t> vbits) {
    visit_mut(start, vbits.size(), [&](Span& span, std::uint64_t off, std::uint64_t n, std::uint64_t at) {
        const auto piece = vbits.subspan(at, n);
        const bool same = std::all_of(piece.begin(), piece.end(),
                                      [&](std::uint8_t b) { return b == piece.front(); });
        if (same && span.uniform() && span.fill == piece.front()) return;
        if (same && off == 0 && n == span.length) {
            span.bytes.clear();
            span.bytes.shrink_to_fit();
            span.fill = piece.front();
            return;
        }
        span.materialize();
        std::memcpy(span.bytes.data() + off, piece.data(), n);
    });
}

void ShadowMap::fill_vbits(Address start, std::uint64_t len, std::uint8_t value) {
    visit_mut(start, len, [&](Span& span, std::uint64_t off, std::uint64_t n, std::uint64_t) {
        if (span.uniform() && span.fill == value) return;
        if (off == 0 && n == span.length) {
            span.bytes.clear();
            span.bytes.shrink_to_fit();
            span.fill = value;
            return;
        }
        span.materialize();
        std::fill_n(span.bytes.begin() + static_cast<std::ptrdiff_t>(off), n, value);
    });
}

std::uint64_t ShadowMap::undefined_bit_count(Address start, std::uint64_t len) const {
    std::uint64_t bits = 0;
    visit(start, len, [&](const Span& span, std::uint64_t off, std::uint64_t n, std::uint64_t) {
        if (span.uniform()) {
            bits += n * static_cast<std::uint64_t>(std::popcount(span.fill));
            return;
        }
        for (std::uint64_t i = 0; i < n; ++i) bits += std::popcount(span.bytes[off + i]);
    });
    return bits;
}

std::uint64_t ShadowMap::tracked_bytes() const noexcept {
    std::uint64_t total = 0;
    for (const auto& [start, span] : spans_) total += span.length;
    return total;
}

// Equality is semantic: same addressable bytes carrying the same V-bits,
// regardless of how either map happens to be split into spans.
bool ShadowMap::operator==(const ShadowMap& other) const {
    auto extents = [](const SpanMap& spans) {
        std::vector<std::pair<Address, Address>> out;
        for (const auto& [start, span] : spans) {
            if (!out.empty() && out.back().second == start) {
                out.back().second = start + span.length;
            } else {
                out.emplace_back(start, start + span.length);
            }
        }
        return out;
    };
    if (extents(spans_) != extents(other.spans_)) return false;

    // Both maps cover the same bytes in the same order, so walk them in step.
    auto a = spans_.begin();
    auto b = other.spans_.begin();
    std::uint64_t a_off = 0;
    std::uint64_t b_off = 0;
    while (a != spans_.end() && b != other.spans_.end()) {
        const std::uint64_t n = std::min(a->second.length - a_off, b->second.length - b_off);
        const Span& sa = a->second;
        const Span& sb = b->second;
        if (sa.uniform() && sb.uniform()) {
            if (sa.fill != sb.fill) return false;
        } else {
            for (std::uint64_t i = 0; i < n; ++i) {
                if (sa.at(a_off + i) != sb.at(b_off + i)) return false;
            }
        }
        a_off += n;
        b_off += n;
        if (a_off == sa.length) {
            ++a;
            a_off = 0;
        }
        if (b_off == sb.length) {
            ++b;
            b_off = 0;
        }
    }
    return true;
}

void copy_vbits(const ShadowMap& src_map, Address src, ShadowMap& dst_map, Address dst,
                std::uint64_t len) {
    if (auto bad = dst_map.check_addressable(dst, len)) {
        throw ShadowError(ShadowError::Code::Unaddressable,
                          "copy destination unaddressable at offset " + std::to_string(*bad));
    }
    // Staging through a scratch buffer gives memmove semantics when both
    // ranges live in the same map.
    const std::vector<std::uint8_t> scratch = src_map.read_vbits(src, len);
    dst_map.write_vbits(dst, scratch);
}

}  // namespace memlens
