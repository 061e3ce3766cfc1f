#include "memlens/trace.hpp"

#include <array>
#include <charconv>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace memlens {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 16> kOpNames{
    "ctx_create",  "ctx_destroy", "ctx_set_current", "ctx_synchronize", "mem_alloc",   "mem_free",
    "array_create", "array_destroy", "memcpy_htod",  "memcpy_dtoh",     "memcpy_dtod", "memcpy_htoa",
    "memcpy_atoh", "host_alloc",  "host_write",      "host_free",
};

bool valid_symbol_name(std::string_view name) {
    if (name.empty()) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '.';
        if (!ok) return false;
    }
    return true;
}

std::optional<std::uint64_t> parse_number(std::string_view s) {
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    if (s.empty()) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

class EventParser {
public:
    EventParser(const json& j, std::size_t line) : j_(j), line_(line) {}

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

    const json* find(const char* key) const {
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::optional<std::uint64_t> u64(const char* key, bool required) const {
        const json* v = find(key);
        if (!v) {
            if (required) fail(std::string("missing required key '") + key + "'");
            return std::nullopt;
        }
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return v->get<std::uint64_t>();
        fail(std::string("'") + key + "' must be a non-negative integer");
    }

    std::optional<Ref> ref(const char* key, bool required) const {
        const json* v = find(key);
        if (!v) {
            if (required) fail(std::string("missing required key '") + key + "'");
            return std::nullopt;
        }
        if (v->is_number_unsigned()) return Ref::literal(v->get<std::uint64_t>());
        if (!v->is_string()) fail(std::string("'") + key + "' must be an address string or integer");
        const auto& s = v->get_ref<const std::string&>();
        auto parsed = parse_ref(s);
        if (!parsed) fail(std::string("bad operand '") + s + "' for '" + key + "'");
        return parsed;
    }

    std::optional<std::string> out() const {
        const json* v = find("out");
        if (!v) return std::nullopt;
        if (!v->is_string()) fail("'out' must be a symbol string");
        const auto& s = v->get_ref<const std::string&>();
        if (s.size() < 2 || s[0] != '$' || !valid_symbol_name(std::string_view(s).substr(1))) {
            fail("'out' must look like \"$name\", got '" + s + "'");
        }
        return s.substr(1);
    }

    static std::optional<Ref> parse_ref(std::string_view s) {
        if (s.empty()) return std::nullopt;
        if (s[0] != '$') {
            auto v = parse_number(s);
            if (!v) return std::nullopt;
            return Ref::literal(*v);
        }
        s.remove_prefix(1);
        const auto sign = s.find_first_of("+-");
        const std::string_view name = s.substr(0, sign);
        if (!valid_symbol_name(name)) return std::nullopt;
        std::uint64_t offset = 0;
        if (sign != std::string_view::npos) {
            auto n = parse_number(s.substr(sign + 1));
            if (!n) return std::nullopt;
            offset = s[sign] == '+' ? *n : std::uint64_t{0} - *n;
        }
        return Ref::sym(std::string(name), offset);
    }

private:
    const json& j_;
    std::size_t line_;
};

std::optional<std::vector<std::uint8_t>> parse_hex_bytes(std::string_view s) {
    if (s.size() % 2 != 0) return std::nullopt;
    std::vector<std::uint8_t> out(s.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto [ptr, ec] = std::from_chars(s.data() + 2 * i, s.data() + 2 * i + 2, out[i], 16);
        if (ec != std::errc{} || ptr != s.data() + 2 * i + 2) return std::nullopt;
    }
    return out;
}

std::string hex_bytes(const std::vector<std::uint8_t>& bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out += kDigits[b >> 4];
        out += kDigits[b & 0xF];
    }
    return out;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

}  // namespace

std::string_view op_name(Op op) noexcept { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> parse_op(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kOpNames.size(); ++i) {
        if (kOpNames[i] == name) return static_cast<Op>(i);
    }
    return std::nullopt;
}

std::string Ref::to_string() const {
    if (!is_symbol()) return hex(value);
    std::string out = "$" + symbol;
    if (value == 0) return out;
    if (value <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        return out + "+" + std::to_string(value);
    }
    return out + "-" + std::to_string(std::uint64_t{0} - value);
}

TraceEvent parse_event(std::string_view text, std::size_t line) {
    const json j = json::parse(text.begin(), text.end(), nullptr, false);
    if (j.is_discarded()) throw ParseError(line, "malformed JSON");
    if (!j.is_object()) throw ParseError(line, "trace record must be a JSON object");

    EventParser p(j, line);
    TraceEvent ev;
    ev.line = line;

    const auto thread = p.u64("thread", true);
    if (*thread < 1 || *thread > std::numeric_limits<ThreadId>::max()) p.fail("'thread' must be in [1, 2^32)");
    ev.thread = static_cast<ThreadId>(*thread);

    const json* op = p.find("op");
    if (!op || !op->is_string()) p.fail("missing or non-string 'op'");
    const auto parsed_op = parse_op(op->get_ref<const std::string&>());
    if (!parsed_op) p.fail("unknown op '" + op->get<std::string>() + "'");
    ev.op = *parsed_op;

    const json* loc = p.find("loc");
    if (!loc || !loc->is_array() || loc->empty()) p.fail("'loc' must be a non-empty array of frames");
    for (const auto& frame : *loc) {
        if (!frame.is_string() || frame.get_ref<const std::string&>().empty()) {
            p.fail("'loc' frames must be non-empty strings");
        }
        ev.loc.frames.push_back(frame.get<std::string>());
    }

    ev.ctx = p.ref("ctx", ev.op == Op::CtxSetCurrent);

    switch (ev.op) {
        case Op::CtxCreate:
            ev.out = p.out();
            break;
        case Op::CtxDestroy:
        case Op::CtxSetCurrent:
        case Op::CtxSynchronize:
            break;
        case Op::MemAlloc:
        case Op::HostAlloc:
            ev.size = p.u64("size", true);
            ev.out = p.out();
            break;
        case Op::MemFree:
            ev.ptr = p.ref("ptr", true);
            break;
        case Op::ArrayCreate: {
            ev.width = p.u64("width", true);
            ev.height = p.u64("height", false);
            ev.depth = p.u64("depth", false);
            ev.channels = p.u64("channels", false);
            const json* fmt = p.find("format");
            if (!fmt || !fmt->is_string()) p.fail("missing or non-string 'format'");
            ev.format = parse_format(fmt->get_ref<const std::string&>());
            if (!ev.format) p.fail("unknown element format '" + fmt->get<std::string>() + "'");
            ev.out = p.out();
            break;
        }
        case Op::ArrayDestroy:
            ev.array = p.ref("array", true);
            break;
        case Op::MemcpyHtoD:
        case Op::MemcpyDtoH:
        case Op::MemcpyDtoD:
            ev.dst = p.ref("dst", true);
            ev.src = p.ref("src", true);
            ev.len = p.u64("len", true);
            break;
        case Op::MemcpyHtoA:
            ev.array = p.ref("array", true);
            ev.offset = p.u64("offset", true);
            ev.src = p.ref("src", true);
            ev.len = p.u64("len", true);
            break;
        case Op::MemcpyAtoH:
            ev.dst = p.ref("dst", true);
            ev.array = p.ref("array", true);
            ev.offset = p.u64("offset", true);
            ev.len = p.u64("len", true);
            break;
        case Op::HostWrite: {
            ev.addr = p.ref("addr", true);
            ev.len = p.u64("len", true);
            if (const json* v = p.find("vbits")) {
                if (!v->is_string()) p.fail("'vbits' must be a hex string");
                ev.vbits = parse_hex_bytes(v->get_ref<const std::string&>());
                if (!ev.vbits) p.fail("'vbits' must be an even-length hex string");
                if (ev.vbits->size() != *ev.len) p.fail("'vbits' must describe exactly 'len' bytes");
            }
            break;
        }
        case Op::HostFree:
            ev.addr = p.ref("addr", true);
            break;
    }
    return ev;
}

std::optional<TraceEvent> TraceReader::next() {
    std::string raw;
    while (std::getline(in_, raw)) {
        ++line_;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const auto first = raw.find_first_not_of(" \t");
        if (first == std::string::npos || raw[first] == '#') continue;
        TraceEvent ev = parse_event(raw, line_);
        if (ev.out) {
            if (!bound_.insert(*ev.out).second) throw ParseError(line_, "symbol '$" + *ev.out + "' bound twice");
        }
        return ev;
    }
    return std::nullopt;
}

std::vector<TraceEvent> parse_trace(std::istream& in) {
    TraceReader reader(in);
    std::vector<TraceEvent> out;
    while (auto ev = reader.next()) out.push_back(std::move(*ev));
    return out;
}

std::vector<TraceEvent> parse_trace(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_trace(in);
}

std::string serialize_event(const TraceEvent& ev) {
    nlohmann::ordered_json j;
    j["thread"] = ev.thread;
    j["op"] = op_name(ev.op);
    if (ev.ctx) j["ctx"] = ev.ctx->to_string();
    auto put_ref = [&](const char* key, const std::optional<Ref>& r) {
        if (r) j[key] = r->to_string();
    };
    auto put_u64 = [&](const char* key, const std::optional<std::uint64_t>& v) {
        if (v) j[key] = *v;
    };
    put_u64("size", ev.size);
    put_ref("ptr", ev.ptr);
    put_ref("array", ev.array);
    put_ref("dst", ev.dst);
    put_ref("src", ev.src);
    put_ref("addr", ev.addr);
    put_u64("offset", ev.offset);
    put_u64("len", ev.len);
    put_u64("width", ev.width);
    put_u64("height", ev.height);
    put_u64("depth", ev.depth);
    if (ev.format) j["format"] = format_name(*ev.format);
    put_u64("channels", ev.channels);
    if (ev.vbits) j["vbits"] = hex_bytes(*ev.vbits);
    if (ev.out) j["out"] = "$" + *ev.out;
    j["loc"] = ev.loc.frames;
    return j.dump();
}

std::string serialize_trace(const std::vector<TraceEvent>& events) {
    std::string out;
    for (const auto& ev : events) {
        out += serialize_event(ev);
        out += '\n';
    }
    return out;
}

Replayer::Replayer(ReplayConfig config) : config_(std::move(config)), driver_(config_.driver) {}

std::uint64_t Replayer::resolve(const Ref& ref, std::size_t line) const {
    if (!ref.is_symbol()) return ref.value;
    auto it = symbols_.find(ref.symbol);
    if (it == symbols_.end()) throw ReplayError(line, "use of unbound symbol '$" + ref.symbol + "'");
    return it->second + ref.value;
}

void Replayer::bind(const std::optional<std::string>& out, std::uint64_t value, std::size_t line) {
    if (!out) return;
    if (!symbols_.emplace(*out, value).second) throw ReplayError(line, "symbol '$" + *out + "' bound twice");
}

namespace {

ContextId as_context(std::uint64_t v) {
    // Ids start at 1, so 0 never names a live context.
    return v > std::numeric_limits<std::uint32_t>::max() ? ContextId{0} : ContextId{static_cast<std::uint32_t>(v)};
}

template <typename T>
const T& require(const std::optional<T>& v, const char* key, std::size_t line) {
    if (!v) throw ReplayError(line, std::string("event lacks '") + key + "'");
    return *v;
}

}  // namespace

void Replayer::step(const TraceEvent& ev) {
    const std::size_t line = ev.line;
    ++events_;
    CallSite call{ev.thread, ev.loc, std::nullopt};
    std::optional<ContextId> named_ctx;
    if (ev.ctx) named_ctx = as_context(resolve(*ev.ctx, line));
    if (ev.op != Op::CtxSetCurrent) call.ctx = named_ctx;

    auto ref = [&](const std::optional<Ref>& r, const char* key) { return resolve(require(r, key, line), line); };
    auto num = [&](const std::optional<std::uint64_t>& v, const char* key) { return require(v, key, line); };

    switch (ev.op) {
        case Op::CtxCreate:
            bind(ev.out, to_underlying(driver_.ctx_create(call).value), line);
            break;
        case Op::CtxDestroy:
            driver_.ctx_destroy(call);
            break;
        case Op::CtxSetCurrent:
            driver_.ctx_set_current(call, require(named_ctx, "ctx", line));
            break;
        case Op::CtxSynchronize:
            driver_.ctx_synchronize(call);
            break;
        case Op::MemAlloc:
            bind(ev.out, driver_.mem_alloc(call, num(ev.size, "size")).value, line);
            break;
        case Op::MemFree:
            driver_.mem_free(call, ref(ev.ptr, "ptr"));
            break;
        case Op::ArrayCreate: {
            ArrayDescriptor desc;
            desc.width = num(ev.width, "width");
            desc.height = ev.height.value_or(0);
            desc.depth = ev.depth.value_or(0);
            desc.format = require(ev.format, "format", line);
            const std::uint64_t channels = ev.channels.value_or(1);
            desc.channels = channels > 4 ? 0 : static_cast<std::uint32_t>(channels);
            bind(ev.out, to_underlying(driver_.array_create(call, desc).value), line);
            break;
        }
        case Op::ArrayDestroy:
            driver_.array_destroy(call, ArrayHandle{ref(ev.array, "array")});
            break;
        case Op::MemcpyHtoD: {
            const auto dst = ref(ev.dst, "dst");
            const auto src = ref(ev.src, "src");
            driver_.memcpy_htod(call, dst, src, num(ev.len, "len"));
            break;
        }
        case Op::MemcpyDtoH: {
            const auto dst = ref(ev.dst, "dst");
            const auto src = ref(ev.src, "src");
            driver_.memcpy_dtoh(call, dst, src, num(ev.len, "len"));
            break;
        }
        case Op::MemcpyDtoD: {
            const auto dst = ref(ev.dst, "dst");
            const auto src = ref(ev.src, "src");
            driver_.memcpy_dtod(call, dst, src, num(ev.len, "len"));
            break;
        }
        case Op::MemcpyHtoA: {
            const ArrayHandle array{ref(ev.array, "array")};
            const auto src = ref(ev.src, "src");
            driver_.memcpy_htoa(call, array, num(ev.offset, "offset"), src, num(ev.len, "len"));
            break;
        }
        case Op::MemcpyAtoH: {
            const auto dst = ref(ev.dst, "dst");
            const ArrayHandle array{ref(ev.array, "array")};
            driver_.memcpy_atoh(call, dst, array, num(ev.offset, "offset"), num(ev.len, "len"));
            break;
        }
        case Op::HostAlloc:
            bind(ev.out, driver_.host_alloc(call, num(ev.size, "size")), line);
            break;
        case Op::HostWrite: {
            const auto addr = ref(ev.addr, "addr");
            const auto len = num(ev.len, "len");
            if (ev.vbits && ev.vbits->size() != len) throw ReplayError(line, "'vbits' length differs from 'len'");
            std::optional<std::span<const std::uint8_t>> vbits;
            if (ev.vbits) vbits = std::span<const std::uint8_t>(*ev.vbits);
            driver_.host_write(call, addr, len, vbits);
            break;
        }
        case Op::HostFree:
            driver_.host_free(call, ref(ev.addr, "addr"));
            break;
    }
}

ReplayResult Replayer::finish() {
    driver_.finish();
    ReplayResult result;
    result.diagnostics = driver_.diagnostics();
    result.stats.events = events_;
    for (const auto& d : result.diagnostics) {
        const bool hidden = std::any_of(config_.suppressions.begin(), config_.suppressions.end(),
                                        [&](const Suppression& s) { return matches(s, d); });
        if (hidden) {
            ++result.stats.suppressed;
        } else if (d.is_error()) {
            ++result.stats.errors;
        } else {
            ++result.stats.warnings;
        }
    }
    return result;
}

ReplayResult replay(const std::vector<TraceEvent>& events, const ReplayConfig& config) {
    Replayer replayer(config);
    for (const auto& ev : events) replayer.step(ev);
    return replayer.finish();
}

ReplayResult replay_stream(std::istream& in, const ReplayConfig& config) {
    TraceReader reader(in);
    Replayer replayer(config);
    while (auto ev = reader.next()) replayer.step(*ev);
    return replayer.finish();
}

}  // namespace memlens
