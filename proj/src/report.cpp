#include "memlens/report.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace memlens {

namespace {

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

std::string headline(const Diagnostic& d) {
    const std::string dir = d.transfer ? std::string(transfer_direction(*d.transfer)) : "";
    const bool array = d.target == Target::Array;
    switch (d.kind) {
        case DiagKind::DstNotAllocated:
        case DiagKind::SrcNotAllocated: {
            const char* role = d.kind == DiagKind::DstNotAllocated ? "Destination" : "Source";
            return std::string(role) + (array ? " device array" : " device memory") +
                   " not allocated for " + dir + " copy";
        }
        case DiagKind::DstTooSmall:
        case DiagKind::SrcTooSmall:
            if (d.transfer == TransferKind::DtoD) {
                return std::string("Allocated ") + (d.kind == DiagKind::SrcTooSmall ? "source" : "destination") +
                       " device memory too small for " + dir + " copy";
            }
            return std::string("Allocated ") + (array ? "device array" : "device memory") + " too small for " +
                   dir + " copy";
        case DiagKind::HostUnaddressable:
            if (!d.transfer) return "Host memory not addressable for host write";
            return "Host memory not addressable for " + dir + " copy";
        case DiagKind::HostUndefined:
            return "Undefined host memory used in " + dir + " copy";
        case DiagKind::InvalidFree:
            switch (d.target) {
                case Target::Host: return "Invalid free of host pointer " + hex(d.address.value_or(0));
                case Target::Array: return "Invalid destroy of device array " + hex(d.address.value_or(0));
                default: return "Invalid free of device pointer " + hex(d.address.value_or(0));
            }
        case DiagKind::ConcurrentHazard:
            return std::string("Unsynchronized concurrent access to ") + (array ? "device array" : "device memory") +
                   " by threads " + std::to_string(d.other_thread.value_or(0)) + " and " +
                   std::to_string(d.thread) + (d.transfer ? " in " + dir + " copy" : "");
        case DiagKind::DeviceLeak:
            return std::string(array ? "Device array leak of " : "Device memory leak of ") +
                   std::to_string(d.length.value_or(0)) + " bytes";
    }
    return "Unknown problem";
}

void detail_lines(const Diagnostic& d, std::vector<std::string>& out) {
    const bool array = d.target == Target::Array;
    auto hint = [&](const char* what) {
        if (d.other_context) {
            out.push_back(std::string(what) + " belongs to context " + std::to_string(to_underlying(*d.other_context)) +
                          ".");
        }
    };
    switch (d.kind) {
        case DiagKind::DstNotAllocated:
        case DiagKind::SrcNotAllocated:
            if (array) {
                out.push_back("Array handle " + hex(d.address.value_or(0)) + " is not live in the current context.");
                hint("Handle");
            } else {
                out.push_back("Address " + hex(d.address.value_or(0)) +
                              " is not inside any allocation of the current context.");
                hint("Address");
            }
            break;
        case DiagKind::DstTooSmall:
        case DiagKind::SrcTooSmall:
            out.push_back("Expected " + std::to_string(d.expected_bytes.value_or(0)) +
                          " allocated bytes but only found " + std::to_string(d.found_bytes.value_or(0)) + ".");
            break;
        case DiagKind::HostUnaddressable:
            out.push_back("Byte " + std::to_string(d.offset.value_or(0)) + " of the " +
                          std::to_string(d.length.value_or(0)) + "-byte range at " + hex(d.address.value_or(0)) +
                          " is not addressable.");
            break;
        case DiagKind::HostUndefined:
            out.push_back(std::to_string(d.undefined_bytes.value_or(0)) + " of the " +
                          std::to_string(d.length.value_or(0)) + " bytes at " + hex(d.address.value_or(0)) +
                          " hold undefined bits, first at offset " + std::to_string(d.offset.value_or(0)) + ".");
            break;
        case DiagKind::InvalidFree:
            hint(d.target == Target::Array ? "Array" : "Pointer");
            break;
        case DiagKind::ConcurrentHazard: {
            const Hazard h = d.hazard.value_or(Hazard::WriteAfterWrite);
            const char* now = h == Hazard::ReadAfterWrite ? "Read" : "Write";
            const char* before = h == Hazard::WriteAfterRead ? "read" : "write";
            std::string where = array ? "offset " + std::to_string(d.offset.value_or(0)) + " of array " +
                                            hex(d.address.value_or(0))
                                      : hex(d.address.value_or(0));
            out.push_back(std::string(now) + " of " + std::to_string(d.length.value_or(0)) + " bytes at " + where +
                          " by thread " + std::to_string(d.thread) + " follows an unsynchronized " + before +
                          " by thread " + std::to_string(d.other_thread.value_or(0)) + ".");
            break;
        }
        case DiagKind::DeviceLeak:
            break;
    }
}

nlohmann::ordered_json diagnostic_json(const Diagnostic& d) {
    nlohmann::ordered_json j;
    j["kind"] = kind_name(d.kind);
    j["severity"] = severity_name(d.severity);
    if (d.transfer) j["transfer"] = transfer_name(*d.transfer);
    if (d.target != Target::None) j["target"] = target_name(d.target);
    if (d.address) j["address"] = hex(*d.address);
    if (d.length) j["length"] = *d.length;
    if (d.expected_bytes) j["expected_bytes"] = *d.expected_bytes;
    if (d.found_bytes) j["found_bytes"] = *d.found_bytes;
    if (d.offset) j["offset"] = *d.offset;
    if (d.undefined_bytes) j["undefined_bytes"] = *d.undefined_bytes;
    if (d.other_context) j["other_context"] = to_underlying(*d.other_context);
    if (d.other_thread) j["other_thread"] = *d.other_thread;
    if (d.hazard) j["hazard"] = hazard_name(*d.hazard);
    j["thread"] = d.thread;
    j["frames"] = d.frames;
    j["text"] = format_text(d);
    return j;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string format_text(const Diagnostic& d) {
    std::string out = d.severity == Severity::Error ? "Error: " : "Warning: ";
    out += headline(d);
    out += ".\n";
    std::vector<std::string> details;
    detail_lines(d, details);
    for (const auto& line : details) {
        out += line;
        out += '\n';
    }
    for (std::size_t i = 0; i < d.frames.size(); ++i) {
        out += i == 0 ? " at " : " by ";
        out += d.frames[i];
        out += '\n';
    }
    return out;
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0;
    std::size_t t = 0;
    std::size_t star = std::string_view::npos;
    std::size_t resume = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || (pattern[p] != '*' && pattern[p] == text[t]))) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            resume = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++resume;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

bool matches(const Suppression& s, const Diagnostic& d) {
    if (s.kind && *s.kind != d.kind) return false;

    // reach[j]: the patterns consumed so far can end just before frame j.
    const auto& frames = d.frames;
    std::vector<char> reach(frames.size() + 1, 0);
    reach[0] = 1;
    for (const auto& pat : s.frames) {
        std::vector<char> next(frames.size() + 1, 0);
        if (pat == kFrameEllipsis) {
            char any = 0;
            for (std::size_t j = 0; j <= frames.size(); ++j) {
                any = any || reach[j];
                next[j] = any;
            }
        } else {
            for (std::size_t j = 0; j < frames.size(); ++j) {
                if (reach[j] && glob_match(pat, frames[j])) next[j + 1] = 1;
            }
        }
        reach = std::move(next);
    }
    return std::any_of(reach.begin(), reach.end(), [](char c) { return c != 0; });
}

std::vector<Suppression> parse_suppressions(std::istream& in) {
    std::vector<Suppression> out;
    std::vector<std::string> items;
    bool inside = false;
    std::size_t open_line = 0;
    std::size_t lineno = 0;
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (!inside) {
            if (line != "{") throw SuppressionParseError(lineno, "expected '{' but found '" + line + "'");
            inside = true;
            open_line = lineno;
            items.clear();
            continue;
        }
        if (line == "{") throw SuppressionParseError(lineno, "unbalanced '{' inside a suppression block");
        if (line != "}") {
            items.push_back(line);
            continue;
        }
        inside = false;
        if (items.empty()) throw SuppressionParseError(lineno, "empty suppression block");
        if (items.size() < 3) {
            throw SuppressionParseError(lineno, "suppression '" + items[0] + "' needs a kind and at least one frame");
        }
        Suppression s;
        s.name = items[0];
        if (items[1] != "*") {
            s.kind = parse_kind(items[1]);
            if (!s.kind) throw SuppressionParseError(lineno, "unknown diagnostic kind '" + items[1] + "'");
        }
        s.frames.assign(items.begin() + 2, items.end());
        out.push_back(std::move(s));
    }
    if (inside) throw SuppressionParseError(open_line, "unterminated suppression block");
    return out;
}

std::vector<Suppression> parse_suppressions(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_suppressions(in);
}

std::string serialize_suppressions(const std::vector<Suppression>& sups) {
    std::string out;
    for (const auto& s : sups) {
        out += "{\n   " + s.name + "\n   " + (s.kind ? std::string(kind_name(*s.kind)) : "*") + "\n";
        for (const auto& f : s.frames) out += "   " + f + "\n";
        out += "}\n";
    }
    return out;
}

std::string summary_line(const ReportSummary& s) {
    return "ERROR SUMMARY: " + std::to_string(s.errors) + " errors, " + std::to_string(s.warnings) +
           " warnings (" + std::to_string(s.suppressed) + " suppressed)";
}

FinalReport finalize(const std::vector<Diagnostic>& diagnostics, const std::vector<Suppression>& suppressions) {
    FinalReport report;
    bool seen[std::size(kAllDiagKinds)] = {};
    for (const auto& d : diagnostics) {
        const bool hidden = std::any_of(suppressions.begin(), suppressions.end(),
                                        [&](const Suppression& s) { return matches(s, d); });
        if (hidden) {
            ++report.summary.suppressed;
            continue;
        }
        (d.is_error() ? report.summary.errors : report.summary.warnings)++;
        seen[static_cast<std::size_t>(d.kind)] = true;
        report.shown.push_back(d);
    }
    for (DiagKind k : kAllDiagKinds) {
        if (seen[static_cast<std::size_t>(k)]) report.summary.kinds.push_back(k);
    }

    nlohmann::ordered_json j;
    j["schema"] = kReportSchemaVersion;
    j["diagnostics"] = nlohmann::ordered_json::array();
    for (const auto& d : report.shown) j["diagnostics"].push_back(diagnostic_json(d));
    auto& summary = j["summary"];
    summary["errors"] = report.summary.errors;
    summary["warnings"] = report.summary.warnings;
    summary["suppressed"] = report.summary.suppressed;
    summary["kinds"] = nlohmann::ordered_json::array();
    for (DiagKind k : report.summary.kinds) summary["kinds"].push_back(kind_name(k));
    summary["line"] = summary_line(report.summary);
    report.json = j.dump(2) + "\n";
    return report;
}

}  // namespace memlens
