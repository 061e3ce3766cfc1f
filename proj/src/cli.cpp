#include "memlens/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "memlens/report.hpp"
#include "memlens/trace.hpp"

namespace memlens::cli {

namespace {

struct CliConfig {
    std::string trace_path;
    std::optional<std::string> suppression_path;
    std::optional<std::string> json_out;
    bool leak_check = true;
    bool undef_is_error = false;
    std::uint64_t device_capacity = kDefaultDeviceCapacity;
};

class Failure : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<Suppression> load_suppressions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Failure("cannot open suppression file '" + path + "'");
    try {
        return parse_suppressions(in);
    } catch (const SuppressionParseError& e) {
        throw Failure(path + ":" + std::to_string(e.line()) + ": " + e.what());
    }
}

int check(const CliConfig& cfg, std::ostream& err) {
    ReplayConfig replay_cfg;
    replay_cfg.driver.device_capacity = cfg.device_capacity;
    replay_cfg.driver.leak_check = cfg.leak_check;
    replay_cfg.driver.check.undef_is_error = cfg.undef_is_error;

    std::optional<std::string> sup_path = cfg.suppression_path;
    if (!sup_path) {
        if (const char* env = std::getenv("MEMLENS_SUPPRESSIONS"); env && *env) sup_path = env;
    }
    if (sup_path) replay_cfg.suppressions = load_suppressions(*sup_path);

    std::ifstream in(cfg.trace_path);
    if (!in) throw Failure("cannot open trace '" + cfg.trace_path + "'");

    ReplayResult result;
    try {
        result = replay_stream(in, replay_cfg);
    } catch (const ParseError& e) {
        throw Failure(cfg.trace_path + ": parse error at " + e.what());
    } catch (const ReplayError& e) {
        throw Failure(cfg.trace_path + ": replay error at " + e.what());
    }

    const FinalReport report = finalize(result.diagnostics, replay_cfg.suppressions);
    if (cfg.json_out) {
        std::ofstream json(*cfg.json_out, std::ios::binary);
        if (!json || !(json << report.json)) throw Failure("cannot write JSON report '" + *cfg.json_out + "'");
    }
    for (const auto& d : report.shown) err << format_text(d) << '\n';
    err << summary_line(report.summary) << '\n';
    return report.summary.errors > 0 ? kExitErrors : kExitClean;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Replays a recorded device-memory API trace through the transfer checker.", "memlens"};
    app.require_subcommand(1);

    CliConfig cfg;
    auto* check_cmd = app.add_subcommand("check", "Check a trace file");
    check_cmd->add_option("trace", cfg.trace_path, "Trace file (JSON lines)")->required();
    check_cmd->add_option("--suppressions", cfg.suppression_path,
                          "Suppression file (default: $MEMLENS_SUPPRESSIONS)");
    check_cmd->add_option("--json-report", cfg.json_out, "Write a JSON report to this path");
    check_cmd->add_flag("!--no-leak-check", cfg.leak_check, "Skip the device leak report");
    check_cmd->add_flag("--undef-is-error", cfg.undef_is_error, "Treat undefined host data as an error");
    check_cmd->add_option("--device-capacity", cfg.device_capacity, "Device memory per context, in bytes")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitClean;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitClean;
    } catch (const CLI::ParseError& e) {
        err << "memlens: " << e.what() << '\n';
        return kExitFailure;
    }

    try {
        return check(cfg, err);
    } catch (const Failure& e) {
        err << "memlens: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "memlens: internal error: " << e.what() << '\n';
    }
    return kExitFailure;
}

}  // namespace memlens::cli
