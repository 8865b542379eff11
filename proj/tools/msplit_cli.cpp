// Experiment harness for the msplit library: single runs, parameter sweeps
// and trace comparison. Talks to the solver only through the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msplit/msplit.h"

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxOuter = 2;

// Keys settable from the command line; each maps to --<key>.
const std::vector<std::pair<std::string, std::string>> kConfigFlags = {
    {"nx", "interior unknowns in x"},
    {"ny", "interior unknowns in y"},
    {"nz", "interior unknowns in z"},
    {"boundary", "Dirichlet values x-,x+,y-,y+,z-,z+"},
    {"gx", "blocks in x"},
    {"gy", "blocks in y"},
    {"gz", "blocks in z"},
    {"overlap", "overlap layers per face"},
    {"inner", "inner solver: jacobi|cg|gmres|exact"},
    {"inner-its", "maximum inner iterations"},
    {"inner-tol", "inner relative residual target (0 = run to the cap)"},
    {"restart", "GMRES restart length (0 = default)"},
    {"mode", "baseline|sync|async"},
    {"R", "asynchronous halo buffers per neighbor"},
    {"delay", "none|fixed:d|uniform:lo:hi|jitter"},
    {"seed", "delay model seed"},
    {"tol", "global relative residual target"},
    {"max-outer", "outer iteration cap (iteration cap for baseline)"},
    {"residual-mode", "combiner|true (block-residual combiner or true global residual)"},
    {"execution", "replay|threads"},
    {"true-every", "sample the true residual every N iterations (replay)"},
};

struct ConfigDeleter {
    void operator()(msplit_config* c) const { msplit_config_destroy(c); }
};
struct ResultDeleter {
    void operator()(msplit_result* r) const { msplit_result_destroy(r); }
};
struct ComparisonDeleter {
    void operator()(msplit_comparison* c) const { msplit_comparison_destroy(c); }
};
using ConfigPtr = std::unique_ptr<msplit_config, ConfigDeleter>;
using ResultPtr = std::unique_ptr<msplit_result, ResultDeleter>;

class CliError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void check(msplit_status status)
{
    if (status == MSPLIT_OK) {
        return;
    }
    std::string message = msplit_last_error();
    if (status == MSPLIT_ERR_CONFIG && *msplit_last_error_field() != '\0' &&
        message.rfind(msplit_last_error_field(), 0) != 0) {
        message = std::string(msplit_last_error_field()) + ": " + message;
    }
    throw CliError(message);
}

struct ConfigOptions {
    std::map<std::string, std::string> values;
    std::string config_file;
};

void add_config_options(CLI::App& app, ConfigOptions& opts)
{
    app.add_option("--config", opts.config_file, "key=value configuration file");
    for (const auto& [key, help] : kConfigFlags) {
        app.add_option("--" + key, opts.values[key], help);
    }
}

ConfigPtr build_config(const CLI::App& app, const ConfigOptions& opts)
{
    msplit_config* raw = nullptr;
    check(msplit_config_create(&raw));
    ConfigPtr config(raw);
    if (!opts.config_file.empty()) {
        std::ifstream in(opts.config_file);
        if (!in) {
            throw CliError("cannot read config file " + opts.config_file);
        }
        std::stringstream text;
        text << in.rdbuf();
        check(msplit_config_load_text(config.get(), text.str().c_str()));
    }
    // Flags override the file.
    for (const auto& [key, help] : kConfigFlags) {
        if (app.count("--" + key) > 0) {
            check(msplit_config_set(config.get(), key.c_str(), opts.values.at(key).c_str()));
        }
    }
    check(msplit_config_validate(config.get()));
    return config;
}

const char* status_name(msplit_run_status s)
{
    return s == MSPLIT_RUN_CONVERGED ? "converged" : "max_outer";
}

void print_summary(std::ostream& out, const msplit_summary& s, const char* echo)
{
    out << std::left << std::setw(24) << "status" << status_name(s.status) << '\n'
        << std::setw(24) << "outer_iterations" << s.outer_iterations << '\n'
        << std::setw(24) << "total_inner_iterations" << s.total_inner_iterations << '\n'
        << std::setw(24) << "iterations_per_second" << s.iterations_per_second << '\n'
        << std::setw(24) << "final_true_residual" << std::scientific << std::setprecision(6)
        << s.final_true_residual << std::defaultfloat << '\n'
        << std::setw(24) << "wall_seconds" << s.wall_seconds << '\n'
        << std::setw(24) << "config" << echo << '\n';
}

void write_summary_csv(const std::string& path, const std::vector<std::string>& labels,
                       const std::vector<msplit_summary>& rows,
                       const std::vector<std::string>& echoes)
{
    std::ofstream out(path);
    if (!out) {
        throw CliError("cannot write summary file " + path);
    }
    out << "label,status,outer_iterations,total_inner_iterations,iterations_per_second,"
           "final_true_residual,wall_seconds,config\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = rows[i];
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", s.final_true_residual);
        out << labels[i] << ',' << status_name(s.status) << ',' << s.outer_iterations << ','
            << s.total_inner_iterations << ',' << s.iterations_per_second << ',' << buf << ','
            << s.wall_seconds << ",\"" << echoes[i] << "\"\n";
    }
}

ResultPtr run_one(const msplit_config* config, msplit_summary& summary)
{
    msplit_result* raw = nullptr;
    const msplit_status st = msplit_run(config, &raw);
    if (st == MSPLIT_ERR_BREAKDOWN) {
        throw CliError(std::string("solver breakdown in block ") +
                       std::to_string(msplit_last_error_block()) + ": " + msplit_last_error());
    }
    check(st);
    ResultPtr result(raw);
    check(msplit_result_summary(result.get(), &summary));
    return result;
}

int cmd_run(const CLI::App& app, const ConfigOptions& opts, const std::string& trace_out,
            const std::string& summary_out)
{
    auto config = build_config(app, opts);
    msplit_summary summary{};
    auto result = run_one(config.get(), summary);
    if (!trace_out.empty()) {
        check(msplit_result_write_trace(result.get(), trace_out.c_str()));
    }
    const std::string echo = msplit_result_config_echo(result.get());
    print_summary(std::cout, summary, echo.c_str());
    if (!summary_out.empty()) {
        write_summary_csv(summary_out, {"run"}, {summary}, {echo});
    }
    return summary.status == MSPLIT_RUN_CONVERGED ? kExitConverged : kExitMaxOuter;
}

std::vector<std::string> split_values(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

// "4x2x2" or "4:2:2" -> {"4", "2", "2"}
std::vector<std::string> parse_block_grid(const std::string& value)
{
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
        if (c == 'x' || c == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    if (parts.size() != 3) {
        throw CliError("block_grid value '" + value + "' must look like 4x2x2");
    }
    return parts;
}

int cmd_sweep(const CLI::App& app, const ConfigOptions& opts, const std::string& axis,
              const std::string& values_text, const std::string& out_dir,
              const std::string& summary_out)
{
    const auto values = split_values(values_text);
    if (values.empty()) {
        throw CliError("values: at least one value is required");
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
    }
    std::vector<msplit_summary> rows;
    std::vector<std::string> echoes;
    for (const auto& value : values) {
        auto config = build_config(app, opts);
        if (axis == "block_grid") {
            const auto g = parse_block_grid(value);
            check(msplit_config_set(config.get(), "gx", g[0].c_str()));
            check(msplit_config_set(config.get(), "gy", g[1].c_str()));
            check(msplit_config_set(config.get(), "gz", g[2].c_str()));
        } else if (axis == "inner_max_its") {
            check(msplit_config_set(config.get(), "inner-its", value.c_str()));
        } else if (axis == "overlap") {
            check(msplit_config_set(config.get(), "overlap", value.c_str()));
        } else if (axis == "mode") {
            check(msplit_config_set(config.get(), "mode", value.c_str()));
        } else {
            throw CliError("axis: expected block_grid|inner_max_its|overlap|mode, got '" +
                           axis + "'");
        }
        check(msplit_config_validate(config.get()));
        msplit_summary summary{};
        auto result = run_one(config.get(), summary);
        if (!out_dir.empty()) {
            const auto path = std::filesystem::path(out_dir) / ("trace_" + axis + "_" + value + ".csv");
            check(msplit_result_write_trace(result.get(), path.string().c_str()));
        }
        rows.push_back(summary);
        echoes.emplace_back(msplit_result_config_echo(result.get()));
    }

    std::cout << std::left << std::setw(16) << axis << std::right << std::setw(12) << "status"
              << std::setw(18) << "outer_iterations" << std::setw(14) << "inner_total"
              << std::setw(16) << "true_residual" << '\n';
    bool all_converged = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        all_converged = all_converged && rows[i].status == MSPLIT_RUN_CONVERGED;
        std::cout << std::left << std::setw(16) << values[i] << std::right << std::setw(12)
                  << status_name(rows[i].status) << std::setw(18) << rows[i].outer_iterations
                  << std::setw(14) << rows[i].total_inner_iterations << std::setw(16)
                  << std::scientific << std::setprecision(3) << rows[i].final_true_residual
                  << std::defaultfloat << '\n';
    }
    if (!summary_out.empty()) {
        write_summary_csv(summary_out, values, rows, echoes);
    }
    return all_converged ? kExitConverged : kExitMaxOuter;
}

int cmd_compare(const std::vector<std::string>& traces, const std::string& reference,
                const std::string& csv_out)
{
    std::size_t ref = 0;
    if (!reference.empty()) {
        bool found = false;
        for (std::size_t i = 0; i < traces.size(); ++i) {
            if (traces[i] == reference) {
                ref = i;
                found = true;
            }
        }
        if (!found) {
            try {
                ref = std::stoul(reference);
            } catch (const std::exception&) {
                throw CliError("reference: '" + reference + "' is neither a trace nor an index");
            }
        }
    }
    std::vector<const char*> paths;
    for (const auto& t : traces) {
        paths.push_back(t.c_str());
    }
    msplit_comparison* raw = nullptr;
    check(msplit_compare(paths.data(), paths.size(), ref, &raw));
    std::unique_ptr<msplit_comparison, ComparisonDeleter> cmp(raw);
    std::cout << msplit_comparison_text(cmp.get());
    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) {
            throw CliError("cannot write " + csv_out);
        }
        out << msplit_comparison_csv(cmp.get());
    }
    return kExitConverged;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Two-stage block multisplitting solver: experiment harness"};
    app.require_subcommand(1);

    ConfigOptions run_opts;
    std::string run_trace;
    std::string run_summary;
    auto* run = app.add_subcommand("run", "single solve; writes a CSV residual trace");
    add_config_options(*run, run_opts);
    run->add_option("--out", run_trace, "CSV trace output path");
    run->add_option("--summary-out", run_summary, "summary CSV output path");

    ConfigOptions sweep_opts;
    std::string axis;
    std::string values;
    std::string out_dir;
    std::string sweep_summary;
    auto* sweep = app.add_subcommand("sweep", "vary one parameter, everything else fixed");
    add_config_options(*sweep, sweep_opts);
    sweep->add_option("--axis", axis, "block_grid|inner_max_its|overlap|mode")->required();
    sweep->add_option("--values", values, "comma-separated values, e.g. 2x1x1,4x1x1")
        ->required();
    sweep->add_option("--out-dir", out_dir, "directory for per-value traces");
    sweep->add_option("--summary-out", sweep_summary, "summary CSV output path");

    std::vector<std::string> traces;
    std::string reference;
    std::string csv_out;
    auto* compare = app.add_subcommand("compare", "compare traces against a reference run");
    compare->add_option("traces", traces, "trace CSV files")->required();
    compare->add_option("--reference", reference, "reference trace path or index (default 0)");
    compare->add_option("--csv-out", csv_out, "comparison CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitError;
    }

    try {
        if (*run) {
            return cmd_run(*run, run_opts, run_trace, run_summary);
        }
        if (*sweep) {
            return cmd_sweep(*sweep, sweep_opts, axis, values, out_dir, sweep_summary);
        }
        return cmd_compare(traces, reference, csv_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}
