#include "experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "errors.hpp"

namespace msplit {

namespace {

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(std::string_view key, std::string_view value)
{
    std::size_t out = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc() || ptr != end) {
        throw ConfigError(std::string(key), "expected a non-negative integer, got '" +
                                                std::string(value) + "'");
    }
    return out;
}

double to_real(std::string_view key, std::string_view value)
{
    const std::string text(value);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || !std::isfinite(out)) {
        throw ConfigError(std::string(key), "expected a real number, got '" + text + "'");
    }
    return out;
}

}  // namespace

const char* to_string(RunMode mode) noexcept
{
    switch (mode) {
    case RunMode::baseline: return "baseline";
    case RunMode::sync: return "sync";
    case RunMode::async: return "async";
    }
    return "?";
}

void ExperimentConfig::set(std::string_view key, std::string_view value)
{
    const std::string k(key);
    if (k == "nx") {
        nx = to_count(key, value);
    } else if (k == "ny") {
        ny = to_count(key, value);
    } else if (k == "nz") {
        nz = to_count(key, value);
    } else if (k == "gx") {
        gx = to_count(key, value);
    } else if (k == "gy") {
        gy = to_count(key, value);
    } else if (k == "gz") {
        gz = to_count(key, value);
    } else if (k == "overlap") {
        overlap = to_count(key, value);
    } else if (k == "boundary") {
        std::array<double, kNumFaces> faces{};
        std::size_t n = 0;
        std::size_t start = 0;
        while (start <= value.size()) {
            const auto comma = value.find(',', start);
            const auto part = value.substr(start, comma == std::string_view::npos
                                                      ? std::string_view::npos
                                                      : comma - start);
            if (n == kNumFaces) {
                throw ConfigError(k, "expected six comma-separated face values");
            }
            faces[n++] = to_real(key, part);
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        if (n != kNumFaces) {
            throw ConfigError(k, "expected six comma-separated face values");
        }
        boundary = faces;
    } else if (k == "inner") {
        auto kind = parse_inner_kind(value);
        if (!kind) {
            throw ConfigError(k, "expected jacobi|cg|gmres|exact, got '" + std::string(value) +
                                     "'");
        }
        inner = *kind;
    } else if (k == "inner-its") {
        inner_its = to_count(key, value);
    } else if (k == "inner-tol") {
        inner_tol = to_real(key, value);
    } else if (k == "restart") {
        restart = to_count(key, value);
    } else if (k == "mode") {
        if (value == "baseline") {
            mode = RunMode::baseline;
        } else if (value == "sync") {
            mode = RunMode::sync;
        } else if (value == "async") {
            mode = RunMode::async;
        } else {
            throw ConfigError(k, "expected baseline|sync|async, got '" + std::string(value) +
                                     "'");
        }
    } else if (k == "R") {
        buffers = to_count(key, value);
    } else if (k == "delay") {
        auto d = DelayModel::parse(value);
        if (!d) {
            throw ConfigError(k, "expected none|fixed:d|uniform:lo:hi|jitter, got '" +
                                     std::string(value) + "'");
        }
        delay = *d;
    } else if (k == "seed") {
        seed = to_count(key, value);
    } else if (k == "tol") {
        tol = to_real(key, value);
    } else if (k == "max-outer") {
        max_outer = to_count(key, value);
    } else if (k == "residual-mode") {
        if (value == "combiner" || value == "paper") {
            residual_mode = ResidualCheck::block_combiner;
        } else if (value == "true") {
            residual_mode = ResidualCheck::true_global;
        } else {
            throw ConfigError(k, "expected combiner|true, got '" + std::string(value) + "'");
        }
    } else if (k == "execution") {
        if (value == "replay") {
            execution = Execution::replay;
        } else if (value == "threads") {
            execution = Execution::threads;
        } else {
            throw ConfigError(k, "expected replay|threads, got '" + std::string(value) + "'");
        }
    } else if (k == "true-every") {
        true_every = to_count(key, value);
    } else {
        throw ConfigError(k, "unknown configuration key");
    }
}

std::string ExperimentConfig::echo() const
{
    std::ostringstream out;
    out << "nx=" << nx << " ny=" << ny << " nz=" << nz << " boundary=";
    for (std::size_t f = 0; f < kNumFaces; ++f) {
        out << (f ? "," : "") << format_double(boundary[f]);
    }
    out << " gx=" << gx << " gy=" << gy << " gz=" << gz << " overlap=" << overlap
        << " inner=" << to_string(inner) << " inner-its=" << inner_its
        << " inner-tol=" << format_double(inner_tol) << " restart=" << restart
        << " mode=" << to_string(mode) << " R=" << buffers << " delay=" << delay.to_string()
        << " seed=" << seed << " tol=" << format_double(tol) << " max-outer=" << max_outer
        << " residual-mode="
        << (residual_mode == ResidualCheck::block_combiner ? "combiner" : "true")
        << " execution=" << (execution == Execution::replay ? "replay" : "threads")
        << " true-every=" << true_every;
    return out.str();
}

ExperimentConfig ExperimentConfig::parse_echo(std::string_view text)
{
    ExperimentConfig cfg;
    std::istringstream in{std::string(text)};
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(token, "expected key=value");
        }
        cfg.set(token.substr(0, eq), token.substr(eq + 1));
    }
    return cfg;
}

void ExperimentConfig::apply_file_text(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(t, "expected key=value");
        }
        set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
}

void ExperimentConfig::validate() const
{
    const std::size_t dims[3] = {nx, ny, nz};
    const std::size_t blocks[3] = {gx, gy, gz};
    const char* grid_names[3] = {"nx", "ny", "nz"};
    const char* block_names[3] = {"gx", "gy", "gz"};
    std::size_t min_width = static_cast<std::size_t>(-1);
    for (int d = 0; d < 3; ++d) {
        if (dims[d] < 1) {
            throw ConfigError(grid_names[d], "must be >= 1");
        }
        if (mode == RunMode::baseline) {
            continue;
        }
        if (blocks[d] < 1 || blocks[d] > dims[d]) {
            throw ConfigError(block_names[d], "block count " + std::to_string(blocks[d]) +
                                                  " must be in [1, " + grid_names[d] + "=" +
                                                  std::to_string(dims[d]) + "]");
        }
        if (blocks[d] > 1) {
            min_width = std::min(min_width, dims[d] / blocks[d]);
        }
    }
    if (mode != RunMode::baseline && overlap >= min_width) {
        throw ConfigError("overlap", "must be smaller than the smallest owned block width "
                                     "along a split dimension (" +
                                         std::to_string(min_width) + ")");
    }
    if (mode == RunMode::baseline && inner == InnerKind::exact) {
        throw ConfigError("inner", "baseline runs need an iterative solver");
    }
    if (!(tol > 0.0)) {
        throw ConfigError("tol", "must be > 0");
    }
    if (max_outer < 1) {
        throw ConfigError("max-outer", "must be >= 1");
    }
    if (mode != RunMode::baseline) {
        outer_config().validate();
    } else {
        baseline_spec().validate();
    }
}

Grid3D ExperimentConfig::grid() const
{
    Grid3D g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.boundary.face_values = boundary;
    return g;
}

OuterConfig ExperimentConfig::outer_config() const
{
    OuterConfig c;
    c.block_grid = {gx, gy, gz};
    c.overlap = overlap;
    c.inner = {inner, inner_its, inner_tol, restart == 0 ? inner_its : restart};
    c.mode = mode == RunMode::async ? CommMode::async : CommMode::sync;
    c.buffers = buffers;
    c.delay = delay.with_seed(seed);
    c.tol = tol;
    c.max_outer = max_outer;
    c.residual_check = residual_mode;
    c.execution = execution;
    c.true_residual_interval = true_every;
    return c;
}

InnerSolverSpec ExperimentConfig::baseline_spec() const
{
    return {inner, max_outer, tol, restart == 0 ? 30 : restart};
}

RunResult run_experiment(const ExperimentConfig& config)
{
    config.validate();
    const LinearProblem problem = build_laplace_3d(config.grid());
    RunResult out;
    out.summary.config_echo = config.echo();

    if (config.mode == RunMode::baseline) {
        const auto spec = config.baseline_spec();
        const auto start = std::chrono::steady_clock::now();
        const Vector x0(problem.rhs.size(), 0.0);
        auto monitor = [&](std::size_t it, double rel) {
            TraceRow row;
            row.outer_iteration = it;
            row.time = static_cast<double>(it);
            row.estimated_residual = rel;
            row.inner_iterations = 1;
            out.trace.rows.push_back(row);
        };
        SolveResult solved;
        switch (spec.kind) {
        case InnerKind::jacobi: solved = jacobi_solve(problem.matrix, problem.rhs, x0, spec, monitor); break;
        case InnerKind::cg: solved = cg_solve(problem.matrix, problem.rhs, x0, spec, monitor); break;
        default: solved = gmres_solve(problem.matrix, problem.rhs, x0, spec, monitor); break;
        }
        out.summary.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (solved.report.stop_reason == StopReason::breakdown) {
            throw BreakdownError(0, solved.report.iterations_used, solved.report.detail);
        }
        out.solution = std::move(solved.x);
        out.summary.final_true_residual = true_relative_residual(problem, out.solution);
        if (!out.trace.rows.empty()) {
            out.trace.rows.back().true_residual = out.summary.final_true_residual;
        }
        out.summary.status = solved.report.stop_reason == StopReason::tolerance_met
                                 ? RunStatus::converged
                                 : RunStatus::max_outer;
        out.summary.outer_iterations = solved.report.iterations_used;
        out.summary.total_inner_iterations = solved.report.iterations_used;
    } else {
        OuterResult r = outer_solve(problem, config.outer_config());
        out.summary.status =
            r.status == OuterStatus::converged ? RunStatus::converged : RunStatus::max_outer;
        out.summary.outer_iterations = r.outer_iterations;
        out.summary.total_inner_iterations = r.total_inner_iterations;
        out.summary.final_true_residual = r.final_true_residual;
        out.summary.wall_seconds = r.wall_seconds;
        out.trace = std::move(r.trace);
        out.solution = std::move(r.solution);
    }
    if (out.summary.wall_seconds > 0.0) {
        out.summary.iterations_per_second =
            static_cast<double>(out.summary.outer_iterations) / out.summary.wall_seconds;
    }
    return out;
}

}  // namespace msplit
