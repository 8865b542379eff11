#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "comm.hpp"
#include "inner_solvers.hpp"
#include "multisplit.hpp"
#include "problems.hpp"

namespace msplit {

enum class RunMode { baseline, sync, async };

const char* to_string(RunMode mode) noexcept;

/// Every tunable of one experiment. Keys accepted by `set` are the CLI
/// flag names without the leading dashes.
struct ExperimentConfig {
    std::size_t nx = 8;
    std::size_t ny = 8;
    std::size_t nz = 8;
    /// x-, x+, y-, y+, z-, z+
    std::array<double, kNumFaces> boundary{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::size_t gx = 2;
    std::size_t gy = 1;
    std::size_t gz = 1;
    std::size_t overlap = 0;
    InnerKind inner = InnerKind::gmres;
    std::size_t inner_its = 10;
    double inner_tol = 0.0;
    /// 0 selects the default: 30 for baseline runs, inner_its for the inner stage.
    std::size_t restart = 0;
    RunMode mode = RunMode::sync;
    std::size_t buffers = 100;
    DelayModel delay;
    std::uint64_t seed = 0;
    double tol = 1e-6;
    std::size_t max_outer = 10000;
    ResidualCheck residual_mode = ResidualCheck::block_combiner;
    Execution execution = Execution::replay;
    std::size_t true_every = 10;

    /// Throws ConfigError naming the key on unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Whitespace-separated key=value pairs; `parse_echo(echo())` round-trips.
    std::string echo() const;
    static ExperimentConfig parse_echo(std::string_view text);
    /// Applies "key=value" lines; '#' starts a comment.
    void apply_file_text(std::string_view text);

    void validate() const;

    Grid3D grid() const;
    OuterConfig outer_config() const;
    InnerSolverSpec baseline_spec() const;

    bool operator==(const ExperimentConfig&) const = default;
};

enum class RunStatus { converged, max_outer };

struct RunSummary {
    RunStatus status = RunStatus::max_outer;
    std::size_t outer_iterations = 0;
    std::size_t total_inner_iterations = 0;
    double iterations_per_second = 0.0;
    double final_true_residual = 0.0;
    double wall_seconds = 0.0;
    std::string config_echo;
};

struct RunResult {
    RunSummary summary;
    ResidualTrace trace;
    Vector solution;
};

RunResult run_experiment(const ExperimentConfig& config);

}  // namespace msplit
