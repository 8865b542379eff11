#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "comm.hpp"
#include "inner_solvers.hpp"
#include "linalg.hpp"
#include "problems.hpp"

namespace msplit {

enum class ResidualCheck { block_combiner, true_global };
enum class Execution { replay, threads };

struct OuterConfig {
    BlockGrid block_grid;
    std::size_t overlap = 0;
    InnerSolverSpec inner{InnerKind::gmres, 10, 0.0, 10};
    CommMode mode = CommMode::sync;
    std::size_t buffers = 100;
    DelayModel delay;
    /// Global relative residual target.
    double tol = 1e-6;
    std::size_t max_outer = 10000;
    ResidualCheck residual_check = ResidualCheck::block_combiner;
    Execution execution = Execution::replay;
    /// Sample the true residual every N outer iterations (replay only); 0 = final only.
    std::size_t true_residual_interval = 10;

    void validate() const;
};

struct TraceRow {
    std::size_t outer_iteration = 0;
    double time = 0.0;
    double estimated_residual = 0.0;
    std::optional<double> true_residual;
    std::size_t inner_iterations = 0;
    std::size_t max_halo_staleness = 0;
};

struct ResidualTrace {
    std::vector<TraceRow> rows;
};

enum class OuterStatus { converged, max_outer };

struct OuterResult {
    Vector solution;
    ResidualTrace trace;
    OuterStatus status = OuterStatus::max_outer;
    std::size_t outer_iterations = 0;
    std::size_t total_inner_iterations = 0;
    double final_true_residual = 0.0;
    double wall_seconds = 0.0;
    std::size_t confirm_rounds = 0;
    /// Lag (receiver iteration minus payload iteration) of every applied
    /// asynchronous halo payload, in application order per (block, neighbor).
    std::size_t max_applied_staleness = 0;
};

/// Where received contributions land in a block's view (extended region
/// first, then halo columns) and the equal overlap weights per position.
struct MergePlan {
    std::size_t own_size = 0;
    std::vector<std::vector<std::size_t>> receive_positions;  // per neighbor slot
    std::vector<double> inverse_cover;                        // per view position
};

/// Weighted average of the block's own solve and every neighbor's latest
/// contribution: value = sum over covering blocks of (1/m) * contribution.
Vector merge_overlap(const MergePlan& plan, std::span<const double> own,
                     const std::vector<Vector>& contributions);

/// sqrt(sum r_i^2) over block-local relative residues.
double estimate_global_residual(std::span<const double> local_relative_residues);

/// ||b - A x|| / ||b|| for the assembled global solution.
double true_relative_residual(const LinearProblem& problem, std::span<const double> x);

enum class TerminationAction { continue_iterating, confirm, stop };

TerminationAction check_termination(double estimate, double tol, std::size_t completed,
                                    std::size_t max_outer, CommMode mode);

/// Per-block state and the steps of one outer iteration.
class BlockWorker {
public:
    BlockWorker(const LinearProblem& problem, const BlockDecomposition& decomp,
                std::size_t block_id, const OuterConfig& config);

    std::size_t id() const noexcept { return id_; }
    std::size_t iteration() const noexcept { return k_; }
    const std::vector<std::size_t>& neighbors() const noexcept { return neighbors_; }
    const std::vector<std::size_t>& extended() const noexcept { return extended_; }
    const std::vector<std::size_t>& view_globals() const noexcept { return view_globals_; }
    const BlockSystem& system() const noexcept { return system_; }
    const MergePlan& merge_plan() const noexcept { return merge_; }

    /// Current merged values over extended region + halo columns.
    std::span<const double> view() const noexcept { return view_; }
    /// Overwrite the view (and every cached contribution) from a global vector.
    void load_global(std::span<const double> x);

    /// b_i - sum of couplings times the latest halo values.
    Vector assemble_rhs() const;
    /// Inner solve warm-started from the extended-region view. Returns inner iterations.
    std::size_t solve_block();
    std::span<const double> contribution() const noexcept { return contribution_; }

    std::vector<HaloMessage> outgoing() const;
    /// Sync: every neighbor's same-iteration message.
    void absorb(const std::vector<HaloMessage>& incoming);
    /// Async: latest delivered payload per neighbor, possibly none.
    void absorb(const std::vector<AsyncIncoming>& incoming);
    void merge();
    /// Owned-row residual of the current view, relative to ||b_owned||
    /// (||b|| when the block's rhs is zero).
    double local_relative_residual() const;
    void advance() noexcept { ++k_; }

    /// Largest k - sequence over cached neighbor contributions.
    std::size_t halo_staleness() const noexcept;
    /// Lags of payloads applied by the last async absorb.
    const std::vector<std::size_t>& applied_lags() const noexcept { return applied_lags_; }
    const std::vector<long>& cache_sequences() const noexcept { return cache_seq_; }

    // Synchronous confirmation round on the gathered (owned) solution.
    std::vector<HaloMessage> confirm_outgoing(std::size_t epoch) const;
    double confirm_residual(const std::vector<HaloMessage>& incoming) const;

    /// Owned values, written into the global vector.
    void scatter_owned(std::span<double> global) const;

private:
    double owned_residual(std::span<const double> values) const;

    std::size_t id_;
    std::size_t k_ = 0;
    const LinearProblem* problem_;
    std::vector<std::size_t> neighbors_;
    std::vector<std::size_t> extended_;
    std::vector<std::size_t> view_globals_;
    std::vector<std::size_t> owned_local_;  // view positions of owned points
    BlockSystem system_;
    std::vector<std::pair<std::size_t, std::size_t>> coupling_positions_;  // (row, view pos)
    std::vector<double> coupling_values_;
    Vector b_ext_;
    CsrMatrix owned_rows_;  // owned rows of A over view positions
    Vector b_owned_;
    double residual_scale_ = 1.0;
    InnerSolver solver_;

    std::vector<std::vector<std::size_t>> send_positions_;  // per neighbor: extended indices
    MergePlan merge_;
    std::vector<std::vector<std::size_t>> confirm_send_;     // per neighbor: view positions
    std::vector<std::vector<std::size_t>> confirm_receive_;  // per neighbor: view positions

    Vector view_;
    Vector contribution_;
    std::vector<Vector> cache_;
    std::vector<long> cache_seq_;
    std::vector<std::size_t> applied_lags_;
};

/// Runs the two-stage block iteration to termination.
OuterResult outer_solve(const LinearProblem& problem, const OuterConfig& config);

/// Variant that reports every applied async lag (for protocol tests).
using LagObserver = std::function<void(std::size_t block, std::size_t neighbor,
                                       long sequence, std::size_t lag)>;
OuterResult outer_solve(const LinearProblem& problem, const OuterConfig& config,
                        const LagObserver& observer);

/// The outer iteration with exact block solves as a linear map,
/// x -> sum_i D_i (A_ii^{-1}(b_i - A_i,out x)). With b = 0 this is the
/// multisplitting iteration matrix.
class IterationOperator {
public:
    IterationOperator(const LinearProblem& problem, const BlockDecomposition& decomp);

    std::size_t size() const noexcept { return size_; }
    void apply(std::span<const double> x, std::span<double> out, bool with_rhs = false) const;
    LinearMap as_map() const;

private:
    struct Part {
        std::vector<std::size_t> extended;
        BlockSystem system;
        std::shared_ptr<const LuFactorization> lu;
    };
    const LinearProblem* problem_;
    std::size_t size_;
    std::vector<Part> parts_;
    std::vector<double> inverse_cover_;
};

}  // namespace msplit
