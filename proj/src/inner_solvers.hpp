#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "linalg.hpp"

namespace msplit {

enum class InnerKind { jacobi, cg, gmres, exact };
enum class StopReason { tolerance_met, max_iterations, breakdown };

const char* to_string(InnerKind kind) noexcept;
const char* to_string(StopReason reason) noexcept;
std::optional<InnerKind> parse_inner_kind(std::string_view text) noexcept;

struct InnerSolverSpec {
    InnerKind kind = InnerKind::gmres;
    std::size_t max_iterations = 10;
    /// Relative residual target; 0 runs exactly max_iterations.
    double tolerance = 0.0;
    /// GMRES restart length.
    std::size_t restart = 30;

    /// Throws ConfigError naming the bad field.
    void validate() const;
};

struct InnerSolveReport {
    std::size_t iterations_used = 0;
    double final_relative_residual = 0.0;
    StopReason stop_reason = StopReason::max_iterations;
    std::string detail;
};

struct SolveResult {
    Vector x;
    InnerSolveReport report;
};

/// Called once per iteration with the (estimated) relative residual.
using IterationMonitor = std::function<void(std::size_t iteration, double relative_residual)>;

/// Point Jacobi: x_i <- (b_i - sum_{j != i} a_ij x_j) / a_ii.
SolveResult jacobi_solve(const CsrMatrix& a, std::span<const double> b,
                         std::span<const double> x0, const InnerSolverSpec& spec,
                         const IterationMonitor& monitor = {});

/// Conjugate gradients for symmetric positive definite operators.
SolveResult cg_solve(const CsrMatrix& a, std::span<const double> b,
                     std::span<const double> x0, const InnerSolverSpec& spec,
                     const IterationMonitor& monitor = {});

/// Restarted GMRES(restart): modified Gram-Schmidt Arnoldi, Givens
/// rotations for the small least-squares problem. The monitor sees the
/// implicit residual |g_{j+1}| / ||b|| after every Arnoldi step.
SolveResult gmres_solve(const CsrMatrix& a, std::span<const double> b,
                        std::span<const double> x0, const InnerSolverSpec& spec,
                        const IterationMonitor& monitor = {});

/// A solver bound to one matrix. For `exact` the dense LU factorization is
/// computed once and reused on every call.
class InnerSolver {
public:
    InnerSolver(const CsrMatrix& a, InnerSolverSpec spec);

    const InnerSolverSpec& spec() const noexcept { return spec_; }
    SolveResult solve(std::span<const double> b, std::span<const double> x0,
                      const IterationMonitor& monitor = {}) const;

private:
    CsrMatrix a_;
    InnerSolverSpec spec_;
    std::shared_ptr<const LuFactorization> lu_;
};

}  // namespace msplit
