#include "inner_solvers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace msplit {

namespace {

constexpr double kStagnation = 1e-14;

void check_dims(const CsrMatrix& a, std::span<const double> b, std::span<const double> x0)
{
    if (a.num_rows() != a.num_cols() || b.size() != a.num_rows() ||
        x0.size() != a.num_cols()) {
        throw UsageError("solver: dimension mismatch");
    }
}

Vector residual(const CsrMatrix& a, std::span<const double> x, std::span<const double> b)
{
    Vector r = spmv(a, x);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = b[i] - r[i];
    }
    return r;
}

bool below(double relative, double tol) { return tol > 0.0 && relative < tol; }

// b == 0 has the unique solution x == 0.
SolveResult zero_rhs_result(std::size_t n)
{
    SolveResult out{Vector(n, 0.0), {}};
    out.report.stop_reason = StopReason::tolerance_met;
    return out;
}

}  // namespace

const char* to_string(InnerKind kind) noexcept
{
    switch (kind) {
    case InnerKind::jacobi: return "jacobi";
    case InnerKind::cg: return "cg";
    case InnerKind::gmres: return "gmres";
    case InnerKind::exact: return "exact";
    }
    return "?";
}

const char* to_string(StopReason reason) noexcept
{
    switch (reason) {
    case StopReason::tolerance_met: return "tolerance_met";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::breakdown: return "breakdown";
    }
    return "?";
}

std::optional<InnerKind> parse_inner_kind(std::string_view text) noexcept
{
    if (text == "jacobi") return InnerKind::jacobi;
    if (text == "cg") return InnerKind::cg;
    if (text == "gmres") return InnerKind::gmres;
    if (text == "exact") return InnerKind::exact;
    return std::nullopt;
}

void InnerSolverSpec::validate() const
{
    if (max_iterations < 1) {
        throw ConfigError("inner-its", "must be >= 1");
    }
    if (!(tolerance >= 0.0) || !std::isfinite(tolerance)) {
        throw ConfigError("inner-tol", "must be a finite value >= 0");
    }
    if (restart < 1) {
        throw ConfigError("restart", "must be >= 1");
    }
}

SolveResult jacobi_solve(const CsrMatrix& a, std::span<const double> b,
                         std::span<const double> x0, const InnerSolverSpec& spec,
                         const IterationMonitor& monitor)
{
    check_dims(a, b, x0);
    spec.validate();
    const std::size_t n = a.num_rows();
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        return zero_rhs_result(n);
    }
    const Vector diag = a.diagonal();
    for (std::size_t i = 0; i < n; ++i) {
        if (diag[i] == 0.0) {
            SolveResult out{Vector(x0.begin(), x0.end()), {}};
            out.report.stop_reason = StopReason::breakdown;
            out.report.detail = "zero diagonal at row " + std::to_string(i);
            out.report.final_relative_residual = norm2(residual(a, x0, b)) / bnorm;
            return out;
        }
    }

    Vector x(x0.begin(), x0.end());
    Vector next(n);
    SolveResult out;
    // Each pass yields the residual of the current iterate and the next one.
    for (std::size_t sweep = 0;; ++sweep) {
        double rr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto cols = a.row_cols(i);
            auto vals = a.row_values(i);
            double off = 0.0;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                if (cols[k] != i) {
                    off += vals[k] * x[cols[k]];
                }
            }
            const double ri = b[i] - off - diag[i] * x[i];
            rr += ri * ri;
            next[i] = (b[i] - off) / diag[i];
        }
        const double rel = std::sqrt(rr) / bnorm;
        if (sweep > 0 && monitor) {
            monitor(sweep, rel);
        }
        out.report.iterations_used = sweep;
        out.report.final_relative_residual = rel;
        if (below(rel, spec.tolerance)) {
            out.report.stop_reason = StopReason::tolerance_met;
            break;
        }
        if (sweep == spec.max_iterations) {
            out.report.stop_reason = StopReason::max_iterations;
            break;
        }
        x.swap(next);
    }
    out.x = std::move(x);
    return out;
}

SolveResult cg_solve(const CsrMatrix& a, std::span<const double> b,
                     std::span<const double> x0, const InnerSolverSpec& spec,
                     const IterationMonitor& monitor)
{
    check_dims(a, b, x0);
    spec.validate();
    const std::size_t n = a.num_rows();
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        return zero_rhs_result(n);
    }

    SolveResult out{Vector(x0.begin(), x0.end()), {}};
    Vector& x = out.x;
    Vector r = residual(a, x, b);
    Vector p = r;
    Vector ap(n);
    double rr = dot(r, r);
    std::size_t it = 0;
    out.report.final_relative_residual = std::sqrt(rr) / bnorm;
    if (rr == 0.0 || below(out.report.final_relative_residual, spec.tolerance)) {
        out.report.stop_reason = StopReason::tolerance_met;
        return out;
    }
    while (it < spec.max_iterations) {
        spmv(a, p, ap);
        const double curvature = dot(p, ap);
        if (!(curvature > 0.0)) {
            out.report.stop_reason = StopReason::breakdown;
            out.report.detail = "non-positive curvature p'Ap = " + std::to_string(curvature);
            return out;
        }
        const double alpha = rr / curvature;
        axpy(alpha, p, x);
        axpy(-alpha, ap, r);
        ++it;
        const double rr_next = dot(r, r);
        const double rel = std::sqrt(rr_next) / bnorm;
        if (monitor) {
            monitor(it, rel);
        }
        out.report.iterations_used = it;
        out.report.final_relative_residual = rel;
        if (rr_next == 0.0 || below(rel, spec.tolerance)) {
            // Confirm against the true residual; restart from it on drift.
            r = residual(a, x, b);
            const double true_rel = norm2(r) / bnorm;
            out.report.final_relative_residual = true_rel;
            if (true_rel == 0.0 || below(true_rel, spec.tolerance)) {
                out.report.stop_reason = StopReason::tolerance_met;
                return out;
            }
            p = r;
            rr = dot(r, r);
            continue;
        }
        const double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = r[i] + beta * p[i];
        }
    }
    out.report.stop_reason = StopReason::max_iterations;
    return out;
}

SolveResult gmres_solve(const CsrMatrix& a, std::span<const double> b,
                        std::span<const double> x0, const InnerSolverSpec& spec,
                        const IterationMonitor& monitor)
{
    check_dims(a, b, x0);
    spec.validate();
    const std::size_t n = a.num_rows();
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        return zero_rhs_result(n);
    }
    const std::size_t m = spec.restart;

    SolveResult out{Vector(x0.begin(), x0.end()), {}};
    Vector& x = out.x;
    std::vector<Vector> basis(m + 1, Vector(n));
    // Hessenberg columns, h[j] has j+2 entries.
    std::vector<Vector> h(m, Vector(m + 1, 0.0));
    Vector cs(m, 0.0);
    Vector sn(m, 0.0);
    Vector g(m + 1, 0.0);
    Vector w(n);

    std::size_t total = 0;
    Vector r = residual(a, x, b);
    double beta = norm2(r);
    out.report.final_relative_residual = beta / bnorm;
    if (beta == 0.0 || below(beta / bnorm, spec.tolerance)) {
        out.report.stop_reason = StopReason::tolerance_met;
        return out;
    }

    while (true) {
        for (std::size_t i = 0; i < n; ++i) {
            basis[0][i] = r[i] / beta;
        }
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        std::size_t steps = 0;
        bool happy = false;
        for (std::size_t j = 0; j < m && total < spec.max_iterations; ++j) {
            spmv(a, basis[j], w);
            const double wnorm = norm2(w);
            for (std::size_t i = 0; i <= j; ++i) {
                h[j][i] = dot(w, basis[i]);
                axpy(-h[j][i], basis[i], w);
            }
            h[j][j + 1] = norm2(w);
            for (std::size_t i = 0; i < j; ++i) {
                const double t = cs[i] * h[j][i] + sn[i] * h[j][i + 1];
                h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
                h[j][i] = t;
            }
            const double sub = h[j][j + 1];
            const double den = std::hypot(h[j][j], sub);
            cs[j] = h[j][j] / den;
            sn[j] = sub / den;
            h[j][j] = den;
            h[j][j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];

            ++steps;
            ++total;
            const double rel = std::abs(g[j + 1]) / bnorm;
            if (monitor) {
                monitor(total, rel);
            }
            if (sub <= std::numeric_limits<double>::epsilon() * wnorm) {
                happy = true;
                break;
            }
            if (below(rel, spec.tolerance)) {
                break;
            }
            for (std::size_t i = 0; i < n; ++i) {
                basis[j + 1][i] = w[i] / sub;
            }
        }

        // Back substitution for the cycle's correction.
        Vector y(steps, 0.0);
        for (std::size_t ii = steps; ii-- > 0;) {
            double sum = g[ii];
            for (std::size_t k = ii + 1; k < steps; ++k) {
                sum -= h[k][ii] * y[k];
            }
            y[ii] = sum / h[ii][ii];
        }
        for (std::size_t k = 0; k < steps; ++k) {
            axpy(y[k], basis[k], x);
        }

        r = residual(a, x, b);
        const double cycle_start = beta;
        beta = norm2(r);
        out.report.iterations_used = total;
        out.report.final_relative_residual = beta / bnorm;
        if (happy || beta == 0.0 || below(beta / bnorm, spec.tolerance)) {
            out.report.stop_reason = StopReason::tolerance_met;
            return out;
        }
        if (total >= spec.max_iterations) {
            out.report.stop_reason = StopReason::max_iterations;
            return out;
        }
        if ((cycle_start - beta) / cycle_start < kStagnation) {
            out.report.stop_reason = StopReason::breakdown;
            out.report.detail = "stagnation over a full restart cycle";
            return out;
        }
    }
}

InnerSolver::InnerSolver(const CsrMatrix& a, InnerSolverSpec spec)
    : a_(a), spec_(spec)
{
    spec_.validate();
    if (spec_.kind == InnerKind::exact) {
        lu_ = std::make_shared<LuFactorization>(DenseMatrix::from_csr(a));
    }
}

SolveResult InnerSolver::solve(std::span<const double> b, std::span<const double> x0,
                               const IterationMonitor& monitor) const
{
    switch (spec_.kind) {
    case InnerKind::jacobi: return jacobi_solve(a_, b, x0, spec_, monitor);
    case InnerKind::cg: return cg_solve(a_, b, x0, spec_, monitor);
    case InnerKind::gmres: return gmres_solve(a_, b, x0, spec_, monitor);
    case InnerKind::exact: {
        check_dims(a_, b, x0);
        SolveResult out{lu_->solve(b), {}};
        out.report.iterations_used = 1;
        out.report.stop_reason = StopReason::tolerance_met;
        const double bnorm = norm2(b);
        out.report.final_relative_residual =
            bnorm > 0.0 ? norm2(residual(a_, out.x, b)) / bnorm : 0.0;
        if (monitor) {
            monitor(1, out.report.final_relative_residual);
        }
        return out;
    }
    }
    throw UsageError("unknown inner solver kind");
}

}  // namespace msplit
