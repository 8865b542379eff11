#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "errors.hpp"

namespace msplit {

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw UsageError("dot: length mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double norm_inf(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    if (x.size() != y.size()) {
        throw UsageError("axpy: length mismatch");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

CsrMatrix::CsrMatrix(std::size_t num_rows, std::size_t num_cols,
                     std::vector<std::size_t> row_offsets,
                     std::vector<std::size_t> col_indices, std::vector<double> values)
    : num_rows_(num_rows),
      num_cols_(num_cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values))
{
    if (row_offsets_.size() != num_rows_ + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != col_indices_.size() ||
        col_indices_.size() != values_.size()) {
        throw UsageError("csr: inconsistent array sizes");
    }
    for (std::size_t r = 0; r < num_rows_; ++r) {
        if (row_offsets_[r] > row_offsets_[r + 1]) {
            throw UsageError("csr: row offsets decrease at row " + std::to_string(r));
        }
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            if (col_indices_[k] >= num_cols_) {
                throw UsageError("csr: column index out of range in row " +
                                 std::to_string(r));
            }
            if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
                throw UsageError("csr: columns not strictly increasing in row " +
                                 std::to_string(r));
            }
        }
    }
}

CsrMatrix CsrMatrix::from_triplets(std::size_t num_rows, std::size_t num_cols,
                                   std::vector<Triplet> entries)
{
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> offsets(num_rows + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(entries.size());
    vals.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& e = entries[k];
        if (e.row >= num_rows || e.col >= num_cols) {
            throw UsageError("csr: triplet out of range");
        }
        if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
            vals.back() += e.value;
            continue;
        }
        cols.push_back(e.col);
        vals.push_back(e.value);
        ++offsets[e.row + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return CsrMatrix(num_rows, num_cols, std::move(offsets), std::move(cols),
                     std::move(vals));
}

CsrMatrix CsrMatrix::identity(std::size_t n)
{
    std::vector<std::size_t> offsets(n + 1);
    std::iota(offsets.begin(), offsets.end(), std::size_t{0});
    std::vector<std::size_t> cols(n);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return CsrMatrix(n, n, std::move(offsets), std::move(cols), Vector(n, 1.0));
}

std::span<const std::size_t> CsrMatrix::row_cols(std::size_t row) const
{
    return std::span<const std::size_t>(col_indices_)
        .subspan(row_offsets_[row], row_offsets_[row + 1] - row_offsets_[row]);
}

std::span<const double> CsrMatrix::row_values(std::size_t row) const
{
    return std::span<const double>(values_).subspan(
        row_offsets_[row], row_offsets_[row + 1] - row_offsets_[row]);
}

double CsrMatrix::at(std::size_t row, std::size_t col) const
{
    auto cols = row_cols(row);
    auto it = std::lower_bound(cols.begin(), cols.end(), col);
    if (it == cols.end() || *it != col) {
        return 0.0;
    }
    return row_values(row)[static_cast<std::size_t>(it - cols.begin())];
}

Vector CsrMatrix::diagonal() const
{
    Vector d(std::min(num_rows_, num_cols_), 0.0);
    for (std::size_t r = 0; r < d.size(); ++r) {
        d[r] = at(r, r);
    }
    return d;
}

CsrMatrix CsrMatrix::principal_submatrix(std::span<const std::size_t> indices) const
{
    // global -> local lookup; indices are sorted so binary search suffices
    if (!std::is_sorted(indices.begin(), indices.end())) {
        throw UsageError("principal_submatrix: indices must be sorted");
    }
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    for (std::size_t g : indices) {
        if (g >= num_rows_ || g >= num_cols_) {
            throw UsageError("principal_submatrix: index out of range");
        }
        auto rc = row_cols(g);
        auto rv = row_values(g);
        for (std::size_t k = 0; k < rc.size(); ++k) {
            auto it = std::lower_bound(indices.begin(), indices.end(), rc[k]);
            if (it != indices.end() && *it == rc[k]) {
                cols.push_back(static_cast<std::size_t>(it - indices.begin()));
                vals.push_back(rv[k]);
            }
        }
        offsets.push_back(cols.size());
    }
    return CsrMatrix(indices.size(), indices.size(), std::move(offsets), std::move(cols),
                     std::move(vals));
}

bool CsrMatrix::is_symmetric(double tol) const
{
    if (num_rows_ != num_cols_) {
        return false;
    }
    for (std::size_t r = 0; r < num_rows_; ++r) {
        auto rc = row_cols(r);
        auto rv = row_values(r);
        for (std::size_t k = 0; k < rc.size(); ++k) {
            if (std::abs(at(rc[k], r) - rv[k]) > tol) {
                return false;
            }
        }
    }
    return true;
}

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y)
{
    if (a.num_cols() != x.size() || a.num_rows() != y.size()) {
        throw UsageError("spmv: dimension mismatch (matrix " +
                         std::to_string(a.num_rows()) + "x" +
                         std::to_string(a.num_cols()) + ", x " +
                         std::to_string(x.size()) + ")");
    }
    const auto offsets = a.row_offsets();
    const auto cols = a.col_indices();
    const auto vals = a.values();
    for (std::size_t r = 0; r < a.num_rows(); ++r) {
        double sum = 0.0;
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            sum += vals[k] * x[cols[k]];
        }
        y[r] = sum;
    }
}

Vector spmv(const CsrMatrix& a, std::span<const double> x)
{
    Vector y(a.num_rows());
    spmv(a, x, y);
    return y;
}

double ResidualNorms::relative_or_throw() const
{
    if (!relative) {
        throw ZeroRhsError();
    }
    return *relative;
}

ResidualNorms residual_norms(const CsrMatrix& a, std::span<const double> x,
                             std::span<const double> b)
{
    if (b.size() != a.num_rows()) {
        throw UsageError("residual_norms: rhs length mismatch");
    }
    Vector r = spmv(a, x);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = b[i] - r[i];
    }
    ResidualNorms out;
    out.absolute = norm2(r);
    const double bnorm = norm2(b);
    if (bnorm > 0.0) {
        out.relative = out.absolute / bnorm;
    }
    return out;
}

DenseMatrix DenseMatrix::from_csr(const CsrMatrix& a)
{
    DenseMatrix d(a.num_rows(), a.num_cols());
    for (std::size_t r = 0; r < a.num_rows(); ++r) {
        auto rc = a.row_cols(r);
        auto rv = a.row_values(r);
        for (std::size_t k = 0; k < rc.size(); ++k) {
            d(r, rc[k]) = rv[k];
        }
    }
    return d;
}

DenseMatrix DenseMatrix::identity(std::size_t n)
{
    DenseMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        d(i, i) = 1.0;
    }
    return d;
}

Vector DenseMatrix::multiply(std::span<const double> x) const
{
    if (x.size() != cols_) {
        throw UsageError("dense multiply: dimension mismatch");
    }
    Vector y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            sum += data_[i * cols_ + j] * x[j];
        }
        y[i] = sum;
    }
    return y;
}

LuFactorization::LuFactorization(DenseMatrix a, std::size_t cap) : lu_(std::move(a))
{
    const std::size_t n = lu_.rows();
    if (lu_.cols() != n) {
        throw UsageError("dense_solve: matrix is not square");
    }
    if (n > cap) {
        throw UsageError("dense_solve: dimension " + std::to_string(n) +
                         " exceeds oracle cap " + std::to_string(cap));
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            scale = std::max(scale, std::abs(lu_(i, j)));
        }
    }
    const double threshold =
        static_cast<double>(std::max<std::size_t>(n, 1)) *
        std::numeric_limits<double>::epsilon() * scale;

    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) {
                p = i;
            }
        }
        if (std::abs(lu_(p, k)) <= threshold || lu_(p, k) == 0.0) {
            throw SingularMatrixError(k);
        }
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(lu_(k, j), lu_(p, j));
            }
            std::swap(perm_[k], perm_[p]);
        }
        const double pivot = lu_(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double factor = lu_(i, k) / pivot;
            lu_(i, k) = factor;
            if (factor == 0.0) {
                continue;
            }
            for (std::size_t j = k + 1; j < n; ++j) {
                lu_(i, j) -= factor * lu_(k, j);
            }
        }
    }
}

Vector LuFactorization::solve(std::span<const double> b) const
{
    const std::size_t n = lu_.rows();
    if (b.size() != n) {
        throw UsageError("dense_solve: rhs length mismatch");
    }
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = b[perm_[i]];
        for (std::size_t j = 0; j < i; ++j) {
            sum -= lu_(i, j) * x[j];
        }
        x[i] = sum;
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double sum = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) {
            sum -= lu_(ii, j) * x[j];
        }
        x[ii] = sum / lu_(ii, ii);
    }
    return x;
}

Vector dense_solve(const DenseMatrix& a, std::span<const double> b, std::size_t cap)
{
    return LuFactorization(a, cap).solve(b);
}

SpectralEstimate power_iteration(const LinearMap& apply, std::size_t dim, double tol,
                                 std::size_t max_it, std::uint64_t seed)
{
    if (dim == 0) {
        throw UsageError("power_iteration: dim must be >= 1");
    }
    if (!(tol > 0.0)) {
        throw UsageError("power_iteration: tol must be > 0");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector v(dim);
    for (auto& x : v) {
        x = 1.0 + unit(rng);
    }
    double n = norm2(v);
    for (auto& x : v) {
        x /= n;
    }

    Vector w(dim);
    Vector u(dim);
    SpectralEstimate est;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_it; ++it) {
        apply(v, w);
        apply(w, u);
        const double grow = norm2(u);
        est.iterations_used = it;
        if (grow == 0.0) {
            est.radius = 0.0;
            est.converged = true;
            return est;
        }
        est.radius = std::sqrt(grow);
        if (std::abs(est.radius - previous) < tol) {
            est.converged = true;
            return est;
        }
        previous = est.radius;
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = u[i] / grow;
        }
    }
    return est;
}

}  // namespace msplit
