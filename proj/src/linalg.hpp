#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace msplit {

using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);

/// y <- y + alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row; every instance is validated on construction.
class CsrMatrix {
public:
    CsrMatrix() = default;
    CsrMatrix(std::size_t num_rows, std::size_t num_cols,
              std::vector<std::size_t> row_offsets,
              std::vector<std::size_t> col_indices, std::vector<double> values);

    /// Builds from unordered triplets; duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(std::size_t num_rows, std::size_t num_cols,
                                   std::vector<Triplet> entries);
    static CsrMatrix identity(std::size_t n);

    std::size_t num_rows() const noexcept { return num_rows_; }
    std::size_t num_cols() const noexcept { return num_cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
    std::span<const double> values() const noexcept { return values_; }

    std::span<const std::size_t> row_cols(std::size_t row) const;
    std::span<const double> row_values(std::size_t row) const;

    /// Entry (row, col), 0 when not stored.
    double at(std::size_t row, std::size_t col) const;

    /// Diagonal entries (0 where absent).
    Vector diagonal() const;

    /// Principal submatrix on the given (sorted, unique) global indices.
    CsrMatrix principal_submatrix(std::span<const std::size_t> indices) const;

    bool is_symmetric(double tol = 0.0) const;

private:
    std::size_t num_rows_ = 0;
    std::size_t num_cols_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<std::size_t> col_indices_;
    std::vector<double> values_;
};

/// y = A x. Throws UsageError on dimension mismatch.
Vector spmv(const CsrMatrix& a, std::span<const double> x);
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);

struct ResidualNorms {
    double absolute = 0.0;
    /// Empty when ||b|| == 0.
    std::optional<double> relative;

    /// Throws ZeroRhsError when the relative value is undefined.
    double relative_or_throw() const;
};

ResidualNorms residual_norms(const CsrMatrix& a, std::span<const double> x,
                             std::span<const double> b);

/// Row-major dense matrix, used by the direct-solve and eigenvalue oracles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0)
    {}

    static DenseMatrix from_csr(const CsrMatrix& a);
    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    Vector multiply(std::span<const double> x) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr std::size_t kDenseOracleCap = 8192;

/// LU factorization with partial pivoting. Factor once, solve many times.
class LuFactorization {
public:
    explicit LuFactorization(DenseMatrix a, std::size_t cap = kDenseOracleCap);

    std::size_t size() const noexcept { return lu_.rows(); }
    Vector solve(std::span<const double> b) const;

private:
    DenseMatrix lu_;
    std::vector<std::size_t> perm_;
};

/// Gaussian elimination with partial pivoting.
Vector dense_solve(const DenseMatrix& a, std::span<const double> b,
                   std::size_t cap = kDenseOracleCap);

struct SpectralEstimate {
    double radius = 0.0;
    std::size_t iterations_used = 0;
    bool converged = false;
};

/// out = M in; `in` and `out` never alias.
using LinearMap = std::function<void(std::span<const double> in, std::span<double> out)>;

/// Dominant |eigenvalue| of a linear map by power iteration. Works on the
/// squared map so that +rho/-rho pairs (common for Jacobi-type iteration
/// matrices) still converge; the estimate is sqrt(||M^2 v|| / ||v||).
SpectralEstimate power_iteration(const LinearMap& apply, std::size_t dim, double tol,
                                 std::size_t max_it, std::uint64_t seed);

}  // namespace msplit
