#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "linalg.hpp"

namespace msplit {

enum class Face : std::size_t { x_minus, x_plus, y_minus, y_plus, z_minus, z_plus };

inline constexpr std::size_t kNumFaces = 6;

/// Dirichlet data on the six faces of the unit cube. A per-point function,
/// when set, takes precedence over the per-face constants. It receives the
/// boundary node's grid coordinates, where -1 and n denote the two
/// boundary planes of a dimension with n interior unknowns.
struct BoundaryCondition {
    std::array<double, kNumFaces> face_values{};
    std::function<double(Face, long, long, long)> point_value;

    double value(Face face, long i, long j, long k) const
    {
        if (point_value) {
            return point_value(face, i, j, k);
        }
        return face_values[static_cast<std::size_t>(face)];
    }

    static BoundaryCondition constant(double v)
    {
        BoundaryCondition bc;
        bc.face_values.fill(v);
        return bc;
    }
};

/// Interior unknowns of a structured 3D grid, x-fastest lexicographic order.
struct Grid3D {
    std::size_t nx = 1;
    std::size_t ny = 1;
    std::size_t nz = 1;
    BoundaryCondition boundary;

    std::size_t size() const noexcept { return nx * ny * nz; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return i + nx * (j + ny * k);
    }
    std::array<std::size_t, 3> coords(std::size_t index) const noexcept
    {
        return {index % nx, (index / nx) % ny, index / (nx * ny)};
    }
    std::size_t extent(std::size_t dim) const noexcept
    {
        return dim == 0 ? nx : (dim == 1 ? ny : nz);
    }
};

struct LinearProblem {
    CsrMatrix matrix;
    Vector rhs;
    Grid3D grid;
};

/// Seven-point Laplacian scaled so the diagonal is 6; Dirichlet neighbors
/// move to the right-hand side.
LinearProblem build_laplace_3d(const Grid3D& grid);

/// Half-open index box [lo, hi) in grid coordinates.
struct Box {
    std::array<std::size_t, 3> lo{};
    std::array<std::size_t, 3> hi{};

    std::size_t extent(std::size_t dim) const noexcept { return hi[dim] - lo[dim]; }
    std::size_t volume() const noexcept { return extent(0) * extent(1) * extent(2); }
    bool contains(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1] && k >= lo[2] &&
               k < hi[2];
    }
};

struct BlockGrid {
    std::size_t gx = 1;
    std::size_t gy = 1;
    std::size_t gz = 1;

    std::size_t count() const noexcept { return gx * gy * gz; }
    std::size_t extent(std::size_t dim) const noexcept
    {
        return dim == 0 ? gx : (dim == 1 ? gy : gz);
    }
};

/// One block of the decomposition. The extended region is the owned box
/// plus, on every face that has a neighboring block, a slab `slab_depth`
/// layers deep spanning the owned box's cross-section.
struct Block {
    std::size_t id = 0;
    std::array<std::size_t, 3> position{};
    Box owned;
    std::array<std::size_t, kNumFaces> slab_depth{};
    /// Sorted global indices of owned box plus slabs.
    std::vector<std::size_t> extended;
    /// Blocks sharing a face with this one.
    std::vector<std::size_t> face_neighbors;
    /// Face neighbors plus any block whose data this block reads or whose
    /// extended region overlaps what this block reads (symmetric relation).
    std::vector<std::size_t> neighbors;

    bool covers(std::size_t i, std::size_t j, std::size_t k) const noexcept;
    std::size_t additional_unknowns() const noexcept
    {
        return extended.size() - owned.volume();
    }
};

class BlockDecomposition {
public:
    BlockDecomposition(Grid3D grid, BlockGrid block_grid, std::size_t overlap,
                       std::vector<Block> blocks, std::vector<unsigned> cover_count);

    const Grid3D& grid() const noexcept { return grid_; }
    const BlockGrid& block_grid() const noexcept { return block_grid_; }
    std::size_t overlap() const noexcept { return overlap_; }
    std::size_t num_blocks() const noexcept { return blocks_.size(); }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Block& block(std::size_t id) const { return blocks_.at(id); }

    /// Block whose owned box contains the grid point.
    std::size_t owner(std::size_t point) const;
    /// Number of blocks whose extended region contains the point.
    unsigned cover_count(std::size_t point) const { return cover_count_.at(point); }
    /// Overlap weight of each covering block at the point (equal weights).
    double weight(std::size_t point) const { return 1.0 / cover_count(point); }
    std::vector<std::size_t> covering_blocks(std::size_t point) const;

private:
    Grid3D grid_;
    BlockGrid block_grid_;
    std::size_t overlap_;
    std::vector<Block> blocks_;
    std::vector<unsigned> cover_count_;
    std::array<std::vector<std::size_t>, 3> splits_;  // per-dimension range starts
};

/// Splits `n` into `parts` contiguous ranges; the first n % parts ranges
/// get one extra element. Returns the parts+1 boundaries.
std::vector<std::size_t> split_range(std::size_t n, std::size_t parts);

BlockDecomposition decompose(const Grid3D& grid, BlockGrid block_grid, std::size_t overlap);

struct Coupling {
    std::size_t local_row;
    std::size_t global_col;
    double coefficient;
};

struct BlockSystem {
    CsrMatrix a_ii;
    /// Entries connecting an extended-region row to a column outside it.
    std::vector<Coupling> coupling;
};

BlockSystem block_system(const LinearProblem& problem, const BlockDecomposition& decomp,
                         std::size_t block_id);

}  // namespace msplit
