#include "problems.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "errors.hpp"

namespace msplit {

namespace {

constexpr const char* kBlockFieldNames[3] = {"gx", "gy", "gz"};
constexpr const char* kGridFieldNames[3] = {"nx", "ny", "nz"};
constexpr const char* kDimNames[3] = {"x", "y", "z"};

}  // namespace

LinearProblem build_laplace_3d(const Grid3D& grid)
{
    for (std::size_t d = 0; d < 3; ++d) {
        if (grid.extent(d) == 0) {
            throw ConfigError(kGridFieldNames[d], "grid dimension must be >= 1");
        }
    }
    const std::size_t n = grid.size();
    std::vector<Triplet> entries;
    entries.reserve(7 * n);
    Vector rhs(n, 0.0);

    const long nx = static_cast<long>(grid.nx);
    const long ny = static_cast<long>(grid.ny);
    const long nz = static_cast<long>(grid.nz);
    for (long k = 0; k < nz; ++k) {
        for (long j = 0; j < ny; ++j) {
            for (long i = 0; i < nx; ++i) {
                const std::size_t row = grid.index(i, j, k);
                entries.push_back({row, row, 6.0});
                auto visit = [&](long a, long b, long c, Face face) {
                    const bool inside =
                        a >= 0 && a < nx && b >= 0 && b < ny && c >= 0 && c < nz;
                    if (inside) {
                        entries.push_back({row, grid.index(a, b, c), -1.0});
                    } else {
                        rhs[row] += grid.boundary.value(face, a, b, c);
                    }
                };
                visit(i - 1, j, k, Face::x_minus);
                visit(i + 1, j, k, Face::x_plus);
                visit(i, j - 1, k, Face::y_minus);
                visit(i, j + 1, k, Face::y_plus);
                visit(i, j, k - 1, Face::z_minus);
                visit(i, j, k + 1, Face::z_plus);
            }
        }
    }
    return {CsrMatrix::from_triplets(n, n, std::move(entries)), std::move(rhs), grid};
}

bool Block::covers(std::size_t i, std::size_t j, std::size_t k) const noexcept
{
    if (owned.contains(i, j, k)) {
        return true;
    }
    const std::array<std::size_t, 3> c{i, j, k};
    // A slab point lies outside the owned box in exactly one dimension.
    int outside_dim = -1;
    for (std::size_t d = 0; d < 3; ++d) {
        if (c[d] < owned.lo[d] || c[d] >= owned.hi[d]) {
            if (outside_dim >= 0) {
                return false;
            }
            outside_dim = static_cast<int>(d);
        }
    }
    const auto d = static_cast<std::size_t>(outside_dim);
    if (c[d] < owned.lo[d]) {
        return owned.lo[d] - c[d] <= slab_depth[2 * d];
    }
    return c[d] - owned.hi[d] < slab_depth[2 * d + 1];
}

std::vector<std::size_t> split_range(std::size_t n, std::size_t parts)
{
    std::vector<std::size_t> bounds{0};
    const std::size_t base = n / parts;
    const std::size_t rem = n % parts;
    for (std::size_t p = 0; p < parts; ++p) {
        bounds.push_back(bounds.back() + base + (p < rem ? 1 : 0));
    }
    return bounds;
}

BlockDecomposition::BlockDecomposition(Grid3D grid, BlockGrid block_grid,
                                       std::size_t overlap, std::vector<Block> blocks,
                                       std::vector<unsigned> cover_count)
    : grid_(std::move(grid)),
      block_grid_(block_grid),
      overlap_(overlap),
      blocks_(std::move(blocks)),
      cover_count_(std::move(cover_count))
{
    for (std::size_t d = 0; d < 3; ++d) {
        splits_[d] = split_range(grid_.extent(d), block_grid_.extent(d));
    }
}

std::size_t BlockDecomposition::owner(std::size_t point) const
{
    const auto c = grid_.coords(point);
    std::array<std::size_t, 3> pos{};
    for (std::size_t d = 0; d < 3; ++d) {
        const auto& s = splits_[d];
        pos[d] = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), c[d]) -
                                          s.begin()) -
                 1;
    }
    return pos[0] + block_grid_.gx * (pos[1] + block_grid_.gy * pos[2]);
}

std::vector<std::size_t> BlockDecomposition::covering_blocks(std::size_t point) const
{
    // o < smallest owned width, so only the owner and its 26 surrounding
    // blocks can reach the point.
    const auto c = grid_.coords(point);
    const auto& home = blocks_[owner(point)].position;
    std::vector<std::size_t> out;
    for (long dz = -1; dz <= 1; ++dz) {
        for (long dy = -1; dy <= 1; ++dy) {
            for (long dx = -1; dx <= 1; ++dx) {
                const long bx = static_cast<long>(home[0]) + dx;
                const long by = static_cast<long>(home[1]) + dy;
                const long bz = static_cast<long>(home[2]) + dz;
                if (bx < 0 || by < 0 || bz < 0 ||
                    bx >= static_cast<long>(block_grid_.gx) ||
                    by >= static_cast<long>(block_grid_.gy) ||
                    bz >= static_cast<long>(block_grid_.gz)) {
                    continue;
                }
                const std::size_t id =
                    static_cast<std::size_t>(bx) +
                    block_grid_.gx * (static_cast<std::size_t>(by) +
                                      block_grid_.gy * static_cast<std::size_t>(bz));
                if (blocks_[id].covers(c[0], c[1], c[2])) {
                    out.push_back(id);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

BlockDecomposition decompose(const Grid3D& grid, BlockGrid block_grid, std::size_t overlap)
{
    std::array<std::vector<std::size_t>, 3> splits;
    std::size_t min_width = grid.size();
    for (std::size_t d = 0; d < 3; ++d) {
        const std::size_t n = grid.extent(d);
        const std::size_t g = block_grid.extent(d);
        if (n == 0) {
            throw ConfigError(kGridFieldNames[d], "grid dimension must be >= 1");
        }
        if (g == 0 || g > n) {
            throw ConfigError(kBlockFieldNames[d],
                              "block count " + std::to_string(g) + " must be in [1, " +
                                  std::to_string(n) + "] (grid size in " + kDimNames[d] +
                                  ")");
        }
        splits[d] = split_range(n, g);
        if (g > 1) {
            min_width = std::min(min_width, n / g);
        }
    }
    if (overlap >= min_width) {
        throw ConfigError("overlap", "overlap " + std::to_string(overlap) +
                                         " must be smaller than the smallest owned "
                                         "block width along a split dimension, " +
                                         std::to_string(min_width));
    }

    const std::size_t count = block_grid.count();
    std::vector<Block> blocks(count);
    for (std::size_t bz = 0; bz < block_grid.gz; ++bz) {
        for (std::size_t by = 0; by < block_grid.gy; ++by) {
            for (std::size_t bx = 0; bx < block_grid.gx; ++bx) {
                const std::size_t id = bx + block_grid.gx * (by + block_grid.gy * bz);
                Block& b = blocks[id];
                b.id = id;
                b.position = {bx, by, bz};
                for (std::size_t d = 0; d < 3; ++d) {
                    b.owned.lo[d] = splits[d][b.position[d]];
                    b.owned.hi[d] = splits[d][b.position[d] + 1];
                    const bool has_lower = b.position[d] > 0;
                    const bool has_upper = b.position[d] + 1 < block_grid.extent(d);
                    b.slab_depth[2 * d] = has_lower ? overlap : 0;
                    b.slab_depth[2 * d + 1] = has_upper ? overlap : 0;
                    auto neighbor_id = [&](bool upper) {
                        auto p = b.position;
                        p[d] = upper ? p[d] + 1 : p[d] - 1;
                        return p[0] + block_grid.gx * (p[1] + block_grid.gy * p[2]);
                    };
                    if (has_lower) {
                        b.face_neighbors.push_back(neighbor_id(false));
                    }
                    if (has_upper) {
                        b.face_neighbors.push_back(neighbor_id(true));
                    }
                }
                std::sort(b.face_neighbors.begin(), b.face_neighbors.end());

                // Bounding box of owned + slabs, walked in global index order.
                std::array<std::size_t, 3> lo{};
                std::array<std::size_t, 3> hi{};
                for (std::size_t d = 0; d < 3; ++d) {
                    lo[d] = b.owned.lo[d] - b.slab_depth[2 * d];
                    hi[d] = b.owned.hi[d] + b.slab_depth[2 * d + 1];
                }
                for (std::size_t k = lo[2]; k < hi[2]; ++k) {
                    for (std::size_t j = lo[1]; j < hi[1]; ++j) {
                        for (std::size_t i = lo[0]; i < hi[0]; ++i) {
                            if (b.covers(i, j, k)) {
                                b.extended.push_back(grid.index(i, j, k));
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<unsigned> cover(grid.size(), 0);
    for (const auto& b : blocks) {
        for (std::size_t p : b.extended) {
            ++cover[p];
        }
    }

    const BlockDecomposition decomp(grid, block_grid, overlap, blocks, cover);

    // Communication neighbors: owners/coverers of every point a block reads
    // (its extended region plus the seven-point halo around it).
    std::vector<std::set<std::size_t>> reads(count);
    const long nx = static_cast<long>(grid.nx);
    const long ny = static_cast<long>(grid.ny);
    const long nz = static_cast<long>(grid.nz);
    for (std::size_t id = 0; id < count; ++id) {
        const Block& b = decomp.block(id);
        std::set<std::size_t> halo;
        for (std::size_t p : b.extended) {
            const auto c = grid.coords(p);
            const long ci = static_cast<long>(c[0]);
            const long cj = static_cast<long>(c[1]);
            const long ck = static_cast<long>(c[2]);
            const long nb[6][3] = {{ci - 1, cj, ck}, {ci + 1, cj, ck}, {ci, cj - 1, ck},
                                   {ci, cj + 1, ck}, {ci, cj, ck - 1}, {ci, cj, ck + 1}};
            bool on_surface = false;
            for (const auto& q : nb) {
                if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= nx || q[1] >= ny ||
                    q[2] >= nz) {
                    continue;
                }
                const auto qi = static_cast<std::size_t>(q[0]);
                const auto qj = static_cast<std::size_t>(q[1]);
                const auto qk = static_cast<std::size_t>(q[2]);
                if (!b.covers(qi, qj, qk)) {
                    halo.insert(grid.index(qi, qj, qk));
                    on_surface = true;
                }
            }
            if (on_surface || decomp.cover_count(p) > 1) {
                for (std::size_t j : decomp.covering_blocks(p)) {
                    if (j != id) {
                        reads[id].insert(j);
                    }
                }
            }
        }
        for (std::size_t q : halo) {
            for (std::size_t j : decomp.covering_blocks(q)) {
                if (j != id) {
                    reads[id].insert(j);
                }
            }
        }
    }
    std::vector<std::set<std::size_t>> symmetric(count);
    for (std::size_t id = 0; id < count; ++id) {
        for (std::size_t j : reads[id]) {
            symmetric[id].insert(j);
            symmetric[j].insert(id);
        }
    }
    for (std::size_t id = 0; id < count; ++id) {
        blocks[id].neighbors.assign(symmetric[id].begin(), symmetric[id].end());
    }
    return BlockDecomposition(grid, block_grid, overlap, std::move(blocks),
                              std::move(cover));
}

BlockSystem block_system(const LinearProblem& problem, const BlockDecomposition& decomp,
                         std::size_t block_id)
{
    if (block_id >= decomp.num_blocks()) {
        throw UsageError("block_system: block id " + std::to_string(block_id) +
                         " out of range");
    }
    const auto& ext = decomp.block(block_id).extended;
    BlockSystem sys;
    sys.a_ii = problem.matrix.principal_submatrix(ext);
    for (std::size_t r = 0; r < ext.size(); ++r) {
        auto cols = problem.matrix.row_cols(ext[r]);
        auto vals = problem.matrix.row_values(ext[r]);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (!std::binary_search(ext.begin(), ext.end(), cols[k])) {
                sys.coupling.push_back({r, cols[k], vals[k]});
            }
        }
    }
    return sys;
}

}  // namespace msplit
