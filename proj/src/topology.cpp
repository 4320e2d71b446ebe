// Digital topology for the (6,26) connectivity pair: simple-point tests via
// the Bertrand-Malandain topological numbers, Euler characteristic of the
// cubical complex, and the greedy genus-zero field correction.
#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>
#include <vector>

#include "cortifield/errors.hpp"
#include "cortifield/reconstruct.hpp"

namespace cf {

namespace {

inline int nb_index(int dx, int dy, int dz) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }

} // namespace

namespace {

// Exact local topology triple of a 3x3x3 configuration embedded with a
// one-voxel background shell: 6-components, 26-cavities, and the Euler
// characteristic of the cubical complex. All arrays are stack-local and
// fixed-size; this runs millions of times during region growth.
struct LocalTriple {
    int comp;
    int cav;
    int euler;
    bool operator==(const LocalTriple& o) const {
        return comp == o.comp && cav == o.cav && euler == o.euler;
    }
};

LocalTriple local_triple(const bool fg[27]) {
    LocalTriple out{0, 0, 0};
    auto at = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x > 2 || y > 2 || z > 2) return false;
        return fg[z * 9 + y * 3 + x];
    };

    // Foreground 6-components over the 27 cells.
    {
        int8_t seen[27] = {};
        int8_t stack[27];
        for (int s = 0; s < 27; ++s) {
            if (!fg[s] || seen[s]) continue;
            ++out.comp;
            int top = 0;
            stack[top++] = static_cast<int8_t>(s);
            seen[s] = 1;
            while (top > 0) {
                const int cur = stack[--top];
                const int x = cur % 3, y = (cur / 3) % 3, z = cur / 9;
                const int dx[6] = {1, -1, 0, 0, 0, 0};
                const int dy[6] = {0, 0, 1, -1, 0, 0};
                const int dz[6] = {0, 0, 0, 0, 1, -1};
                for (int d = 0; d < 6; ++d) {
                    const int nx = x + dx[d], ny = y + dy[d], nz = z + dz[d];
                    if (!at(nx, ny, nz)) continue;
                    const int ni = nz * 9 + ny * 3 + nx;
                    if (!seen[ni]) {
                        seen[ni] = 1;
                        stack[top++] = static_cast<int8_t>(ni);
                    }
                }
            }
        }
    }

    // Background 26-components on the padded 5^3 grid; those not reaching the
    // shell are cavities. The shell is connected, so a single fill from one
    // shell corner marks everything escapable.
    {
        bool bg_seen[125] = {};
        auto bidx = [](int x, int y, int z) { return (z * 5 + y) * 5 + x; };
        auto bg_at = [&](int x, int y, int z) {
            if (x < 0 || y < 0 || z < 0 || x > 4 || y > 4 || z > 4) return false;
            const bool inside_block = x >= 1 && x <= 3 && y >= 1 && y <= 3 && z >= 1 && z <= 3;
            return !(inside_block && fg[(z - 1) * 9 + (y - 1) * 3 + (x - 1)]);
        };
        int stack[125];
        int top = 0;
        stack[top++] = bidx(0, 0, 0);
        bg_seen[bidx(0, 0, 0)] = true;
        while (top > 0) {
            const int cur = stack[--top];
            const int x = cur % 5, y = (cur / 5) % 5, z = cur / 25;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy, nz = z + dz;
                        if (nx < 0 || ny < 0 || nz < 0 || nx > 4 || ny > 4 || nz > 4) continue;
                        if (!bg_at(nx, ny, nz)) continue;
                        const int ni = bidx(nx, ny, nz);
                        if (!bg_seen[ni]) {
                            bg_seen[ni] = true;
                            stack[top++] = ni;
                        }
                    }
        }
        for (int z = 1; z <= 3; ++z)
            for (int y = 1; y <= 3; ++y)
                for (int x = 1; x <= 3; ++x)
                    if (bg_at(x, y, z) && !bg_seen[bidx(x, y, z)]) {
                        // Unreached background pocket: flood it as one cavity.
                        ++out.cav;
                        int top2 = 0;
                        stack[top2++] = bidx(x, y, z);
                        bg_seen[bidx(x, y, z)] = true;
                        while (top2 > 0) {
                            const int cur = stack[--top2];
                            const int cx = cur % 5, cy = (cur / 5) % 5, cz = cur / 25;
                            for (int dz = -1; dz <= 1; ++dz)
                                for (int dy = -1; dy <= 1; ++dy)
                                    for (int dx = -1; dx <= 1; ++dx) {
                                        const int nx = cx + dx, ny = cy + dy, nz = cz + dz;
                                        if (nx < 0 || ny < 0 || nz < 0 || nx > 4 || ny > 4 || nz > 4)
                                            continue;
                                        if (!bg_at(nx, ny, nz)) continue;
                                        const int ni = bidx(nx, ny, nz);
                                        if (!bg_seen[ni]) {
                                            bg_seen[ni] = true;
                                            stack[top2++] = ni;
                                        }
                                    }
                        }
                    }
    }

    // Euler characteristic: count distinct cells of the doubled grid [0, 6]^3.
    {
        bool cell[343] = {};
        int counts[4] = {0, 0, 0, 0};
        for (int z = 0; z < 3; ++z)
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x) {
                    if (!fg[z * 9 + y * 3 + x]) continue;
                    for (int dz = 0; dz <= 2; ++dz)
                        for (int dy = 0; dy <= 2; ++dy)
                            for (int dx = 0; dx <= 2; ++dx) {
                                const int key = ((2 * z + dz) * 7 + (2 * y + dy)) * 7 + (2 * x + dx);
                                if (!cell[key]) {
                                    cell[key] = true;
                                    ++counts[(dx == 1) + (dy == 1) + (dz == 1)];
                                }
                            }
                }
        out.euler = counts[0] - counts[1] + counts[2] - counts[3];
    }
    return out;
}

} // namespace

bool simple_point_6_26(const uint8_t nb[27]) {
    // Cheap necessary screen: the center must have at least one 6-adjacent
    // region voxel, else the addition creates a new component.
    const bool any_face = nb[nb_index(1, 0, 0)] || nb[nb_index(-1, 0, 0)] || nb[nb_index(0, 1, 0)] ||
                          nb[nb_index(0, -1, 0)] || nb[nb_index(0, 0, 1)] || nb[nb_index(0, 0, -1)];
    if (!any_face) return false;

    // Exact criterion: adding the center must preserve the local topology
    // triple (6-components, 26-cavities, Euler characteristic). Simplicity is
    // a function of the 26-neighborhood alone, so the padded local embedding
    // decides it.
    bool fg[27];
    for (int i = 0; i < 27; ++i) fg[i] = nb[i] != 0;
    fg[13] = false;
    const LocalTriple before = local_triple(fg);
    fg[13] = true;
    const LocalTriple after = local_triple(fg);
    return before == after;
}

DigitalTopology digital_topology(const VoxelSet& set) {
    DigitalTopology out;
    const int nx = set.dims[0], ny = set.dims[1], nz = set.dims[2];
    const int64_t total = set.size();
    auto lin = [&](int i, int j, int k) { return int64_t(i) + int64_t(nx) * (int64_t(j) + int64_t(ny) * k); };

    // Foreground 6-components.
    std::vector<uint8_t> seen(static_cast<size_t>(total), 0);
    std::vector<int64_t> stack;
    for (int64_t s = 0; s < total; ++s) {
        if (!set.in[static_cast<size_t>(s)] || seen[static_cast<size_t>(s)]) continue;
        ++out.components_6;
        seen[static_cast<size_t>(s)] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            const int64_t cur = stack.back();
            stack.pop_back();
            const int i = static_cast<int>(cur % nx);
            const int j = static_cast<int>((cur / nx) % ny);
            const int k = static_cast<int>(cur / (int64_t(nx) * ny));
            const int di[6] = {1, -1, 0, 0, 0, 0};
            const int dj[6] = {0, 0, 1, -1, 0, 0};
            const int dk[6] = {0, 0, 0, 0, 1, -1};
            for (int d = 0; d < 6; ++d) {
                const int ii = i + di[d], jj = j + dj[d], kk = k + dk[d];
                if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
                const int64_t nidx = lin(ii, jj, kk);
                if (set.in[static_cast<size_t>(nidx)] && !seen[static_cast<size_t>(nidx)]) {
                    seen[static_cast<size_t>(nidx)] = 1;
                    stack.push_back(nidx);
                }
            }
        }
    }

    // Background 26-components; those never reaching the border are cavities.
    std::fill(seen.begin(), seen.end(), 0);
    for (int64_t s = 0; s < total; ++s) {
        if (set.in[static_cast<size_t>(s)] || seen[static_cast<size_t>(s)]) continue;
        bool touches_border = false;
        seen[static_cast<size_t>(s)] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            const int64_t cur = stack.back();
            stack.pop_back();
            const int i = static_cast<int>(cur % nx);
            const int j = static_cast<int>((cur / nx) % ny);
            const int k = static_cast<int>(cur / (int64_t(nx) * ny));
            if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1) touches_border = true;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ii = i + dx, jj = j + dy, kk = k + dz;
                        if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
                        const int64_t nidx = lin(ii, jj, kk);
                        if (!set.in[static_cast<size_t>(nidx)] && !seen[static_cast<size_t>(nidx)]) {
                            seen[static_cast<size_t>(nidx)] = 1;
                            stack.push_back(nidx);
                        }
                    }
        }
        if (!touches_border) ++out.cavities_26;
    }

    // Euler characteristic of the union of unit cubes: count distinct cells.
    // Lattice points are keyed on the doubled grid so vertices, edge/face
    // midpoints, and cube centers never collide.
    std::unordered_set<uint64_t> cells;
    cells.reserve(static_cast<size_t>(total) * 4);
    auto key = [&](int x2, int y2, int z2) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(x2)) << 42) ^
               (static_cast<uint64_t>(static_cast<uint32_t>(y2)) << 21) ^
               static_cast<uint64_t>(static_cast<uint32_t>(z2));
    };
    int64_t counts[4] = {0, 0, 0, 0}; // by cell dimension
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (!set.at(i, j, k)) continue;
                for (int dz = 0; dz <= 2; ++dz)
                    for (int dy = 0; dy <= 2; ++dy)
                        for (int dx = 0; dx <= 2; ++dx) {
                            const int dim = (dx == 1) + (dy == 1) + (dz == 1);
                            if (cells.insert(key(2 * i + dx, 2 * j + dy, 2 * k + dz)).second)
                                ++counts[dim];
                        }
            }
    out.euler = counts[0] - counts[1] + counts[2] - counts[3];
    return out;
}

// --- topology correction ----------------------------------------------------------

ImplicitVolume topology_correct(const ImplicitVolume& iv) {
    const Volume& g = iv.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const int64_t total = g.size();
    const float level = iv.level;

    std::vector<uint8_t> above(static_cast<size_t>(total), 0);
    float vmin = std::numeric_limits<float>::infinity(), vmax = -std::numeric_limits<float>::infinity();
    int64_t n_above = 0;
    for (int64_t s = 0; s < total; ++s) {
        const float v = g.data[static_cast<size_t>(s)];
        require(std::isfinite(v), errc::numeric_error, "topology correction needs finite field values");
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        if (v > level) {
            above[static_cast<size_t>(s)] = 1;
            ++n_above;
        }
    }
    require(n_above > 0, errc::no_surface, "no voxel above the level");
    const float delta = std::max(1e-4f * (vmax - vmin), 1e-12f);

    auto lin = [&](int i, int j, int k) { return int64_t(i) + int64_t(nx) * (int64_t(j) + int64_t(ny) * k); };
    auto on_border = [&](int64_t s) {
        const int i = static_cast<int>(s % nx);
        const int j = static_cast<int>((s / nx) % ny);
        const int k = static_cast<int>(s / (int64_t(nx) * ny));
        return i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
    };
    const int di[6] = {1, -1, 0, 0, 0, 0};
    const int dj[6] = {0, 0, 1, -1, 0, 0};
    const int dk[6] = {0, 0, 0, 0, 1, -1};

    // Seed: the voxel farthest (6-connected BFS steps) from the below-level
    // region; the grid border counts as below. Ties go to the lowest index.
    std::vector<int32_t> dist(static_cast<size_t>(total), -1);
    {
        std::queue<int64_t> q;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const int64_t s = lin(i, j, k);
                    if (!above[static_cast<size_t>(s)]) {
                        dist[static_cast<size_t>(s)] = 0;
                        q.push(s);
                    } else if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1) {
                        dist[static_cast<size_t>(s)] = 1;
                        q.push(s);
                    }
                }
        while (!q.empty()) {
            const int64_t cur = q.front();
            q.pop();
            const int i = static_cast<int>(cur % nx);
            const int j = static_cast<int>((cur / nx) % ny);
            const int k = static_cast<int>(cur / (int64_t(nx) * ny));
            for (int d = 0; d < 6; ++d) {
                const int ii = i + di[d], jj = j + dj[d], kk = k + dk[d];
                if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
                const int64_t nidx = lin(ii, jj, kk);
                if (dist[static_cast<size_t>(nidx)] < 0) {
                    dist[static_cast<size_t>(nidx)] = dist[static_cast<size_t>(cur)] + 1;
                    q.push(nidx);
                }
            }
        }
    }
    // Border voxels are never admitted: the level set then stays strictly
    // inside the grid, so the extracted surface is closed.
    int64_t seed = -1;
    int32_t best_depth = -1;
    for (int64_t s = 0; s < total; ++s) {
        if (!above[static_cast<size_t>(s)] || on_border(s)) continue;
        const int32_t d = dist[static_cast<size_t>(s)] < 0 ? std::numeric_limits<int32_t>::max()
                                                           : dist[static_cast<size_t>(s)];
        if (d > best_depth) {
            best_depth = d;
            seed = s;
        }
    }
    require(seed >= 0, errc::no_surface, "no above-level voxel in the grid interior");

    // Greedy simple-point growth in decreasing field value. Rejected voxels
    // are retried whenever their 26-neighborhood gains a region voxel.
    struct Cand {
        float value;
        int64_t idx;
    };
    auto cmp = [](const Cand& a, const Cand& b) {
        if (a.value != b.value) return a.value < b.value; // max-heap on value
        return a.idx > b.idx;                             // then lowest index
    };
    std::priority_queue<Cand, std::vector<Cand>, decltype(cmp)> heap(cmp);
    std::vector<uint8_t> region(static_cast<size_t>(total), 0);

    auto neighborhood_of = [&](int64_t s, uint8_t nb[27]) {
        const int i = static_cast<int>(s % nx);
        const int j = static_cast<int>((s / nx) % ny);
        const int k = static_cast<int>(s / (int64_t(nx) * ny));
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ii = i + dx, jj = j + dy, kk = k + dz;
                    const bool in = ii >= 0 && jj >= 0 && kk >= 0 && ii < nx && jj < ny && kk < nz &&
                                    region[static_cast<size_t>(lin(ii, jj, kk))] != 0;
                    nb[nb_index(dx, dy, dz)] = in ? 1 : 0;
                }
    };

    auto push_neighbors = [&](int64_t s) {
        const int i = static_cast<int>(s % nx);
        const int j = static_cast<int>((s / nx) % ny);
        const int k = static_cast<int>(s / (int64_t(nx) * ny));
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const int ii = i + dx, jj = j + dy, kk = k + dz;
                    if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
                    const int64_t nidx = lin(ii, jj, kk);
                    if (above[static_cast<size_t>(nidx)] && !region[static_cast<size_t>(nidx)] && !on_border(nidx))
                        heap.push({g.data[static_cast<size_t>(nidx)], nidx});
                }
    };

    region[static_cast<size_t>(seed)] = 1;
    push_neighbors(seed);
    uint8_t nb[27];
    while (!heap.empty()) {
        const Cand c = heap.top();
        heap.pop();
        if (region[static_cast<size_t>(c.idx)]) continue;
        neighborhood_of(c.idx, nb);
        if (!simple_point_6_26(nb)) continue; // re-enqueued when a neighbor joins
        region[static_cast<size_t>(c.idx)] = 1;
        push_neighbors(c.idx);
    }

    ImplicitVolume out = iv;
    const float clamped = level - delta;
    for (int64_t s = 0; s < total; ++s)
        if (above[static_cast<size_t>(s)] && !region[static_cast<size_t>(s)])
            out.grid.data[static_cast<size_t>(s)] = clamped;
    return out;
}

void GridSpec::validate() const {
    require(resolution >= 8, errc::invalid_argument, "grid resolution must be >= 8");
    require(omega.bbox_min.x < omega.bbox_max.x && omega.bbox_min.y < omega.bbox_max.y &&
                omega.bbox_min.z < omega.bbox_max.z,
            errc::invalid_argument, "grid bbox must be nonempty");
}

} // namespace cf
