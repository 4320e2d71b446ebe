// Marching cubes built from per-face contour chords. Each face contributes
// directed chords between edge cut points (a pure function of that face's
// corner values, so adjacent cells always agree); walking the chords yields
// disjoint directed loops that are fanned into triangles. Chords are directed
// with the above-level region on the right as seen from outside the cell,
// which makes every loop wind so triangle normals point toward lower values.
#include <cmath>
#include <unordered_map>

#include "cortifield/errors.hpp"
#include "cortifield/reconstruct.hpp"

namespace cf {

namespace {

// Corner c = (x, y, z) bits -> index c = x + 2y + 4z.
// Cube edges: (corner a, corner b, axis), b = a + axis step.
struct CubeEdge {
    int a, b, axis;
};
constexpr CubeEdge kEdges[12] = {
    {0, 1, 0}, {2, 3, 0}, {4, 5, 0}, {6, 7, 0}, // x
    {0, 2, 1}, {1, 3, 1}, {4, 6, 1}, {5, 7, 1}, // y
    {0, 4, 2}, {1, 5, 2}, {2, 6, 2}, {3, 7, 2}, // z
};

// Face corner cycles, counter-clockwise as seen from outside the cell.
constexpr int kFaceCycle[6][4] = {
    {0, 4, 6, 2}, // x = 0
    {1, 3, 7, 5}, // x = 1
    {0, 1, 5, 4}, // y = 0
    {3, 2, 6, 7}, // y = 1
    {0, 2, 3, 1}, // z = 0
    {4, 5, 7, 6}, // z = 1
};

// Cube-edge index for a corner pair, or -1.
int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e)
        if ((kEdges[e].a == a && kEdges[e].b == b) || (kEdges[e].a == b && kEdges[e].b == a)) return e;
    return -1;
}

struct FaceEdgeTable {
    int edge[6][4]; // cube-edge id of cycle edge (i, i+1)
    FaceEdgeTable() {
        for (int f = 0; f < 6; ++f)
            for (int i = 0; i < 4; ++i)
                edge[f][i] = edge_between(kFaceCycle[f][i], kFaceCycle[f][(i + 1) % 4]);
    }
};

const FaceEdgeTable& face_edges() {
    static const FaceEdgeTable t;
    return t;
}

} // namespace

TriangleMesh marching_cubes(const ImplicitVolume& iv, McFaceRule rule) {
    const Volume& g = iv.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    require(nx >= 2 && ny >= 2 && nz >= 2, errc::invalid_argument, "marching cubes needs a 2^3 grid at least");
    require(nx <= 2047 && ny <= 2047 && nz <= 2047, errc::invalid_argument,
            "marching cubes supports grids up to 2047^3");
    float vmin = std::numeric_limits<float>::infinity(), vmax = -vmin;
    for (float v : g.data) {
        require(std::isfinite(v), errc::numeric_error, "marching cubes needs finite field values");
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    const double level = iv.level;
    const double nudge = std::max(1e-6 * (double(vmax) - double(vmin)), 1e-30);

    TriangleMesh mesh;
    std::unordered_map<uint64_t, int> edge_vertex; // global edge key -> vertex id
    edge_vertex.reserve(4096);

    auto value = [&](int i, int j, int k) {
        const double s = double(g.at(i, j, k)) - level;
        return s == 0.0 ? nudge : s; // corners on the level are nudged above it
    };
    auto global_edge_key = [&](int i, int j, int k, int axis) {
        return ((static_cast<uint64_t>(i) * 2048 + j) * 2048 + k) * 4 + static_cast<uint64_t>(axis);
    };

    const FaceEdgeTable& fe = face_edges();
    double s[8];
    int cut_vertex[12];
    int succ[12];

    for (int k = 0; k + 1 < nz; ++k)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i) {
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    s[c] = value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    if (s[c] > 0.0) mask |= 1 << c;
                }
                if (mask == 0 || mask == 255) continue;

                // Vertices on crossing edges, shared across cells.
                for (int e = 0; e < 12; ++e) {
                    cut_vertex[e] = -1;
                    succ[e] = -1;
                    const CubeEdge& ed = kEdges[e];
                    if ((s[ed.a] > 0.0) == (s[ed.b] > 0.0)) continue;
                    const int ax = ed.a & 1, ay = (ed.a >> 1) & 1, az = (ed.a >> 2) & 1;
                    const uint64_t key = global_edge_key(i + ax, j + ay, k + az, ed.axis);
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) {
                        cut_vertex[e] = it->second;
                        continue;
                    }
                    const double t = s[ed.a] / (s[ed.a] - s[ed.b]);
                    Vec3 idx{double(i + ax), double(j + ay), double(k + az)};
                    idx[ed.axis] += t;
                    cut_vertex[e] = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back(g.affine.apply(idx));
                    edge_vertex.emplace(key, cut_vertex[e]);
                }

                // Directed chords per face.
                for (int f = 0; f < 6; ++f) {
                    const int* cyc = kFaceCycle[f];
                    bool pos[4];
                    int npos = 0;
                    for (int c = 0; c < 4; ++c) {
                        pos[c] = s[cyc[c]] > 0.0;
                        npos += pos[c] ? 1 : 0;
                    }
                    if (npos == 0 || npos == 4) continue;
                    const bool diagonal = npos == 2 && pos[0] == pos[2];
                    bool connected = false;
                    if (diagonal && rule == McFaceRule::asymptotic) {
                        const int p = pos[0] ? 0 : 1; // positions of the + diagonal
                        connected = s[cyc[p]] * s[cyc[p + 2]] - s[cyc[p + 1]] * s[cyc[(p + 3) % 4]] > 0.0;
                    }
                    if (connected) {
                        // Band: one reversed chord around each - corner.
                        for (int b = 0; b < 4; ++b) {
                            if (pos[b]) continue;
                            const int from = fe.edge[f][b];           // cycle edge (b, b+1)
                            const int to = fe.edge[f][(b + 3) % 4];   // cycle edge (b-1, b)
                            succ[from] = to;
                        }
                    } else {
                        // One chord per maximal cyclic + run.
                        for (int st = 0; st < 4; ++st) {
                            if (!pos[st] || pos[(st + 3) % 4]) continue; // run start
                            int en = st;
                            while (pos[(en + 1) % 4]) en = (en + 1) % 4;
                            const int from = fe.edge[f][(st + 3) % 4]; // cycle edge (st-1, st)
                            const int to = fe.edge[f][en];             // cycle edge (en, en+1)
                            succ[from] = to;
                        }
                    }
                }

                // Walk directed loops and fan them.
                bool used[12] = {};
                for (int start = 0; start < 12; ++start) {
                    if (succ[start] < 0 || used[start]) continue;
                    int loop[12];
                    int len = 0;
                    int cur = start;
                    do {
                        used[cur] = true;
                        loop[len++] = cut_vertex[cur];
                        cur = succ[cur];
                    } while (cur != start && len < 12);
                    if (len == 3) {
                        mesh.faces.push_back({loop[0], loop[1], loop[2]});
                    } else {
                        Vec3 centroid{0, 0, 0};
                        for (int v = 0; v < len; ++v) centroid += mesh.vertices[static_cast<size_t>(loop[v])];
                        centroid = centroid / double(len);
                        const int cid = static_cast<int>(mesh.vertices.size());
                        mesh.vertices.push_back(centroid);
                        for (int v = 0; v < len; ++v)
                            mesh.faces.push_back({cid, loop[v], loop[(v + 1) % len]});
                    }
                }
            }

    require(!mesh.faces.empty(), errc::no_surface, "no level crossing in the field");
    return mesh;
}

} // namespace cf
