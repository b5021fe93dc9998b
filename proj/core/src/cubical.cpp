#include "morsecon/cubical.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "morsecon/parallel.hpp"
#include "morsecon/sparse_reduction.hpp"

namespace morsecon {

CubicalGrid::CubicalGrid(std::vector<double> lo, std::vector<double> up, std::vector<int> res)
    : lower(std::move(lo)), upper(std::move(up)), resolution(std::move(res)) {
    if (resolution.empty() || resolution.size() > 3 || lower.size() != resolution.size() ||
        upper.size() != resolution.size())
        throw Error(ErrorKind::Precondition, "cubical grids have dimension 1 to 3");
    for (std::size_t i = 0; i < resolution.size(); ++i)
        if (resolution[i] < 1 || !(upper[i] > lower[i])) throw Error(ErrorKind::Precondition, "empty grid axis");
}

std::size_t CubicalGrid::cells() const {
    std::size_t n = 1;
    for (int r : resolution) n *= static_cast<std::size_t>(r);
    return n;
}

std::array<int, 3> CubicalGrid::multi(std::size_t index) const {
    std::array<int, 3> m{0, 0, 0};
    for (int a = 0; a < dim(); ++a) {
        m[a] = static_cast<int>(index % static_cast<std::size_t>(resolution[a]));
        index /= static_cast<std::size_t>(resolution[a]);
    }
    return m;
}

std::size_t CubicalGrid::index(const std::array<int, 3>& m) const {
    std::size_t idx = 0;
    for (int a = dim() - 1; a >= 0; --a) idx = idx * static_cast<std::size_t>(resolution[a]) + static_cast<std::size_t>(m[a]);
    return idx;
}

Vec CubicalGrid::center(std::size_t index) const {
    auto m = multi(index);
    Vec c(dim());
    for (int a = 0; a < dim(); ++a) c[a] = lower[a] + (m[a] + 0.5) * width(a);
    return c;
}

double CubicalGrid::half_diagonal() const {
    double s = 0;
    for (int a = 0; a < dim(); ++a) s += width(a) * width(a);
    return 0.5 * std::sqrt(s);
}

CubicalGrid CubicalGrid::refined() const {
    std::vector<int> r = resolution;
    for (int& x : r) x *= 2;
    return CubicalGrid(lower, upper, r);
}

bool CubicalSet::contains(std::uint32_t c) const { return std::binary_search(cells.begin(), cells.end(), c); }

bool Enclosure::maps_to(std::size_t from, std::size_t to) const {
    auto m = grid.multi(to);
    for (int a = 0; a < grid.dim(); ++a)
        if (m[a] < lo[from][a] || m[a] > hi[from][a]) return false;
    return true;
}

namespace {

Vec reverse_flow(const VectorField& f, Vec x, double h, int substeps) {
    const double dt = h / substeps;
    for (int i = 0; i < substeps; ++i) {
        Vec k1 = -f.eval(x);
        Vec k2 = -f.eval(x + 0.5 * dt * k1);
        Vec k3 = -f.eval(x + 0.5 * dt * k2);
        Vec k4 = -f.eval(x + dt * k3);
        x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

template <class F>
void for_each_image(const Enclosure& E, std::size_t c, F&& f) {
    const auto& lo = E.lo[c];
    const auto& hi = E.hi[c];
    const int d = E.grid.dim();
    std::array<int, 3> m{lo[0], d > 1 ? lo[1] : 0, d > 2 ? lo[2] : 0};
    for (m[2] = d > 2 ? lo[2] : 0; m[2] <= (d > 2 ? hi[2] : 0); ++m[2])
        for (m[1] = d > 1 ? lo[1] : 0; m[1] <= (d > 1 ? hi[1] : 0); ++m[1])
            for (m[0] = lo[0]; m[0] <= hi[0]; ++m[0]) f(E.grid.index(m));
}

struct SccResult {
    // Component id per cell; ids increase in Tarjan emission order (sinks first).
    std::vector<std::uint32_t> comp;
    std::vector<bool> recurrent;
    std::uint32_t count = 0;
};

SccResult strongly_connected(const Enclosure& E) {
    const std::size_t n = E.grid.cells();
    const std::uint32_t none = UINT32_MAX;
    SccResult r;
    r.comp.assign(n, none);
    std::vector<std::uint32_t> index(n, none), low(n, 0);
    std::vector<bool> on_stack(n, false);
    std::vector<std::uint32_t> stack;
    std::uint32_t counter = 0;
    struct Frame {
        std::uint32_t v;
        std::vector<std::uint32_t> succ;
        std::size_t next;
    };
    auto successors = [&](std::uint32_t v) {
        std::vector<std::uint32_t> s;
        for_each_image(E, v, [&](std::size_t w) { s.push_back(static_cast<std::uint32_t>(w)); });
        return s;
    };
    for (std::uint32_t root = 0; root < n; ++root) {
        if (index[root] != none) continue;
        std::vector<Frame> call;
        call.push_back({root, successors(root), 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& fr = call.back();
            if (fr.next < fr.succ.size()) {
                std::uint32_t w = fr.succ[fr.next++];
                if (index[w] == none) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back({w, successors(w), 0});
                } else if (on_stack[w]) {
                    low[fr.v] = std::min(low[fr.v], index[w]);
                }
                continue;
            }
            const std::uint32_t v = fr.v;
            if (low[v] == index[v]) {
                std::size_t size = 0;
                std::uint32_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    r.comp[w] = r.count;
                    ++size;
                } while (w != v);
                r.recurrent.push_back(size > 1 || E.maps_to(v, v));
                ++r.count;
            }
            call.pop_back();
            if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
        }
    }
    return r;
}

// Cells on a path from a recurrent component to a recurrent component.
std::vector<bool> invariant_cells(const Enclosure& E) {
    const std::size_t n = E.grid.cells();
    SccResult scc = strongly_connected(E);
    std::vector<std::vector<std::uint32_t>> members(scc.count);
    for (std::uint32_t v = 0; v < n; ++v) members[scc.comp[v]].push_back(v);
    // Reaches recurrent: successors' components are emitted earlier.
    std::vector<bool> reaches(scc.count, false), reached(scc.count, false);
    for (std::uint32_t c = 0; c < scc.count; ++c) {
        bool r = scc.recurrent[c];
        for (std::uint32_t v : members[c]) {
            if (r) break;
            for_each_image(E, v, [&](std::size_t w) { r = r || (scc.comp[w] != c && reaches[scc.comp[w]]); });
        }
        reaches[c] = r;
    }
    for (std::uint32_t c = scc.count; c-- > 0;) {
        if (scc.recurrent[c]) reached[c] = true;
        if (!reached[c]) continue;
        for (std::uint32_t v : members[c]) for_each_image(E, v, [&](std::size_t w) { reached[scc.comp[w]] = true; });
    }
    std::vector<bool> inv(n);
    for (std::uint32_t v = 0; v < n; ++v) inv[v] = reaches[scc.comp[v]] && reached[scc.comp[v]];
    return inv;
}

CubicalSet to_set(const CubicalGrid& g, const std::vector<bool>& mask) {
    CubicalSet s{g, {}};
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) s.cells.push_back(static_cast<std::uint32_t>(i));
    return s;
}

// Elementary cubes in doubled coordinates: odd entries are unit intervals.
struct CubeCodec {
    int d;
    std::array<std::size_t, 3> ext{1, 1, 1};
    explicit CubeCodec(const CubicalGrid& g) : d(g.dim()) {
        for (int a = 0; a < d; ++a) ext[a] = static_cast<std::size_t>(2 * g.resolution[a] + 1);
    }
    std::size_t encode(const std::array<int, 3>& c) const {
        std::size_t k = 0;
        for (int a = d - 1; a >= 0; --a) k = k * ext[a] + static_cast<std::size_t>(c[a]);
        return k;
    }
    std::array<int, 3> decode(std::size_t k) const {
        std::array<int, 3> c{0, 0, 0};
        for (int a = 0; a < d; ++a) {
            c[a] = static_cast<int>(k % ext[a]);
            k /= ext[a];
        }
        return c;
    }
    int dim_of(const std::array<int, 3>& c) const {
        int n = 0;
        for (int a = 0; a < d; ++a) n += c[a] & 1;
        return n;
    }
};

void close_cells(const CubicalGrid& g, const CubeCodec& codec, const std::vector<std::uint32_t>& top,
                 std::unordered_set<std::size_t>& out) {
    const int d = g.dim();
    for (std::uint32_t c : top) {
        auto m = g.multi(c);
        // All 3^d faces of the cube.
        int total = 1;
        for (int a = 0; a < d; ++a) total *= 3;
        for (int t = 0; t < total; ++t) {
            std::array<int, 3> e{0, 0, 0};
            int r = t;
            for (int a = 0; a < d; ++a) {
                e[a] = 2 * m[a] + (r % 3);
                r /= 3;
            }
            out.insert(codec.encode(e));
        }
    }
}

HomologyResult relative_homology(const CubicalGrid& g, const std::vector<std::uint32_t>& n_cells,
                                 const std::vector<std::uint32_t>& l_cells) {
    CubeCodec codec(g);
    std::unordered_set<std::size_t> cn, cl;
    close_cells(g, codec, n_cells, cn);
    close_cells(g, codec, l_cells, cl);
    std::vector<std::pair<int, std::size_t>> cubes;
    for (std::size_t k : cn)
        if (!cl.count(k)) cubes.emplace_back(codec.dim_of(codec.decode(k)), k);
    std::sort(cubes.begin(), cubes.end());
    SparseChainComplex cx;
    std::unordered_map<std::size_t, SparseChainComplex::Cell> id;
    id.reserve(cubes.size());
    for (const auto& [dim, k] : cubes) id[k] = cx.add_cell(dim);
    for (const auto& [dim, k] : cubes) {
        auto c = codec.decode(k);
        int parity = 0;
        for (int a = 0; a < g.dim(); ++a) {
            if (!(c[a] & 1)) continue;
            const int sign = (parity % 2 == 0) ? 1 : -1;
            for (int side : {-1, 1}) {
                auto f = c;
                f[a] += side;
                auto it = id.find(codec.encode(f));
                if (it != id.end()) cx.add_boundary_entry(id.at(k), it->second, BigInt(sign * side));
            }
            ++parity;
        }
    }
    if (cubes.empty()) return HomologyResult{};
    return cx.homology();
}

}  // namespace

Enclosure enclosure_map(const VectorField& field, const CubicalGrid& grid, const EnclosureOptions& o) {
    if (field.dim() != grid.dim()) throw Error(ErrorKind::ShapeMismatch, "field and grid dimensions differ");
    Enclosure E;
    E.grid = grid;
    const int d = grid.dim();
    std::vector<double> norms(o.lipschitz_samples);
    parallel_for(o.lipschitz_samples, [&](std::size_t i) {
        auto u = halton(i + 1, d);
        Vec x(d);
        for (int a = 0; a < d; ++a) x[a] = grid.lower[a] + u[a] * (grid.upper[a] - grid.lower[a]);
        Eigen::JacobiSVD<Mat> svd(field.jacobian(x));
        norms[i] = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    });
    E.lipschitz = norms.empty() ? 0.0 : *std::max_element(norms.begin(), norms.end());
    E.h = E.lipschitz > 0 ? o.time_scale / E.lipschitz : o.time_scale;
    E.padding = grid.half_diagonal() * std::exp(E.lipschitz * E.h) * o.padding_factor;
    const std::size_t n = grid.cells();
    E.lo.resize(n);
    E.hi.resize(n);
    E.exits.assign(n, false);
    std::vector<char> exits(n, 0);
    parallel_for(n, [&](std::size_t c) {
        Vec y = reverse_flow(field, grid.center(c), E.h, o.substeps);
        std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
        for (int a = 0; a < d; ++a) {
            const double w = grid.width(a);
            int l = static_cast<int>(std::floor((y[a] - E.padding - grid.lower[a]) / w));
            int h = static_cast<int>(std::floor((y[a] + E.padding - grid.lower[a]) / w));
            if (!std::isfinite(y[a]) || l < 0 || h >= grid.resolution[a]) exits[c] = 1;
            lo[a] = std::clamp(l, 0, grid.resolution[a] - 1);
            hi[a] = std::clamp(h, 0, grid.resolution[a] - 1);
            if (!std::isfinite(y[a]) || h < 0 || l >= grid.resolution[a]) {
                // Entirely outside: empty image inside the grid.
                lo[a] = 1;
                hi[a] = 0;
            }
        }
        E.lo[c] = lo;
        E.hi[c] = hi;
    });
    for (std::size_t c = 0; c < n; ++c) E.exits[c] = exits[c] != 0;
    return E;
}

IndexPair build_index_pair(const VectorField& field, const CubicalGrid& grid, const EnclosureOptions& options) {
    IndexPair P;
    P.map = enclosure_map(field, grid, options);
    const Enclosure& E = P.map;
    const std::size_t n = grid.cells();
    std::vector<bool> inv = invariant_cells(E);
    for (std::size_t c = 0; c < n; ++c) {
        if (!inv[c]) continue;
        auto m = grid.multi(c);
        for (int a = 0; a < grid.dim(); ++a)
            if (m[a] < 2 || m[a] > grid.resolution[a] - 3)
                throw Error(ErrorKind::NotIsolated, "invariant part reaches the frontier collar at cell " +
                                                        std::to_string(c));
    }
    std::vector<bool> in_n = inv;
    for (std::size_t c = 0; c < n; ++c) {
        if (!inv[c]) continue;
        if (E.exits[c])
            throw Error(ErrorKind::NotIsolated, "image of invariant cell " + std::to_string(c) + " leaves the grid");
        for_each_image(E, c, [&](std::size_t w) { in_n[w] = true; });
    }
    std::vector<bool> in_l(n);
    for (std::size_t c = 0; c < n; ++c) in_l[c] = in_n[c] && !inv[c];
    P.invariant = to_set(grid, inv);
    P.N = to_set(grid, in_n);
    P.L = to_set(grid, in_l);
    auto bad = index_pair_violations(P);
    if (!bad.empty()) throw Error(ErrorKind::NotIsolated, bad.front());
    return P;
}

std::vector<std::string> index_pair_violations(const IndexPair& P) {
    std::vector<std::string> out;
    const Enclosure& E = P.map;
    for (std::uint32_t c : P.L.cells)
        if (!P.N.contains(c)) out.push_back("L is not contained in N at cell " + std::to_string(c));
    for (std::uint32_t c : P.N.cells) {
        const bool in_l = P.L.contains(c);
        bool leaves = E.exits[c];
        for_each_image(E, c, [&](std::size_t w) {
            const auto w32 = static_cast<std::uint32_t>(w);
            const bool wn = P.N.contains(w32);
            if (!wn) leaves = true;
            // Positive invariance of L in N.
            if (in_l && wn && !P.L.contains(w32))
                out.push_back("cell " + std::to_string(c) + " of L maps into N \\ L");
        });
        // Exit cells: anything leaving N must lie in L.
        if (leaves && !in_l) out.push_back("cell " + std::to_string(c) + " of N \\ L maps outside N");
    }
    // Invariant part equals N \ L.
    for (std::uint32_t c : P.N.cells)
        if (P.L.contains(c) == P.invariant.contains(c))
            out.push_back("N \\ L differs from the invariant part at cell " + std::to_string(c));
    return out;
}

HomologyResult relative_cubical_homology(const IndexPair& P) {
    return relative_homology(P.N.grid, P.N.cells, P.L.cells);
}

HomologyResult cubical_homology(const CubicalSet& set) { return relative_homology(set.grid, set.cells, {}); }

ConleyComparison conley_vs_morse(const VectorField& field, const CubicalGrid& region, const ComplexAssembly& assembly,
                                 const EnclosureOptions& options) {
    ConleyComparison r;
    r.morse = homology(assembly.complex);
    IndexPair P = build_index_pair(field, region, options);
    r.conley = relative_cubical_homology(P);
    r.passed = r.morse.same_groups(r.conley);
    r.detail = "morse " + r.morse.str() + " conley " + r.conley.str();
    return r;
}

}  // namespace morsecon
