#include "morsecon/complex_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace morsecon {

namespace {

using Counts = std::map<PairKey, int>;

int lookup(const Counts& c, const std::string& a, const std::string& b) {
    auto it = c.find({a, b});
    return it == c.end() ? 0 : it->second;
}

bool coords_less(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i)
        if (a[i] != b[i]) return a[i] < b[i];
    return a.size() < b.size();
}

struct Layout {
    std::vector<const StationaryPoint*> gens;  // sorted (degree, coords)
    std::vector<const StationaryPoint*> unstable;
    std::map<std::string, int> degree;
};

Layout layout(const std::vector<StationaryPoint>& points, const std::map<std::string, int>& degree_override) {
    Layout L;
    for (const auto& p : points) {
        int deg = p.flow_index;
        if (auto it = degree_override.find(p.id); it != degree_override.end()) deg = it->second;
        L.degree[p.id] = deg;
        if (p.cls == PointClass::BoundaryUnstable)
            L.unstable.push_back(&p);
        else
            L.gens.push_back(&p);
    }
    std::sort(L.gens.begin(), L.gens.end(), [&](const StationaryPoint* a, const StationaryPoint* b) {
        int da = L.degree.at(a->id), db = L.degree.at(b->id);
        if (da != db) return da < db;
        if (coords_less(a->coords, b->coords)) return true;
        if (coords_less(b->coords, a->coords)) return false;
        return a->id < b->id;
    });
    std::sort(L.unstable.begin(), L.unstable.end(),
              [](const StationaryPoint* a, const StationaryPoint* b) { return a->id < b->id; });
    return L;
}

std::string term(const char* name, const std::string& a, const std::string& b) {
    return std::string(name) + "(" + a + "," + b + ")";
}

// One entry of the block differential, or of the U map when `direct` holds cut counts.
// y <- x: direct count plus the boundary-obstructed correction through unstable points.
long long block_entry(const StationaryPoint& x, const StationaryPoint& y, const Counts& direct,
                      const Counts& direct_bar, const Counts& n, const Counts& nbar, const Counts* second,
                      const Counts* second_bar, const std::vector<const StationaryPoint*>& unstable,
                      const char* dname, const char* dbar_name, std::vector<std::string>& terms) {
    long long v = 0;
    const bool xs = x.cls == PointClass::BoundaryStable;
    const bool ys = y.cls == PointClass::BoundaryStable;
    if (!xs) {
        // Column from the interior: direct count (targets interior or boundary-stable).
        int c = lookup(direct, x.id, y.id);
        if (c != 0) terms.push_back(term(dname, x.id, y.id));
        return c;
    }
    if (ys) {
        int c = lookup(direct_bar, x.id, y.id);
        if (c != 0) terms.push_back(term(dbar_name, x.id, y.id));
        v += c;
    }
    for (const StationaryPoint* u : unstable) {
        // - d_u(.) dbar_su
        int a = lookup(direct, u->id, y.id), b = lookup(nbar, x.id, u->id);
        if (a != 0 && b != 0) {
            v -= static_cast<long long>(a) * b;
            terms.push_back("-" + term(dname, u->id, y.id) + "*" + term("nbar", x.id, u->id));
        }
        if (second && second_bar) {
            int c = lookup(n, u->id, y.id), d = lookup(*second_bar, x.id, u->id);
            if (c != 0 && d != 0) {
                v -= static_cast<long long>(c) * d;
                terms.push_back("-" + term("n", u->id, y.id) + "*" + term(dbar_name, x.id, u->id));
            }
        }
    }
    return v;
}

ComplexAssembly assemble(const std::vector<StationaryPoint>& points, const CountLedger& ledger,
                         const std::map<std::string, int>& degree_override) {
    ComplexAssembly A;
    A.points = points;
    A.ledger = ledger;
    Layout L = layout(A.points, degree_override);
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (const auto* p : L.gens) {
        A.generators.push_back({p->id, L.degree.at(p->id), p->cls});
        const int d = L.degree.at(p->id);
        A.basis[d].push_back(A.generators.size() - 1);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    if (L.gens.empty()) lo = hi = 0;
    A.complex.groups.min_degree = lo;
    A.complex.groups.ranks.assign(static_cast<std::size_t>(hi - lo + 1), 0);
    for (const auto& [d, idx] : A.basis) A.complex.groups.ranks[static_cast<std::size_t>(d - lo)] = idx.size();
    std::map<std::string, const StationaryPoint*> by_id;
    for (const auto& p : A.points) by_id[p.id] = &p;
    for (int k = lo + 1; k <= hi; ++k) {
        auto src = A.basis.find(k), dst = A.basis.find(k - 1);
        if (src == A.basis.end() || dst == A.basis.end()) continue;
        IntegerMatrix D(dst->second.size(), src->second.size());
        for (std::size_t c = 0; c < src->second.size(); ++c)
            for (std::size_t r = 0; r < dst->second.size(); ++r) {
                const auto& gx = A.generators[src->second[c]];
                const auto& gy = A.generators[dst->second[r]];
                std::vector<std::string> terms;
                long long v = block_entry(*by_id.at(gx.id), *by_id.at(gy.id), ledger.n, ledger.nbar, ledger.n,
                                          ledger.nbar, nullptr, nullptr, L.unstable, "n", "nbar", terms);
                D(r, c) = v;
                if (!terms.empty()) A.provenance.push_back({"d", k, gy.id, gx.id, v, terms});
            }
        A.complex.differentials[k] = D;
    }
    if (!verify_complex(A.complex)) throw Error(ErrorKind::NotAComplex, "assembled differential does not square to zero");
    return A;
}

}  // namespace

std::size_t ComplexAssembly::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < generators.size(); ++i)
        if (generators[i].id == id) return i;
    throw Error(ErrorKind::Precondition, "no generator " + id);
}

ComplexAssembly build_morse_complex(const std::vector<StationaryPoint>& points, const CountLedger& ledger) {
    for (const auto& p : points)
        if (p.cls != PointClass::Interior)
            throw Error(ErrorKind::Precondition, "boundary point " + p.id + " in a closed-manifold complex");
    return assemble(points, ledger, {});
}

ComplexAssembly build_boundary_complex(const std::vector<StationaryPoint>& points, const CountLedger& ledger) {
    return assemble(points, ledger, {});
}

int equivariant_index(int ind_q, int ordinal, int eigen_sign) {
    if (ordinal < 1) throw Error(ErrorKind::Precondition, "eigenvalue ordinal must be at least 1");
    if (eigen_sign == 0) throw Error(ErrorKind::ZeroEigenvalue, "zero eigenvalue at a reducible point");
    return ind_q + 2 * ordinal - (eigen_sign > 0 ? 2 : 1);
}

int fixed_locus_index(const BlowupField& field, const StationaryPoint& p) {
    const int a = field.real_dims();
    if (a == 0) return 0;
    const ManifoldSpec bm = field.manifold();
    const Vec y0 = p.coords;
    LambdaField restricted(a, [&](const Vec& r) {
        Vec y = y0;
        y.head(a) = r;
        y[a] = 0.0;
        return Vec(field.eval(y).head(a));
    });
    ManifoldSpec q = bm.blowup_base_sphere ? unit_sphere(a) : full_space(a);
    if (q.dim() == 0) return 0;
    return analyze_point(restricted, q, p.base.size() == a ? p.base : Vec(y0.head(a))).flow_index;
}

EquivariantCertificate free_action_certificate(const ManifoldSpec& quotient,
                                               const std::vector<StationaryPoint>& points,
                                               const QuasiGradientCertificate* witness, double tol_hyp) {
    EquivariantCertificate c;
    if (!quotient.quotient || !quotient.action.present()) c.failures.push_back("not a circle quotient");
    for (int w : quotient.action.weights)
        if (w != 1) c.failures.push_back("action is not free");
    for (const auto& p : points)
        for (const auto& e : p.spectrum)
            if (std::abs(e.real()) <= tol_hyp) {
                c.quotient_hyperbolic = false;
                c.failures.push_back("non-hyperbolic quotient point " + p.id);
            }
    if (!witness || !witness->passed) {
        c.quasi_gradient = false;
        c.failures.push_back("quasi-gradient witness missing or failed");
    }
    return c;
}

ComplexAssembly build_equivariant_complex(const EquivariantInput& in) {
    if (!in.certificate) throw Error(ErrorKind::CertificateMissing, "equivariant complex needs a field certificate");
    if (!in.certificate->passed()) {
        std::string why;
        for (const auto& f : in.certificate->failures) why += (why.empty() ? "" : "; ") + f;
        throw Error(ErrorKind::CertificateFailure, why);
    }
    std::map<std::string, int> degrees;
    for (const auto& p : in.points) {
        if (!p.reducible) continue;
        if (!in.field) throw Error(ErrorKind::Precondition, "reducible point " + p.id + " without a blow-up field");
        const int sign = p.eigenvalue > 0 ? 1 : (p.eigenvalue < 0 ? -1 : 0);
        const int deg = equivariant_index(fixed_locus_index(*in.field, p), p.eigen_ordinal, sign);
        if (deg != p.flow_index)
            throw Error(ErrorKind::Precondition, "index of " + p.id + " is " + std::to_string(p.flow_index) +
                                                     " on the quotient but " + std::to_string(deg) +
                                                     " from the eigenvalue ordinal");
        degrees[p.id] = deg;
    }
    ComplexAssembly A = assemble(in.points, in.ledger, degrees);
    if (in.field) {
        const int c = in.field->complex_dims();
        A.window = 2 * c - 2;
    } else {
        A.window = std::numeric_limits<int>::max();
    }
    return A;
}

ComplexAssembly restrict_to_isolated_set(const ComplexAssembly& assembly,
                                         const std::function<bool(const Vec&)>& region) {
    std::vector<StationaryPoint> kept;
    std::set<std::string> ids;
    for (const auto& p : assembly.points)
        if (region(p.coords)) {
            kept.push_back(p);
            ids.insert(p.id);
        }
    CountLedger L;
    auto keep = [&](const PairKey& k) { return ids.count(k.first) && ids.count(k.second); };
    for (const auto& t : assembly.ledger.trajectories) {
        if (!ids.count(t.source) || !ids.count(t.target)) continue;
        for (const auto& x : t.samples)
            if (!region(x))
                throw Error(ErrorKind::LeakyRegion, "orbit " + t.source + " -> " + t.target + " leaves the region");
        L.trajectories.push_back(t);
    }
    const std::pair<const Counts*, Counts*> maps[] = {{&assembly.ledger.n, &L.n},
                                                      {&assembly.ledger.nbar, &L.nbar},
                                                      {&assembly.ledger.m, &L.m},
                                                      {&assembly.ledger.mbar, &L.mbar}};
    for (const auto& [src, dst] : maps)
        for (const auto& [k, v] : *src)
            if (keep(k)) (*dst)[k] = v;
    std::map<std::string, int> degrees;
    for (const auto& g : assembly.generators)
        if (ids.count(g.id)) degrees[g.id] = g.degree;
    ComplexAssembly out = assemble(kept, L, degrees);
    out.window = assembly.window;
    return out;
}

GradedMap build_u_map(const ComplexAssembly& A, const CountLedger& cuts) {
    GradedMap U;
    U.degree_shift = -2;
    Layout L = layout(A.points, {});
    std::map<std::string, const StationaryPoint*> by_id;
    for (const auto& p : A.points) by_id[p.id] = &p;
    const int lo = A.complex.groups.min_degree, hi = A.complex.groups.max_degree();
    for (int k = lo + 2; k <= hi; ++k) {
        auto src = A.basis.find(k), dst = A.basis.find(k - 2);
        if (src == A.basis.end() || dst == A.basis.end()) continue;
        IntegerMatrix M(dst->second.size(), src->second.size());
        for (std::size_t c = 0; c < src->second.size(); ++c)
            for (std::size_t r = 0; r < dst->second.size(); ++r) {
                const auto& gx = A.generators[src->second[c]];
                const auto& gy = A.generators[dst->second[r]];
                std::vector<std::string> terms;
                // -m_u(.) nbar_su - n_u(.) mbar_su
                M(r, c) = block_entry(*by_id.at(gx.id), *by_id.at(gy.id), cuts.m, cuts.mbar, A.ledger.n,
                                      A.ledger.nbar, &A.ledger.n, &cuts.mbar, L.unstable, "m", "mbar", terms);
            }
        U.blocks[k] = M;
    }
    if (!is_chain_map(A.complex, U)) throw Error(ErrorKind::NotChainMap, "U map does not commute with the differential");
    return U;
}

int reducible_relative_grading(double mu, double nu, const std::vector<double>& spectrum, double tol) {
    if (mu == 0.0 || nu == 0.0) throw Error(ErrorKind::ZeroEigenvalue, "grading needs nonzero eigenvalues");
    if (mu < nu) throw Error(ErrorKind::Precondition, "grading needs mu >= nu");
    auto present = [&](double e) {
        return std::any_of(spectrum.begin(), spectrum.end(), [&](double s) { return std::abs(s - e) <= tol; });
    };
    if (!present(mu) || !present(nu)) throw Error(ErrorKind::Precondition, "eigenvalue not in the spectrum");
    int i = 0;
    for (double s : spectrum)
        if (s > nu + tol && s <= mu + tol) ++i;
    return (mu > 0) == (nu > 0) ? 2 * i : 2 * i - 1;
}

}  // namespace morsecon
