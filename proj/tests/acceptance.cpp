#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "morsecon/cubical.hpp"
#include "pipelines.hpp"

using namespace morsecon;
using namespace morsecon::cli;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double x, int digits = 2) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << x;
    return os.str();
}

int failures = 0;

void line(int id, bool ok, const std::string& what, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << what << ": " << detail << std::endl;
    failures += ok ? 0 : 1;
}

struct CorpusRun {
    RunResult result;
    double seconds = 0.0;
};

Config corpus_config(const std::string& name) {
    return Config::load(std::string(MORSECON_CORPUS_DIR) + "/" + name + ".cfg").resolve();
}

std::vector<std::string> corpus_names() {
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(MORSECON_CORPUS_DIR))
        if (e.path().extension() == ".cfg") names.push_back(e.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
}

std::map<std::string, CorpusRun> run_corpus(const std::vector<std::string>& names) {
    std::map<std::string, CorpusRun> out;
    for (const auto& n : names) {
        auto t0 = Clock::now();
        auto r = run_pipeline(corpus_config(n));
        out[n] = {std::move(r), since(t0)};
    }
    return out;
}

// Closed cubical sets with the homotopy type of the manifold.
CubicalSet cubical_model(const std::string& manifold) {
    auto keep = [](CubicalGrid g, const std::function<bool(const std::array<int, 3>&)>& pred) {
        CubicalSet s{g, {}};
        for (std::size_t c = 0; c < g.cells(); ++c)
            if (pred(g.multi(c))) s.cells.push_back(static_cast<std::uint32_t>(c));
        return s;
    };
    auto cheb = [](int a, int b, int c) { return std::max(std::abs(a - c), std::abs(b - c)); };
    if (manifold == "s2")
        return keep(CubicalGrid({0, 0, 0}, {3, 3, 3}, {3, 3, 3}),
                    [](const auto& m) { return !(m[0] == 1 && m[1] == 1 && m[2] == 1); });
    if (manifold == "s1")
        return keep(CubicalGrid({0, 0}, {3, 3}, {3, 3}), [](const auto& m) { return !(m[0] == 1 && m[1] == 1); });
    if (manifold == "t2")
        return keep(CubicalGrid({0, 0, 0}, {11, 11, 7}, {11, 11, 7}), [&](const auto& m) {
            const int r = cheb(m[0], m[1], 5);
            return r >= 1 && !(r == 3 && m[2] == 3);
        });
    if (manifold == "interval") return keep(CubicalGrid({0}, {4}, {4}), [](const auto&) { return true; });
    return keep(CubicalGrid({0, 0}, {4, 4}, {4, 4}), [](const auto&) { return true; });
}

// d_{k-1} d_k by explicit products, independent of verify_complex.
bool squares_to_zero(const ChainComplex& cc) {
    for (const auto& [k, d] : cc.differentials) {
        auto it = cc.differentials.find(k - 1);
        if (it != cc.differentials.end() && !(it->second * d).is_zero()) return false;
    }
    return true;
}

bool commutes(const ChainComplex& cc, const GradedMap& u) {
    const int lo = cc.groups.min_degree, hi = cc.groups.max_degree();
    for (int k = lo; k <= hi; ++k) {
        const int j = k + u.degree_shift;
        IntegerMatrix lhs = cc.differential(j) * u.block(k, cc.groups, cc.groups);
        IntegerMatrix rhs = u.block(k - 1, cc.groups, cc.groups) * cc.differential(k);
        if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols()) return false;
        if (!(lhs - rhs).is_zero()) return false;
    }
    return true;
}

void criterion_algebra(const std::map<std::string, CorpusRun>& corpus) {
    std::size_t complexes = 0, maps = 0;
    bool ok = true;
    double worst = 0.0;
    auto check = [&](const ChainComplex& cc, const GradedMap* u) {
        auto t0 = Clock::now();
        bool good = squares_to_zero(cc) && verify_complex(cc);
        if (u) {
            good = good && commutes(cc, *u) && is_chain_map(cc, *u);
            ++maps;
        }
        const double s = since(t0);
        worst = std::max(worst, s);
        ok = ok && good && s < 1.0;
        ++complexes;
    };
    for (const auto& [name, run] : corpus) {
        for (const auto& nc : run.result.complexes) check(nc.assembly.complex, nc.u ? &*nc.u : nullptr);
        if (run.result.truncation)
            for (const auto& cr : run.result.truncation->cutoffs)
                check(build_morse_complex(cr.points, cr.ledger).complex, nullptr);
    }
    ok = ok && complexes >= 8;
    line(1, ok, "exact algebra",
         std::to_string(complexes) + " corpus complexes with d^2 = 0, " + std::to_string(maps) +
             " with mU d = d mU, slowest " + fixed(worst, 4) + " s");
}

void criterion_morse_vs_cubical(const std::map<std::string, CorpusRun>& corpus) {
    bool ok = true;
    std::string detail;
    for (auto [name, model] : std::vector<std::pair<std::string, std::string>>{
             {"s2_height", "s2"}, {"s1_cos", "s1"}, {"t2_tilted", "t2"}}) {
        const auto& run = corpus.at(name);
        const auto oracle = cubical_homology(cubical_model(model)).nonzero();
        const bool same = run.result.homology.nonzero() == oracle && run.seconds < 30.0;
        bool four = name != "t2_tilted" || run.result.points.size() == 4;
        ok = ok && same && four && run.result.passed;
        detail += name + " " + run.result.homology.str() + " (" + fixed(run.seconds) + " s) ";
    }
    line(2, ok, "Morse homology equals the cubical oracle", detail);
}

double normal_second_derivative(const ScalarFunction& f, const ManifoldSpec& m, const Vec& p) {
    const Vec N = m.outward_normal(p);
    const double h = 1e-3;
    auto at = [&](double t) {
        Vec q = p + t * N;
        if (m.kind == ManifoldKind::Hemisphere) q.normalize();
        return f.eval(q);
    };
    return (at(h) - 2 * at(0) + at(-h)) / (h * h);
}

void criterion_boundary(const std::map<std::string, CorpusRun>& corpus) {
    bool ok = true;
    std::string detail;
    for (auto [name, model] : std::vector<std::pair<std::string, std::string>>{{"interval", "interval"}, {"disk", "disk"}}) {
        const auto& run = corpus.at(name);
        const auto cfg = corpus_config(name);
        const auto oracle = cubical_homology(cubical_model(model)).nonzero();
        bool same = run.result.homology.nonzero() == oracle;
        const ManifoldSpec& m = run.result.manifold;
        ExprFunction f(parse_scalar(cfg.str("field", "witness")), m.ambient_dim);
        int matched = 0, boundary = 0;
        for (const auto& p : run.result.points) {
            if (p.cls == PointClass::Interior) continue;
            ++boundary;
            const double fnn = normal_second_derivative(f, m, p.coords);
            const PointClass expect = fnn > 0 ? PointClass::BoundaryStable : PointClass::BoundaryUnstable;
            matched += expect == p.cls && std::abs(fnn) > 1e-3;
        }
        ok = ok && same && boundary > 0 && matched == boundary;
        detail += name + " " + run.result.homology.str() + ", " + std::to_string(matched) + "/" +
                  std::to_string(boundary) + " boundary classes; ";
    }
    line(3, ok, "boundary complex", detail);
}

void criterion_conley_spheres() {
    const std::vector<std::vector<double>> eig{{1, 1.5, 2}, {-1.5, 1, 2}, {-1, -2, 1.5}};
    bool ok = true;
    std::string detail;
    for (int k = 0; k < 3; ++k) {
        Mat A = Mat::Zero(3, 3);
        for (int i = 0; i < 3; ++i) A(i, i) = eig[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        LambdaField f(3, [A](const Vec& x) { return Vec(A * x); }, [A](const Vec&) { return A; });
        CubicalGrid g({-1, -1, -1}, {1, 1, 1}, {32, 32, 32});
        const std::vector<HomologyDegree> sphere{{k, 1, {}}};
        for (const auto& grid : {g, g.refined()}) {
            auto t0 = Clock::now();
            bool good = false;
            try {
                auto P = build_index_pair(f, grid);
                good = index_pair_violations(P).empty() && relative_cubical_homology(P).nonzero() == sphere;
            } catch (const Error&) {
            }
            const double s = since(t0);
            good = good && s < 60.0 && grid.cells() <= 64u * 64u * 64u;
            ok = ok && good;
            detail += "k=" + std::to_string(k) + "@" + std::to_string(grid.resolution[0]) + "^3 " + (good ? "Z" : "x") +
                      " " + fixed(s) + " s; ";
        }
    }
    line(4, ok, "Conley index of linear flows", detail);
}

void criterion_floer(const std::map<std::string, CorpusRun>& corpus) {
    int passed = 0;
    std::string detail;
    for (const auto& name : {"conley_sink", "conley_saddle", "conley_pair"}) {
        const auto& run = corpus.at(name);
        const bool ok = run.result.passed && run.result.report["stages"]["conley"]["passed"].get<bool>();
        passed += ok;
        detail += std::string(name) + " " + (ok ? "ok" : "mismatch") + "; ";
    }
    line(5, passed >= 3, "Conley index equals Morse homology of isolated sets", detail);
}

std::shared_ptr<LambdaField> diagonal(const std::vector<double>& real, const std::vector<double>& cx) {
    const int a = static_cast<int>(real.size()), b = static_cast<int>(cx.size());
    Mat A = Mat::Zero(a + 2 * b, a + 2 * b);
    for (int i = 0; i < a; ++i) A(i, i) = real[static_cast<std::size_t>(i)];
    for (int j = 0; j < b; ++j) A(a + 2 * j, a + 2 * j) = A(a + 2 * j + 1, a + 2 * j + 1) = cx[static_cast<std::size_t>(j)];
    return std::make_shared<LambdaField>(a + 2 * b, [A](const Vec& x) { return Vec(A * x); },
                                         [A](const Vec&) { return A; });
}

void criterion_index_formula() {
    std::mt19937_64 rng(20261016);
    int agree = 0, total = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const int a = static_cast<int>(rng() % 3), b = 2 + static_cast<int>(rng() % 2);
        std::vector<double> real, cx;
        int ind_q = 0;
        for (int i = 0; i < a; ++i) {
            real.push_back((rng() % 2 ? 1.0 : -1.0) * (1.0 + static_cast<double>(rng() % 3)));
            ind_q += real.back() < 0;
        }
        std::vector<int> pool{-5, -4, -3, -2, -1, 1, 2, 3, 4, 5};
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int j = 0; j < b; ++j) cx.push_back(pool[static_cast<std::size_t>(j)]);
        const int j = static_cast<int>(rng() % static_cast<unsigned>(b));
        std::vector<double> sorted = cx;
        std::sort(sorted.begin(), sorted.end());
        const int ordinal =
            static_cast<int>(std::find(sorted.begin(), sorted.end(), cx[static_cast<std::size_t>(j)]) - sorted.begin()) + 1;
        const int sign = cx[static_cast<std::size_t>(j)] > 0 ? 1 : -1;

        BlowupField bf(diagonal(real, cx), a, b, false);
        ManifoldSpec m = bf.manifold(true);
        Vec y = Vec::Zero(bf.dim());
        y[a + 1 + 2 * j] = 1.0;
        StationaryPoint p = analyze_point(bf, m, y);
        // Direct count of negative real parts of the linearization on the quotient tangent space.
        Eigen::EigenSolver<Mat> es(p.linearization);
        int negative = 0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) negative += es.eigenvalues()[i].real() < 0;
        agree += equivariant_index(ind_q, ordinal, sign) == negative && negative == p.flow_index;
        ++total;
    }
    line(6, agree == total && total >= 10, "equivariant index formula",
         std::to_string(agree) + "/" + std::to_string(total) + " random linear blow-up models agree with the eigen-count");
}

void criterion_tower(const std::map<std::string, CorpusRun>& corpus) {
    bool ok = true;
    std::string detail;
    for (auto [name, n] : std::vector<std::pair<std::string, int>>{{"cp1", 1}, {"cp2", 2}}) {
        const auto& run = corpus.at(name);
        std::vector<HomologyDegree> borel;
        for (int k = 0; k <= n; ++k) borel.push_back({2 * k, 1, {}});
        const auto& nc = run.result.complexes.at(0);
        const int order = nc.u ? tower_order(nc.assembly.complex, *nc.u) : -1;
        const bool good = run.result.homology.nonzero() == borel && order == n + 1;
        ok = ok && good;
        detail += name + " " + run.result.homology.str() + " tower " + std::to_string(order) + "; ";
    }
    line(7, ok, "Z[U] tower on free circle quotients", detail);
}

void criterion_truncation(const CorpusRun& run) {
    const auto& rep = *run.result.truncation;
    std::string detail;
    for (const auto& cr : rep.cutoffs) detail += fixed(cr.lambda, 1) + ":" + cr.homology.str() + " ";
    const bool ok = rep.homology_agrees && rep.pairing_bijective && rep.distances_decrease && rep.counts_agree &&
                    rep.degrees_agree && rep.cutoffs.size() == 3 && run.seconds < 600.0;
    line(8, ok, "truncation invariance",
         detail + "bijective=" + (rep.pairing_bijective ? "1" : "0") + " shrinking=" +
             (rep.distances_decrease ? "1" : "0") + " counts=" + (rep.counts_agree ? "1" : "0") + " (" +
             fixed(run.seconds, 1) + " s)");
}

void criterion_certificate(const CorpusRun& run) {
    const auto& rep = *run.result.truncation;
    bool ok = !rep.cutoffs.empty();
    std::size_t min_samples = SIZE_MAX, trajectories = SIZE_MAX;
    double lo = 1e300, hi = 0.0, elo = 1e300, ehi = 0.0;
    for (const auto& cr : rep.cutoffs) {
        min_samples = std::min(min_samples, cr.certificate.samples);
        ok = ok && cr.certificate.passed && cr.certificate.samples >= 1000 && cr.certificate.min_ratio >= 0.25 &&
             cr.certificate.max_ratio <= 4.0;
        lo = std::min(lo, cr.certificate.min_ratio);
        hi = std::max(hi, cr.certificate.max_ratio);
        std::size_t counted = 0;
        for (const auto& e : cr.energy) {
            if (std::isnan(e.ratio)) continue;
            ++counted;
            ok = ok && e.ratio >= 0.25 && e.ratio <= 4.0;
            elo = std::min(elo, e.ratio);
            ehi = std::max(ehi, e.ratio);
        }
        trajectories = std::min(trajectories, counted);
    }
    ok = ok && trajectories >= 20;
    line(9, ok, "quasi-gradient certificate",
         "dF(v)/|v|^2 in [" + fixed(lo, 3) + ", " + fixed(hi, 3) + "] over >= " + std::to_string(min_samples) +
             " points per cutoff; energy/drop in [" + fixed(elo, 3) + ", " + fixed(ehi, 3) + "] over >= " +
             std::to_string(trajectories) + " trajectories per cutoff");
}

bool same_counts(const CountLedger& a, const CountLedger& b) {
    return a.n == b.n && a.nbar == b.nbar && a.m == b.m && a.mbar == b.mbar;
}

void criterion_robustness(const std::map<std::string, CorpusRun>& corpus) {
    bool ok = true;
    std::string detail;
    for (const auto& name : {"s2_height", "s1_cos", "t2_tilted", "interval", "disk", "cp1", "c2_mixed", "conley_pair"}) {
        Config cfg = corpus_config(name);
        std::ostringstream tol, dens;
        tol << cfg.real("shooting", "tolerance") / 10;
        dens << cfg.integer("shooting", "density") * 2;
        cfg.set("shooting", "tolerance", tol.str());
        cfg.set("shooting", "density", dens.str());
        auto r = run_pipeline(cfg);
        const auto& base = corpus.at(name).result.ledger;
        const bool same = same_counts(base, r.ledger);
        ok = ok && same;
        detail += std::string(name) + (same ? " = " : " != ");
    }
    // Truncated toy model at the largest default cutoff.
    auto fam = TruncationFamily::standard();
    auto c = ToyNonlinearity::standard(fam);
    TruncatedField field(fam, c, 15.5);
    TruncationOptions o;
    auto pts = truncated_points(field, o);
    const ManifoldSpec space = full_space(field.dim(), o.R);
    CountOptions base, fine;
    base.shooting = o.shooting;
    fine.shooting = o.shooting;
    fine.shooting.flow.tolerance /= 10;
    fine.shooting.density *= 2;
    auto pa = pts, pb = pts;
    const bool same = same_counts(count_matrix(field, space, pa, base), count_matrix(field, space, pb, fine));
    ok = ok && same;
    detail += std::string("truncation@15.5") + (same ? " =" : " !=");
    line(10, ok, "counts unchanged under 10x tolerance and 2x shooting density", detail);
}

void criterion_determinism(const std::vector<std::string>& names, const std::map<std::string, CorpusRun>& first) {
    auto second = run_corpus(names);
    std::size_t identical = 0;
    for (const auto& n : names) {
        const auto& a = first.at(n).result;
        const auto& b = second.at(n).result;
        identical += render(seal(a.report)) == render(seal(b.report)) && a.sidecars == b.sidecars;
    }
    line(11, identical == names.size(), "deterministic reports",
         std::to_string(identical) + "/" + std::to_string(names.size()) + " corpus reports byte-identical across runs");
}

}  // namespace

int main() {
    auto t0 = Clock::now();
    const auto names = corpus_names();
    auto corpus = run_corpus(names);
    for (const auto& [n, r] : corpus)
        std::cout << "      corpus " << n << ": " << (r.result.passed ? "passed" : "FAILED") << " in " << fixed(r.seconds)
                  << " s" << std::endl;
    criterion_algebra(corpus);
    criterion_morse_vs_cubical(corpus);
    criterion_boundary(corpus);
    criterion_conley_spheres();
    criterion_floer(corpus);
    criterion_index_formula();
    criterion_tower(corpus);
    criterion_truncation(corpus.at("truncation_toy"));
    criterion_certificate(corpus.at("truncation_toy"));
    criterion_robustness(corpus);
    criterion_determinism(names, corpus);
    std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing, " << fixed(since(t0), 1) << " s total"
              << std::endl;
    return failures ? 1 : 0;
}
