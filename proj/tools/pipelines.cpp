#include "pipelines.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>

#include "morsecon/cubical.hpp"

namespace morsecon::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

std::string vec_text(const Vec& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + number(v[i]);
    return s;
}

Json point_json(const StationaryPoint& p) {
    Json j{{"id", p.id}, {"coords", vec_json(p.coords)}, {"flow_index", p.flow_index},
           {"class", to_string(p.cls)}, {"residual", p.residual}};
    Json spec = Json::array();
    for (const auto& z : p.spectrum) spec.push_back(Json::array({z.real(), z.imag()}));
    j["spectrum"] = spec;
    j["newton_steps"] = p.trace.size();
    if (p.reducible) {
        j["reducible"] = {{"base", vec_json(p.base)},
                          {"eigen_ordinal", p.eigen_ordinal},
                          {"eigenvalue", p.eigenvalue}};
    }
    return j;
}

Json counts_json(const std::map<PairKey, int>& counts) {
    Json a = Json::array();
    for (const auto& [k, v] : counts) a.push_back({{"source", k.first}, {"target", k.second}, {"count", v}});
    return a;
}

Json ledger_json(const CountLedger& L) {
    return {{"n", counts_json(L.n)},
            {"nbar", counts_json(L.nbar)},
            {"m", counts_json(L.m)},
            {"mbar", counts_json(L.mbar)},
            {"trajectories", L.trajectories.size()}};
}

Json matrix_json(const IntegerMatrix& M) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < M.rows(); ++i) {
        Json r = Json::array();
        for (std::size_t j = 0; j < M.cols(); ++j) r.push_back(M(i, j).str());
        rows.push_back(r);
    }
    return rows;
}

std::string rational_text(const Rational& q) { return q.str(); }

Json complex_json(const ComplexAssembly& A) {
    Json gens = Json::array();
    for (const auto& g : A.generators) gens.push_back({{"id", g.id}, {"degree", g.degree}, {"class", to_string(g.cls)}});
    Json diffs = Json::object();
    for (const auto& [k, M] : A.complex.differentials) diffs[std::to_string(k)] = matrix_json(M);
    Json prov = Json::array();
    for (const auto& e : A.provenance)
        prov.push_back({{"matrix", e.matrix},
                        {"degree", e.degree},
                        {"row", e.row},
                        {"col", e.col},
                        {"value", e.value},
                        {"terms", e.terms}});
    return {{"generators", gens},
            {"min_degree", A.complex.groups.min_degree},
            {"ranks", A.complex.groups.ranks},
            {"differentials", diffs},
            {"provenance", prov},
            {"offset", rational_text(A.complex.offset)},
            {"window", A.window},
            {"d_squared_zero", verify_complex(A.complex)}};
}

Json homology_json(const HomologyResult& H) {
    Json a = Json::array();
    for (const auto& d : H.nonzero()) {
        Json tors = Json::array();
        for (const auto& t : d.torsion) tors.push_back(t.str());
        a.push_back({{"degree", d.degree}, {"betti", d.betti}, {"torsion", tors}});
    }
    return {{"groups", a}, {"offset", rational_text(H.offset)}, {"text", H.str()}};
}

Json qg_json(const QuasiGradientCertificate& c) {
    return {{"samples", c.samples},
            {"inside", c.inside},
            {"outside", c.outside},
            {"min_outside", c.min_outside},
            {"min_overall", c.min_overall},
            {"max_violation", c.max_violation},
            {"floor", c.floor},
            {"passed", c.passed}};
}

Json equivariant_certificate_json(const EquivariantCertificate& c) {
    return {{"quotient_hyperbolic", c.quotient_hyperbolic},
            {"fixed_hyperbolic", c.fixed_hyperbolic},
            {"self_adjoint", c.self_adjoint},
            {"simple_spectrum", c.simple_spectrum},
            {"nonzero_spectrum", c.nonzero_spectrum},
            {"quasi_gradient", c.quasi_gradient},
            {"failures", c.failures},
            {"passed", c.passed()}};
}

Json graded_map_json(const GradedMap& f) {
    Json blocks = Json::object();
    for (const auto& [k, M] : f.blocks) blocks[std::to_string(k)] = matrix_json(M);
    return {{"degree_shift", f.degree_shift}, {"blocks", blocks}};
}

class Checks {
public:
    void add(const std::string& name, const std::string& stage, bool passed, const std::string& detail = {}) {
        list_.push_back({{"name", name}, {"stage", stage}, {"passed", passed}, {"detail", detail}});
        ok_ = ok_ && passed;
    }
    const Json& json() const { return list_; }
    bool ok() const { return ok_; }

private:
    Json list_ = Json::array();
    bool ok_ = true;
};

struct Context {
    const Config& cfg;
    const RunOptions& opt;
    RunResult& out;
    Json& stages;
    Checks& checks;

    template <class F>
    auto timed(const std::string& stage, F&& f) {
        auto t0 = Clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            out.timings.emplace_back(stage, seconds_since(t0));
        } else {
            auto r = f();
            out.timings.emplace_back(stage, seconds_since(t0));
            return r;
        }
    }
};

ManifoldSpec build_manifold(const Config& cfg) {
    const std::string kind = cfg.str("manifold", "kind");
    auto dim = [&] {
        const long long d = cfg.integer("manifold", "dim");
        if (d < 1 || d > 64) cfg.reject("manifold", "dim", "must be between 1 and 64");
        return static_cast<int>(d);
    };
    ManifoldSpec m;
    if (kind == "sphere") {
        m = unit_sphere(dim());
    } else if (kind == "torus") {
        m = torus(dim());
    } else if (kind == "ball") {
        m = unit_ball(dim());
    } else if (kind == "hemisphere") {
        m = hemisphere(dim());
    } else if (kind == "plane") {
        m = full_space(dim(), cfg.real("manifold", "window"));
    } else if (kind == "box") {
        auto lo = cfg.reals("manifold", "lower"), hi = cfg.reals("manifold", "upper");
        if (lo.empty() || lo.size() != hi.size()) cfg.reject("manifold", "upper", "lower and upper must have one entry per axis");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] < hi[i])) cfg.reject("manifold", "upper", "every upper bound must exceed its lower bound");
        m = box(lo, hi);
    } else {
        cfg.reject("manifold", "kind", "unknown kind '" + kind + "' (sphere, torus, ball, hemisphere, plane, box)");
    }
    const long long c = cfg.integer("manifold", "complex_dims");
    if (c < 0 || 2 * c > m.ambient_dim) cfg.reject("manifold", "complex_dims", "does not fit the ambient dimension");
    if (c > 0) {
        m.action.complex_dims = static_cast<int>(c);
        m.action.real_dims = m.ambient_dim - 2 * static_cast<int>(c);
        m.action.weights.assign(static_cast<std::size_t>(c), 1);
    }
    m.quotient = cfg.boolean("manifold", "quotient");
    if (m.quotient && c == 0) cfg.reject("manifold", "quotient", "needs complex_dims > 0");
    return m;
}

FieldExpr build_field(const Config& cfg, const ManifoldSpec& m) {
    try {
        return parse_field(cfg.str("field", "vector"), m);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        cfg.reject("field", "vector", e.what());
    }
}

std::unique_ptr<ExprFunction> build_witness(const Config& cfg, int ambient) {
    if (!cfg.has("field", "witness")) return nullptr;
    try {
        Expr e = parse_scalar(cfg.str("field", "witness"));
        if (e.arity() > ambient)
            cfg.reject("field", "witness", "uses x" + std::to_string(e.arity()) + " beyond dimension " +
                                               std::to_string(ambient));
        return std::make_unique<ExprFunction>(e, ambient);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        cfg.reject("field", "witness", e.what());
    }
}

StationaryOptions stationary_options(const Config& cfg, std::uint64_t seed) {
    StationaryOptions o;
    o.seeds = cfg.uinteger("stationary", "seeds");
    o.residual_tol = cfg.real("stationary", "residual_tol");
    o.dedupe_tol = cfg.real("stationary", "dedupe_tol");
    o.tol_hyp = cfg.real("stationary", "tol_hyp");
    o.max_iter = static_cast<int>(cfg.integer("stationary", "max_iter"));
    o.seed_offset = seed;
    if (o.seeds == 0) cfg.reject("stationary", "seeds", "must be positive");
    return o;
}

ShootingOptions shooting_options(const Config& cfg) {
    ShootingOptions o;
    o.r_shoot = cfg.real("shooting", "r_shoot");
    o.capture_radius = cfg.real("shooting", "capture_radius");
    o.end_radius = cfg.real("shooting", "end_radius");
    o.density = static_cast<int>(cfg.integer("shooting", "density"));
    o.max_scan_dim = static_cast<int>(cfg.integer("shooting", "max_scan_dim"));
    o.t_max = cfg.real("shooting", "t_max");
    o.flow.tolerance = cfg.real("shooting", "tolerance");
    o.flow.max_step = cfg.real("shooting", "max_step");
    if (o.density < 4) cfg.reject("shooting", "density", "must be at least 4");
    if (o.max_scan_dim < 1) cfg.reject("shooting", "max_scan_dim", "must be positive");
    if (!(o.flow.tolerance > 0)) cfg.reject("shooting", "tolerance", "must be positive");
    if (!(o.r_shoot > 0)) cfg.reject("shooting", "r_shoot", "must be positive");
    return o;
}

CertificateOptions certificate_options(const Config& cfg) {
    CertificateOptions o;
    o.ball_radius = cfg.real("certificate", "ball_radius");
    o.floor = cfg.real("certificate", "floor");
    return o;
}

void locate(Context& c, const VectorField& field, const ManifoldSpec& m) {
    auto so = stationary_options(c.cfg, c.opt.seed);
    auto sr = c.timed("stationary", [&] { return find_stationary_points(field, m, so); });
    for (std::size_t i = 0; i < sr.points.size(); ++i) sr.points[i].id = "p" + std::to_string(i);
    Json pts = Json::array();
    for (const auto& p : sr.points) pts.push_back(point_json(p));
    c.stages["stationary"] = {{"points", pts}, {"newton_failures", sr.newton_failures}, {"seeds", so.seeds}};
    c.out.points = std::move(sr.points);
    c.out.manifold = m;
}

void count(Context& c, const VectorField& field, const ManifoldSpec& m, const CountOptions& co) {
    c.out.ledger = c.timed("counts", [&] { return count_matrix(field, m, c.out.points, co); });
    c.stages["counts"] = ledger_json(c.out.ledger);
}

void record_complex(Context& c, const std::string& name, ComplexAssembly A) {
    c.timed("homology", [&] { c.out.homology = homology(A.complex); });
    Json cj = complex_json(A);
    c.checks.add("d^2 = 0", "complex", cj["d_squared_zero"].get<bool>());
    c.stages["complex"] = cj;
    c.stages["homology"] = homology_json(c.out.homology);
    c.out.complexes.push_back({name, std::move(A), std::nullopt});
}

void check_expectation(Context& c, const HomologyResult& H, const std::string& stage) {
    if (!c.cfg.has("expect", "betti")) return;
    const auto betti = c.cfg.integers("expect", "betti");
    const int lo = static_cast<int>(c.cfg.integer("expect", "min_degree"));
    std::vector<HomologyDegree> want;
    for (std::size_t i = 0; i < betti.size(); ++i)
        if (betti[i] != 0) want.push_back({lo + static_cast<int>(i), static_cast<std::size_t>(betti[i]), {}});
    c.checks.add("expected homology", stage, H.nonzero() == want, H.str());
}

void witness_check(Context& c, const VectorField& field, const ManifoldSpec& m,
                   std::optional<QuasiGradientCertificate>& cert) {
    auto w = build_witness(c.cfg, m.ambient_dim);
    if (!w) return;
    const auto samples = c.cfg.uinteger("certificate", "samples");
    cert = c.timed("certificate", [&] {
        return quasi_gradient_certificate(field, *w, m, c.out.points, samples, certificate_options(c.cfg));
    });
    c.stages["certificate"] = qg_json(*cert);
    c.checks.add("witness quasi-gradient certificate", "certificate", cert->passed);
}

void closed_pipeline(Context& c, bool with_boundary) {
    ManifoldSpec m = build_manifold(c.cfg);
    if (!with_boundary && m.has_boundary())
        c.cfg.reject("manifold", "kind", "the morse pipeline needs a closed manifold; use the boundary pipeline");
    FieldExpr f = build_field(c.cfg, m);
    locate(c, f, m);
    std::optional<QuasiGradientCertificate> cert;
    witness_check(c, f, m, cert);
    CountOptions co;
    co.shooting = shooting_options(c.cfg);
    count(c, f, m, co);
    auto A = c.timed("complex", [&] {
        return with_boundary ? build_boundary_complex(c.out.points, c.out.ledger)
                             : build_morse_complex(c.out.points, c.out.ledger);
    });
    record_complex(c, with_boundary ? "boundary" : "morse", std::move(A));
    check_expectation(c, c.out.homology, "homology");
}

std::shared_ptr<LambdaField> diagonal_linear(const std::vector<double>& real, const std::vector<double>& cx) {
    const int a = static_cast<int>(real.size()), b = static_cast<int>(cx.size());
    Mat A = Mat::Zero(a + 2 * b, a + 2 * b);
    for (int i = 0; i < a; ++i) A(i, i) = real[static_cast<std::size_t>(i)];
    for (int j = 0; j < b; ++j) A(a + 2 * j, a + 2 * j) = A(a + 2 * j + 1, a + 2 * j + 1) = cx[static_cast<std::size_t>(j)];
    return std::make_shared<LambdaField>(a + 2 * b, [A](const Vec& x) { return Vec(A * x); },
                                         [A](const Vec&) { return A; });
}

void u_map_stage(Context& c, NamedComplex& nc) {
    auto U = c.timed("u_map", [&] { return build_u_map(nc.assembly, c.out.ledger); });
    const bool commutes = is_chain_map(nc.assembly.complex, U);
    const int order = tower_order(nc.assembly.complex, U);
    Json uj = graded_map_json(U);
    uj["chain_map"] = commutes;
    uj["tower_order"] = order;
    c.stages["u_map"] = uj;
    c.checks.add("U commutes with d", "u_map", commutes);
    if (c.cfg.has("expect", "tower_order"))
        c.checks.add("expected tower order", "u_map", order == c.cfg.integer("expect", "tower_order"),
                     std::to_string(order));
    nc.u = std::move(U);
}

void equivariant_pipeline(Context& c) {
    const std::string model = c.cfg.str("equivariant", "model");
    const bool cut = c.cfg.boolean("cut", "enabled");
    CountOptions co;
    co.shooting = shooting_options(c.cfg);
    if (model == "free") {
        ManifoldSpec m = build_manifold(c.cfg);
        if (!m.quotient) c.cfg.reject("manifold", "quotient", "the free model works on the quotient; set quotient = true");
        FieldExpr f = build_field(c.cfg, m);
        locate(c, f, m);
        std::optional<QuasiGradientCertificate> witness;
        witness_check(c, f, m, witness);
        auto cert = free_action_certificate(m, c.out.points, witness ? &*witness : nullptr,
                                            c.cfg.real("stationary", "tol_hyp"));
        c.stages["equivariant_certificate"] = equivariant_certificate_json(cert);
        c.checks.add("equivariant certificate", "equivariant_certificate", cert.passed());
        co.cut_counts = cut;
        co.cut = CutSpec::generic(m.action.complex_dims, c.cfg.real("cut", "phase"));
        count(c, f, m, co);
        EquivariantInput in{nullptr, c.out.points, c.out.ledger, &cert};
        auto A = c.timed("complex", [&] { return build_equivariant_complex(in); });
        record_complex(c, "equivariant", std::move(A));
        if (cut) u_map_stage(c, c.out.complexes.back());
        check_expectation(c, c.out.homology, "homology");
        return;
    }
    if (model != "blowup") c.cfg.reject("equivariant", "model", "unknown model '" + model + "' (free, blowup)");
    if (c.cfg.has("manifold", "kind")) c.cfg.reject("manifold", "kind", "the blowup model builds its own manifold");
    const auto re = c.cfg.reals("equivariant", "real_eigenvalues");
    const auto ce = c.cfg.reals("equivariant", "complex_eigenvalues");
    if (ce.empty()) c.cfg.reject("equivariant", "complex_eigenvalues", "needs at least one entry");
    for (double e : re)
        if (e == 0) c.cfg.reject("equivariant", "real_eigenvalues", "eigenvalues must be nonzero");
    for (double e : ce)
        if (e == 0) c.cfg.reject("equivariant", "complex_eigenvalues", "eigenvalues must be nonzero");
    BlowupField bf(diagonal_linear(re, ce), static_cast<int>(re.size()), static_cast<int>(ce.size()), false);
    ManifoldSpec m = bf.manifold(true);
    locate(c, bf, m);
    annotate_reducible(bf, c.out.points);
    Json pts = Json::array();
    bool formula = true;
    for (const auto& p : c.out.points) {
        pts.push_back(point_json(p));
        if (!p.reducible) continue;
        const int q = fixed_locus_index(bf, p);
        formula = formula && equivariant_index(q, p.eigen_ordinal, p.eigenvalue > 0 ? 1 : -1) == p.flow_index;
    }
    c.stages["stationary"]["points"] = pts;
    c.checks.add("equivariant index formula", "stationary", formula);
    std::optional<QuasiGradientCertificate> witness;
    witness_check(c, bf, m, witness);
    auto cert = equivariant_field_certificate(bf, {Vec::Zero(static_cast<Eigen::Index>(re.size()))}, c.out.points,
                                              witness ? &*witness : nullptr);
    c.stages["equivariant_certificate"] = equivariant_certificate_json(cert);
    c.checks.add("equivariant certificate", "equivariant_certificate", cert.passed());
    co.cut_counts = cut;
    co.cut = CutSpec::generic(bf.complex_dims(), c.cfg.real("cut", "phase"));
    count(c, bf, m, co);
    EquivariantInput in{&bf, c.out.points, c.out.ledger, &cert};
    auto A = c.timed("complex", [&] { return build_equivariant_complex(in); });
    record_complex(c, "equivariant", std::move(A));
    if (cut) u_map_stage(c, c.out.complexes.back());
    check_expectation(c, c.out.homology, "homology");
}

void conley_pipeline(Context& c) {
    ManifoldSpec m = build_manifold(c.cfg);
    if (m.kind != ManifoldKind::FullSpace) c.cfg.reject("manifold", "kind", "the conley pipeline works in the plane or space");
    FieldExpr f = build_field(c.cfg, m);
    const auto lo = c.cfg.reals("conley", "lower"), hi = c.cfg.reals("conley", "upper");
    const auto res = c.cfg.integers("conley", "resolution");
    const auto n = static_cast<std::size_t>(m.ambient_dim);
    if (lo.size() != n || hi.size() != n || res.size() != n)
        c.cfg.reject("conley", "resolution", "lower, upper and resolution need one entry per axis");
    if (n > 3) c.cfg.reject("manifold", "dim", "cubical grids support dimensions 1 to 3");
    std::vector<int> r;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(lo[i] < hi[i])) c.cfg.reject("conley", "upper", "every upper bound must exceed its lower bound");
        if (res[i] < 2 || res[i] > 512) c.cfg.reject("conley", "resolution", "entries must be between 2 and 512");
        r.push_back(static_cast<int>(res[i]));
    }
    CubicalGrid grid(lo, hi, r);
    locate(c, f, m);
    CountOptions co;
    co.shooting = shooting_options(c.cfg);
    count(c, f, m, co);
    auto A = c.timed("complex", [&] { return build_morse_complex(c.out.points, c.out.ledger); });
    auto inside = [lo, hi](const Vec& x) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x[i] <= lo[static_cast<std::size_t>(i)] || x[i] >= hi[static_cast<std::size_t>(i)]) return false;
        return true;
    };
    auto R = restrict_to_isolated_set(A, inside);
    EnclosureOptions eo;
    eo.time_scale = c.cfg.real("conley", "time_scale");
    eo.padding_factor = c.cfg.real("conley", "padding_factor");
    auto cmp = c.timed("conley", [&] { return conley_vs_morse(f, grid, R, eo); });
    c.stages["conley"] = {{"cells", grid.cells()},
                          {"morse", homology_json(cmp.morse)},
                          {"conley", homology_json(cmp.conley)},
                          {"detail", cmp.detail},
                          {"passed", cmp.passed}};
    c.checks.add("conley index matches morse homology", "conley", cmp.passed, cmp.detail);
    record_complex(c, "isolated", std::move(R));
    check_expectation(c, c.out.homology, "homology");
}

void truncation_pipeline(Context& c) {
    const Config& cfg = c.cfg;
    const auto modes = cfg.integer("truncation", "modes"), first = cfg.integer("truncation", "first"),
               last = cfg.integer("truncation", "last");
    if (modes < 4 || modes > 400) cfg.reject("truncation", "modes", "must be between 4 and 400");
    if (first < 1 || last < first || 2 * (last + 1) > modes)
        cfg.reject("truncation", "last", "cutoffs must satisfy 1 <= first <= last and fit inside the modes");
    TruncationFamily fam = TruncationFamily::standard(static_cast<int>(modes), static_cast<int>(first), static_cast<int>(last));
    const std::string bump = cfg.str("truncation", "bump");
    if (bump == "exponential") fam.bump = BumpKind::Exponential;
    else if (bump == "polynomial") fam.bump = BumpKind::Polynomial;
    else cfg.reject("truncation", "bump", "unknown profile '" + bump + "' (exponential, polynomial)");
    const auto cutoffs = cfg.reals("truncation", "cutoffs");
    for (double l : cutoffs)
        if (std::find(fam.cutoffs.begin(), fam.cutoffs.end(), l) == fam.cutoffs.end())
            cfg.reject("truncation", "cutoffs", "every cutoff must be one of first + 1/2 .. last + 1/2");
    const std::string model = cfg.str("truncation", "model");
    ToyNonlinearity nl;
    if (model == "standard") nl = ToyNonlinearity::standard(fam);
    else if (model == "zero") nl = ToyNonlinearity::zero(fam);
    else cfg.reject("truncation", "model", "unknown model '" + model + "' (standard, zero)");

    TruncationOptions o;
    o.R = cfg.real("truncation", "radius");
    o.window = static_cast<int>(cfg.integer("truncation", "window"));
    o.n_shift = Rational(cfg.integer("truncation", "n_shift"));
    o.random_seeds = cfg.uinteger("truncation", "random_seeds");
    o.certificate_samples = cfg.uinteger("truncation", "certificate_samples");
    o.neighborhood_samples = cfg.uinteger("truncation", "neighborhood_samples");
    o.energy_trajectories = cfg.uinteger("truncation", "energy_trajectories");
    o.confinement_samples = cfg.uinteger("truncation", "confinement_samples");
    o.shooting = shooting_options(cfg);
    if (!(o.R > 0)) cfg.reject("truncation", "radius", "must be positive");

    auto rep = c.timed("truncation", [&] { return lambda_invariance_experiment(fam, nl, cutoffs, o); });
    for (const auto& cr : rep.cutoffs) c.out.timings.emplace_back("cutoff " + number(cr.lambda), cr.seconds);

    auto brief = [](const StationaryPoint& p, const Rational& deg) {
        return Json{{"id", p.id}, {"coords", vec_json(p.coords)}, {"flow_index", p.flow_index}, {"degree", deg.str()}};
    };
    Json ambient = Json::array();
    for (std::size_t i = 0; i < rep.ambient.size(); ++i) ambient.push_back(brief(rep.ambient[i], rep.ambient_degrees[i]));
    Json cuts = Json::array();
    CsvTable table({"lambda", "point", "partner", "index", "degree", "partner_degree", "distance"});
    for (const auto& cr : rep.cutoffs) {
        Json pts = Json::array();
        for (std::size_t i = 0; i < cr.points.size(); ++i) pts.push_back(brief(cr.points[i], cr.degrees[i]));
        Json rows = Json::array();
        for (const auto& r : cr.pairing.rows) {
            rows.push_back({{"point", r.point},
                            {"partner", r.partner},
                            {"distance", r.distance},
                            {"degree", r.degree.str()},
                            {"partner_degree", r.partner_degree.str()}});
            int index = 0;
            for (const auto& p : cr.points)
                if (p.id == r.point || p.id == r.partner) index = p.flow_index;
            table.add({number(cr.lambda), r.point, r.partner, std::to_string(index), r.degree.str(),
                       r.partner_degree.str(), number(r.distance)});
        }
        Json energy = Json::array();
        for (const auto& e : cr.energy)
            energy.push_back({{"energy", e.energy}, {"drop", e.drop}, {"ratio", e.ratio}, {"passed", e.passed}});
        cuts.push_back({{"lambda", cr.lambda},
                        {"dim", cr.dim},
                        {"negative_dim", cr.negative_dim},
                        {"epsilon", cr.epsilon},
                        {"points", pts},
                        {"counts", ledger_json(cr.ledger)},
                        {"homology", homology_json(cr.homology)},
                        {"window_homology", homology_json(HomologyResult{windowed(cr.homology, o.window), cr.homology.offset})},
                        {"pairing", {{"bijective", cr.pairing.bijective}, {"rows", rows}}},
                        {"confinement",
                         {{"sampled", cr.confinement.sampled},
                          {"bounded", cr.confinement.bounded},
                          {"max_norm", cr.confinement.max_norm},
                          {"passed", cr.confinement.passed}}},
                        {"certificate",
                         {{"samples", cr.certificate.samples},
                          {"min_ratio", cr.certificate.min_ratio},
                          {"max_ratio", cr.certificate.max_ratio},
                          {"min_outside", cr.certificate.min_outside},
                          {"passed", cr.certificate.passed}}},
                        {"energy", energy}});
    }
    c.stages["truncation"] = {{"ambient", ambient}, {"cutoffs", cuts}, {"failures", rep.failures}};
    c.checks.add("windowed homology agrees across cutoffs", "truncation", rep.homology_agrees);
    c.checks.add("stationary pairing is bijective", "truncation", rep.pairing_bijective);
    c.checks.add("pairing distances decrease", "truncation", rep.distances_decrease);
    c.checks.add("paired degrees agree", "truncation", rep.degrees_agree);
    c.checks.add("index-gap-one counts agree at the two largest cutoffs", "truncation", rep.counts_agree);
    c.checks.add("quasi-gradient certificates", "truncation", rep.certificates_pass);
    c.checks.add("energy equals drop", "truncation", rep.energy_pass);
    c.checks.add("confinement", "truncation", rep.confinement_pass);
    if (!rep.cutoffs.empty()) {
        c.out.homology = rep.cutoffs.back().homology;
        check_expectation(c, HomologyResult{windowed(c.out.homology, o.window), c.out.homology.offset}, "truncation");
    }
    if (cfg.boolean("output", "csv")) c.out.sidecars.emplace_back("truncation.csv", table.str());
    c.out.truncation = std::move(rep);
}

void add_common_sidecars(RunResult& r) {
    CsvTable pts({"id", "flow_index", "class", "residual", "coords"});
    for (const auto& p : r.points)
        pts.add({p.id, std::to_string(p.flow_index), to_string(p.cls), number(p.residual), vec_text(p.coords)});
    CsvTable traj({"source", "target", "boundary", "sign", "shooting", "capture_time", "cut_time"});
    for (const auto& t : r.ledger.trajectories)
        traj.add({t.source, t.target, t.boundary ? "1" : "0", std::to_string(t.sign), vec_text(t.shooting),
                  number(t.capture_time), number(t.cut_time)});
    CsvTable hom({"degree", "betti", "torsion"});
    for (const auto& d : r.homology.nonzero()) {
        std::string tors;
        for (std::size_t i = 0; i < d.torsion.size(); ++i) tors += (i ? " " : "") + d.torsion[i].str();
        hom.add({std::to_string(d.degree), std::to_string(d.betti), tors});
    }
    if (!r.truncation) {
        r.sidecars.emplace_back("points.csv", pts.str());
        r.sidecars.emplace_back("trajectories.csv", traj.str());
    }
    r.sidecars.emplace_back("homology.csv", hom.str());
}

}  // namespace

RunResult run_pipeline(const Config& config, const RunOptions& options) {
    RunResult out;
    const std::string p = config.pipeline();
    Json stages = Json::object();
    Checks checks;
    Context c{config, options, out, stages, checks};
    Json& rep = out.report;
    rep["schema"] = kSchema;
    rep["pipeline"] = p;
    rep["name"] = config.str("run", "name");
    rep["seed"] = options.seed;
    rep["config"] = {{"echo", config.echo()}};
    rep["conventions"] = {{"flow", "reverse flow of the configured field"},
                          {"flow_index", "eigenvalues of dv with negative real part"},
                          {"cone_source_shift", 0}};
    try {
        if (p == "morse") closed_pipeline(c, false);
        else if (p == "boundary") closed_pipeline(c, true);
        else if (p == "equivariant") equivariant_pipeline(c);
        else if (p == "conley") conley_pipeline(c);
        else truncation_pipeline(c);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        checks.add("pipeline completed", "run", false, e.what());
        rep["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    }
    rep["stages"] = stages;
    rep["checks"] = checks.json();
    rep["passed"] = checks.ok();
    out.passed = checks.ok();
    if (config.boolean("output", "csv")) add_common_sidecars(out);
    return out;
}

void write_outputs(const RunResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(fs::path(dir) / name, std::ios::binary);
        f << text;
        if (!f) throw Error(ErrorKind::ConfigError, "cannot write " + (fs::path(dir) / name).string());
    };
    write("report.json", render(seal(result.report)));
    Json t = Json::array();
    for (const auto& [stage, s] : result.timings) t.push_back({{"stage", stage}, {"seconds", s}});
    write("timings.json", render(Json{{"timings", t}}));
    for (const auto& [name, text] : result.sidecars) write(name, text);
}

}  // namespace morsecon::cli
