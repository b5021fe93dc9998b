#include <cmath>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "doctest.h"
#include "morsecon/truncation.hpp"

using namespace morsecon;

namespace {

template <class F>
ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Precondition;
}

std::vector<HomologyDegree> groups(std::initializer_list<std::pair<int, std::size_t>> betti) {
    std::vector<HomologyDegree> out;
    for (auto [d, b] : betti) out.push_back({d, b, {}});
    return out;
}

Vec probe(int n, double s) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = s * std::sin(1.3 * i + 0.7) / (1 + 0.2 * i);
    return x;
}

StationaryPoint at(const std::string& id, Vec x) {
    StationaryPoint p;
    p.id = id;
    p.coords = std::move(x);
    return p;
}

}  // namespace

TEST_CASE("standard family") {
    auto f = TruncationFamily::standard();
    CHECK(f.ambient_dim() == 60);
    CHECK(f.eigenvalues[0] == 1.0);
    CHECK(f.eigenvalues[1] == -1.0);
    CHECK(f.eigenvalues[59] == -30.0);
    CHECK(f.cutoffs.size() == 11);
    CHECK(f.window(5.5).size() == 10);
    CHECK(f.window(15.5).size() == 30);
    CHECK(f.negative_dim(5.5) == 5);
    CHECK(f.negative_dim(0.5) == 0);

    TruncationFamily bad = f;
    bad.cutoffs = {2.1};
    bad.half_widths = {0.25};
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::Precondition);
    bad.half_widths = {0.05, 0.05};
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::Precondition);
}

TEST_CASE("smoothing profiles integrate to one") {
    boost::math::quadrature::tanh_sinh<double> ts;
    for (auto kind : {BumpKind::Exponential, BumpKind::Polynomial}) {
        TruncationFamily f = TruncationFamily::standard();
        f.bump = kind;
        CHECK(ts.integrate([&](double t) { return f.beta(t); }, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.beta_integral(0.0) == 0.0);
        CHECK(f.beta_integral(1.0) == 1.0);
        CHECK(f.beta_integral(0.5) == doctest::Approx(0.5).epsilon(1e-12));
        double prev = 0.0;
        for (int i = 1; i < 20; ++i) {
            const double b = f.beta_integral(i / 20.0);
            CHECK(b > prev);
            prev = b;
        }
    }
    auto f = TruncationFamily::standard();
    CHECK(f.cutoff_bump(0, 5.5) == 1.0);
    CHECK(f.cutoff_bump(0, 5.75) == 0.0);
    CHECK(f.cutoff_bump(0, 5.6) < 1.0);
}

TEST_CASE("sharp and smoothed projections") {
    auto f = TruncationFamily::standard();
    const Vec x = probe(60, 1.0);
    CHECK(sharp_projection(f, 31.0, x) == x);
    CHECK(sharp_projection(f, 0.5, x).isZero(0.0));
    const Vec p = sharp_projection(f, 7.5, x);
    CHECK(sharp_projection(f, 7.5, p) == p);
    for (double c : f.cutoffs) CHECK(smoothed_weights(f, c) == sharp_weights(f, c));
    // Modes well inside the window are untouched between cutoffs.
    const Vec w = smoothed_weights(f, 7.9);
    for (int n : f.window(6.8)) CHECK(w[n] == 1.0);
    for (int n = 0; n < 60; ++n) {
        CHECK(w[n] >= 0.0);
        CHECK(w[n] <= 1.0);
    }
    CHECK(smoothed_projection(f, 31.0, x) == x);
    double slope = 0.0;
    for (double l = 5.0; l < 8.0; l += 0.01) {
        const double h = 1e-5;
        slope = std::max(slope, ((smoothed_weights(f, l + h) - smoothed_weights(f, l)) / h).cwiseAbs().maxCoeff());
    }
    CHECK(slope < 100.0);
    CHECK(error_kind([&] { smoothed_weights(f, 0.9); }) == ErrorKind::Precondition);
}

TEST_CASE("toy nonlinearity") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::standard(f);
    CHECK_NOTHROW(c.validate());
    CHECK(c.is_gradient());
    CHECK(c.scale == doctest::Approx(160.0));
    CHECK(c.decay_ratio(10, 2.0, 64) <= 1.0);
    const Vec x = probe(60, 0.8);
    Vec fd(60);
    for (int i = 0; i < 60; ++i) {
        Vec a = x, b = x;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        fd[i] = (c.potential(a) - c.potential(b)) / 2e-6;
    }
    CHECK((fd - c.eval(x)).norm() < 1e-7 * (1 + c.eval(x).norm()));
    Mat J(60, 60);
    for (int i = 0; i < 60; ++i) {
        Vec a = x, b = x;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        J.col(i) = (c.eval(a) - c.eval(b)) / 2e-6;
    }
    CHECK((J - c.jacobian(x)).norm() < 1e-6 * (1 + J.norm()));

    auto broken = c;
    // terms[1] is one ordering of (0, 1, 1).
    REQUIRE(broken.terms[1].k != broken.terms[1].n);
    broken.terms[1].s *= 4;
    CHECK(error_kind([&] { broken.validate(); }) == ErrorKind::Precondition);
    CHECK_FALSE(broken.is_gradient());
    auto lin = c;
    lin.linear = Mat::Zero(60, 60);
    CHECK_FALSE(lin.is_gradient());
    lin.linear = Mat::Zero(3, 3);
    CHECK(error_kind([&] { lin.validate(); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("truncated field") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::standard(f);
    TruncatedField full(f, c, 31.0);
    CHECK(full.dim() == 60);
    const Vec x = probe(60, 0.5);
    Vec ambient = Eigen::Map<const Vec>(f.eigenvalues.data(), 60).cwiseProduct(x) + c.eval(x);
    CHECK((full.eval(x) - ambient).norm() < 1e-12 * ambient.norm());

    TruncatedField t(f, c, 7.5);
    CHECK(t.dim() == 14);
    const Vec y = probe(14, 0.5);
    CHECK(t.restrict(t.embed(y)) == y);
    Vec expect = t.restrict(Eigen::Map<const Vec>(f.eigenvalues.data(), 60).cwiseProduct(t.embed(y)) +
                            c.eval(t.embed(y)));
    CHECK((t.eval(y) - expect).norm() < 1e-12 * expect.norm());
    Mat J(14, 14);
    for (int i = 0; i < 14; ++i) {
        Vec a = y, b = y;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        J.col(i) = (t.eval(a) - t.eval(b)) / 2e-6;
    }
    CHECK((J - t.jacobian(y)).norm() < 1e-6 * J.norm());
}

TEST_CASE("grading and reparametrization") {
    auto f = TruncationFamily::standard();
    StationaryPoint p;
    p.flow_index = 5;
    // dim W^(-lambda, 0) = 3 at lambda = 3.5.
    CHECK(swf_grading(p, f, 3.5, 0) == Rational(2));
    CHECK(swf_grading(p, f, 3.5, Rational(1, 2)) == Rational(1));

    auto r = reparam_lambda(f);
    REQUIRE(r.knots.size() == 31);
    CHECK(r.knots[0] == 0.0);
    CHECK(r.values[0] == 1.0);
    for (std::size_t j = 1; j < r.knots.size(); ++j) {
        CHECK(r.values[j] < r.values[j - 1]);
        CHECK(r.eval(r.knots[j]) == doctest::Approx(r.values[j]));
    }
    // f(|lambda_{n+1}|) = 1 / |lambda_n| + 1 / n.
    CHECK(r.values[10] == doctest::Approx(1.0 / 9 + 1.0 / 9));
    std::vector<double> growth;
    for (std::size_t j = r.knots.size() - 5; j < r.knots.size(); ++j)
        growth.push_back(r.knots[j - 1] * r.knots[j - 1] * r.values[j]);
    for (std::size_t j = 1; j < growth.size(); ++j) CHECK(growth[j] > growth[j - 1]);
    double prev = 1.0;
    for (double mu = 0.05; mu < 40; mu += 0.05) {
        const double v = r.eval(mu);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK(r.eval(60.0) == doctest::Approx(r.values.back() * 30.0 / 60.0));
    CHECK(r.eval(INFINITY) == 0.0);
    CHECK(error_kind([&] { r.eval(0.0); }) == ErrorKind::Precondition);
}

TEST_CASE("pairing") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::zero(f);
    TruncatedField t(f, c, 5.5);
    TruncatedField amb(f, c, 31.0);
    Vec a = Vec::Zero(60), b = Vec::Zero(60);
    a[0] = 1.0;
    b[0] = -1.0;
    std::vector<StationaryPoint> ambient{at("q0", a), at("q1", b)};
    std::vector<Rational> deg{0, 0};
    Vec y = Vec::Zero(10);
    y[0] = 0.9;
    auto table = pair_points(t, {at("p0", y)}, {Rational(0)}, amb, ambient, deg);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].partner == "q0");
    CHECK(table.rows[0].distance == doctest::Approx(0.1));
    CHECK_FALSE(table.bijective);
    y[0] = 0.0;
    CHECK(error_kind([&] { pair_points(t, {at("p0", y)}, {Rational(0)}, amb, ambient, deg); }) ==
          ErrorKind::PairingAmbiguous);
}

TEST_CASE("energy equals the drop of a linear gradient flow") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::zero(f);
    TruncatedField t(f, c, 5.5);
    TruncatedField amb(f, c, 31.0);
    TruncationOptions o;
    o.core_grid = 3;
    o.random_seeds = 8;
    auto pts = truncated_points(t, o);
    REQUIRE(pts.size() == 1);
    pts[0].id = "q0";
    auto ambient = truncated_points(amb, o);
    ambient[0].id = "q0";
    PairingTable table{5.5, {{"q0", "q0", 0.0, 0, 0}}, true};
    QuasiGradient F = build_F_lambda(t, c, f, pts, amb, ambient, table);
    Vec y0 = Vec::Zero(10);
    y0[0] = 0.3;
    y0[4] = -0.2;
    FlowOptions fo;
    fo.max_step = 0.001;
    FlowPath path = integrate_flow(t, full_space(10, 2.5), y0, 2.0, fo);
    auto e = energy_vs_drop(path, t, F);
    CHECK(e.passed);
    CHECK(e.ratio == doctest::Approx(1.0).epsilon(1e-5));
    auto cert = certify(F, t, 2.5, 200, 20);
    CHECK(cert.passed);
    CHECK(cert.min_ratio == doctest::Approx(1.0));
    CHECK(cert.max_ratio == doctest::Approx(1.0));
    FlowPath still{{0.0, 1.0}, {Vec::Zero(10), Vec::Zero(10)}};
    CHECK(energy_vs_drop(still, t, F).passed);
}

TEST_CASE("degenerate linearization") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::zero(f);
    c.linear = Mat::Zero(60, 60);
    c.linear(0, 0) = -1.0;
    TruncatedField t(f, c, 5.5);
    TruncationOptions o;
    o.core_grid = 3;
    o.random_seeds = 4;
    CHECK(error_kind([&] { truncated_points(t, o); }) == ErrorKind::DegenerateSpectrum);
}

TEST_CASE("cutoff invariance of the linear model") {
    auto f = TruncationFamily::standard();
    TruncationOptions o;
    o.core_grid = 5;
    o.random_seeds = 16;
    auto rep = lambda_invariance_experiment(f, ToyNonlinearity::zero(f), {5.5, 6.5, 7.5}, o);
    CHECK(rep.passed);
    for (const auto& cr : rep.cutoffs) CHECK(cr.homology.nonzero() == groups({{0, 1}}));
    CHECK(error_kind([&] { lambda_invariance_experiment(f, ToyNonlinearity::zero(f), {5.5, 6.0, 7.5}, o); }) ==
          ErrorKind::Precondition);
}

TEST_CASE("cutoff invariance of the cubic model") {
    auto f = TruncationFamily::standard();
    auto c = ToyNonlinearity::standard(f);
    auto rep = lambda_invariance_experiment(f, c, {5.5, 6.5, 7.5}, TruncationOptions{});
    for (const auto& s : rep.failures) INFO(s);
    CHECK(rep.passed);
    CHECK(rep.ambient.size() == 4);
    for (const auto& cr : rep.cutoffs) {
        CHECK(cr.points.size() == 4);
        CHECK(cr.homology.nonzero() == groups({{0, 2}}));
        CHECK(cr.ledger.trajectories.size() == 3);
        CHECK(cr.certificate.passed);
    }
    CHECK(rep.distances_decrease);
    CHECK(rep.counts_agree);
}
