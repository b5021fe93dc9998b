#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "doctest.h"
#include "morsecon/blowup.hpp"
#include "morsecon/flow_model.hpp"

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

Vec vec(std::initializer_list<double> v) {
    Vec x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

// Complex-diagonal linear field on C^b in real pairs.
std::shared_ptr<LambdaField> diagonal_field(std::vector<double> mu) {
    const int b = static_cast<int>(mu.size());
    Mat A = Mat::Zero(2 * b, 2 * b);
    for (int j = 0; j < b; ++j) A(2 * j, 2 * j) = A(2 * j + 1, 2 * j + 1) = mu[j];
    return std::make_shared<LambdaField>(2 * b, [A](const Vec& x) { return Vec(A * x); },
                                         [A](const Vec&) { return A; });
}

}  // namespace

TEST_CASE("parse_field evaluates and reports errors") {
    auto m = full_space(2);
    FieldExpr f = parse_field("(-2*x1, -2*x2)", m);
    CHECK(f.eval(vec({1, 0})).isApprox(vec({-2, 0})));
    CHECK(error_kind([&] { parse_field("(x1, ", m); }) == ErrorKind::ParseError);
    try {
        parse_field("(x1, ", m);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
    }
    CHECK(error_kind([&] { parse_field("(x1, x2, x1)", m); }) == ErrorKind::ArityError);
    CHECK(error_kind([&] { parse_field("(x1, x3)", m); }) == ErrorKind::ArityError);
    CHECK(error_kind([&] { parse_field("(x1^1.5, x2)", m); }) == ErrorKind::ParseError);
}

TEST_CASE("sphere height gradient is tangential") {
    auto m = unit_sphere(3);
    FieldExpr f = parse_field("(-x1*x3, -x2*x3, 1-x3^2)", m);
    for (std::uint64_t i = 1; i < 200; ++i) {
        Vec x = m.sample(halton(i, 3));
        // Symbolic projection of grad x3 = e3 - x3 x.
        Vec proj = Vec::Unit(3, 2) - x[2] * x;
        CHECK(std::abs(x.dot(f.eval(x))) < 1e-12);
        CHECK((f.eval(x) - proj).norm() < 1e-12);
    }
}

TEST_CASE("symbolic linearization matches finite differences") {
    auto m = full_space(3);
    FieldExpr f = parse_field("(sin(x1)*x2^2 - exp(x3), x1*x2*x3 + cos(x2), (x1 - x3)^3 / (2 + x2^2))", m);
    LambdaField fd(3, [&](const Vec& x) { return f.eval(x); });
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int k = 0; k < 50; ++k) {
        Vec x = vec({u(rng), u(rng), u(rng)});
        Mat J = f.jacobian(x), Jfd = fd.jacobian(x);
        CHECK((J - Jfd).norm() <= 1e-6 * std::max(1.0, J.norm()));
    }
}

TEST_CASE("stationary points of the sphere height gradient") {
    auto m = unit_sphere(3);
    FieldExpr f = parse_field("(-x1*x3, -x2*x3, 1-x3^2)", m);
    StationaryOptions opt;
    opt.seeds = 400;
    auto res = find_stationary_points(f, m, opt);
    // Oracle: dense latitude/longitude scan for |v| < 1e-4, then Newton.
    std::vector<Vec> oracle;
    for (int i = 0; i <= 200; ++i)
        for (int j = 0; j < 400; ++j) {
            double th = std::numbers::pi * i / 200.0, ph = 2 * std::numbers::pi * j / 400.0;
            Vec x = vec({std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)});
            if (f.eval(x).norm() >= 1e-4) continue;
            Vec y = newton_point(f, m, x).coords;
            bool dup = false;
            for (auto& o : oracle) dup = dup || (o - y).norm() < 1e-6;
            if (!dup) oracle.push_back(y);
        }
    REQUIRE(oracle.size() == 2);
    REQUIRE(res.points.size() == 2);
    for (const auto& p : res.points) {
        CHECK(p.residual <= 1e-10);
        bool match = false;
        for (auto& o : oracle) match = match || (o - p.coords).norm() < 1e-6;
        CHECK(match);
        // Tangential Hessian of x3 at the poles is -x3 * I.
        int expected = p.coords[2] > 0 ? 2 : 0;
        CHECK(flow_index(p) == expected);
        CHECK(p.unstable.cols() == expected);
        CHECK(p.cls == PointClass::Interior);
    }
}

TEST_CASE("linear fields and index conventions") {
    auto m = full_space(2);
    FieldExpr id = parse_field("(x1, x2)", m);
    StationaryOptions opt;
    opt.seeds = 50;
    auto res = find_stationary_points(id, m, opt);
    REQUIRE(res.points.size() == 1);
    CHECK(res.points[0].coords.norm() < 1e-12);
    CHECK(flow_index(res.points[0]) == 0);

    FieldExpr spiral = parse_field("(x1 - x2, x1 + x2)", m);
    auto p = analyze_point(spiral, m, Vec::Zero(2));
    CHECK(flow_index(p) == 0);
    CHECK(std::abs(p.spectrum[0] - cplx(1, -1)) < 1e-12);

    FieldExpr sink = parse_field("(-x1 - x2, x1 - x2)", m);
    auto q = analyze_point(sink, m, Vec::Zero(2));
    CHECK(flow_index(q) == 2);
    // The unstable basis is orthonormal and the projection is the identity on it.
    CHECK((q.unstable.transpose() * q.unstable - Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK((q.unstable_projection * q.unstable - Mat::Identity(2, 2)).norm() < 1e-12);

    FieldExpr saddle = parse_field("(x1, -3*x2 + x1)", m);
    auto s = analyze_point(saddle, m, Vec::Zero(2));
    CHECK(flow_index(s) == 1);
    // Spectral projections annihilate the complementary space.
    CHECK((s.unstable_projection * s.stable).norm() < 1e-12);
    CHECK((s.stable_projection * s.unstable).norm() < 1e-12);

    FieldExpr degenerate = parse_field("(x1^3, x2)", m);
    CHECK(error_kind([&] { analyze_point(degenerate, m, Vec::Zero(2)); }) == ErrorKind::DegenerateSpectrum);
}

TEST_CASE("gradient index equals count of negative Hessian eigenvalues") {
    auto m = full_space(3);
    // f = x1^2/2 - x2^2 + 3 x3^2/2 + x1 x3 / 2 ; v = grad f.
    FieldExpr f = parse_field("(x1 + x3/2, -2*x2, 3*x3 + x1/2)", m);
    auto p = analyze_point(f, m, Vec::Zero(3));
    Mat H(3, 3);
    H << 1, 0, 0.5, 0, -2, 0, 0.5, 0, 3;
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    int neg = 0;
    for (int i = 0; i < 3; ++i) neg += es.eigenvalues()[i] < 0;
    CHECK(flow_index(p) == neg);
}

TEST_CASE("zeros of a circle field match bisection") {
    // v = sin(3 theta) d/dtheta on the unit circle, written in the embedding.
    auto m = torus(1);
    FieldExpr f = parse_field("(-(3*x2 - 4*x2^3)*x2, (3*x2 - 4*x2^3)*x1)", m);
    StationaryOptions opt;
    opt.seeds = 300;
    auto res = find_stationary_points(f, m, opt);
    std::vector<double> roots;
    auto g = [](double t) { return std::sin(3 * t); };
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        double a = 2 * std::numbers::pi * (i + 0.5) / n, b = 2 * std::numbers::pi * (i + 1.5) / n;
        if (g(a) * g(b) > 0) continue;
        for (int k = 0; k < 80; ++k) {
            double c = 0.5 * (a + b);
            (g(a) * g(c) <= 0 ? b : a) = c;
        }
        roots.push_back(0.5 * (a + b));
    }
    REQUIRE(roots.size() == 6);
    REQUIRE(res.points.size() == 6);
    for (double t : roots) {
        Vec x = vec({std::cos(t), std::sin(t)});
        bool match = false;
        for (const auto& p : res.points)
            if ((p.coords - x).norm() < 1e-8) {
                match = true;
                // d/dtheta sin(3 theta) = 3 cos(3 theta); index counts negative slope.
                CHECK(flow_index(p) == (std::cos(3 * t) < 0 ? 1 : 0));
            }
        CHECK(match);
    }
}

TEST_CASE("boundary classification on an interval") {
    auto m = box({0.0}, {1.0});
    // v = f' for f(t) = -cos(pi t).
    FieldExpr f = parse_field("pi*sin(pi*x1)", m);
    auto p0 = analyze_point(f, m, vec({0.0}));
    auto p1 = analyze_point(f, m, vec({1.0}));
    // Oracle: f''(0) = pi^2 > 0, f''(1) = -pi^2 < 0; outward normal eigenvalue mu = f''.
    CHECK(p0.cls == PointClass::BoundaryStable);
    CHECK(p1.cls == PointClass::BoundaryUnstable);
    CHECK(classify_boundary(p0, m) == PointClass::BoundaryStable);
    CHECK(flow_index(p0) == 0);
    CHECK(flow_index(p1) == 1);

    auto m2 = box({-1.0}, {1.0});
    FieldExpr h = parse_field("x1", m2);
    auto q = analyze_point(h, m2, vec({0.0}));
    CHECK(q.cls == PointClass::Interior);
    CHECK(error_kind([&] { classify_boundary(q, m2); }) == ErrorKind::Precondition);

    // A linearization with the normal not an eigenvector.
    auto sq = box({0.0, -1.0}, {1.0, 1.0});
    FieldExpr tilted = parse_field("(x1, x1 + x2)", sq);
    auto t = analyze_point(parse_field("(x1, x2)", sq), sq, vec({0.0, 0.0}));
    t.linearization = tilted.jacobian(vec({0.0, 0.0}));
    CHECK(error_kind([&] { classify_boundary(t, sq); }) == ErrorKind::NormalNotEigenvector);
}

TEST_CASE("quasi-gradient certificate") {
    auto m = full_space(2);
    FieldExpr grad = parse_field("(2*x1, 2*x2 - x2^3/3)", m);
    ExprFunction f(parse_scalar("x1^2 + x2^2 - x2^4/12"), 2);
    StationaryOptions opt;
    opt.seeds = 100;
    auto pts = find_stationary_points(grad, m, opt).points;
    auto c = quasi_gradient_certificate(grad, f, m, pts, 1000);
    CHECK(c.passed);
    CHECK(c.samples == 1000);
    CHECK(c.inside + c.outside == 1000);
    CHECK(c.min_outside > 0);

    FieldExpr rot = parse_field("(-x2, x1)", m);
    ExprFunction g(parse_scalar("x1"), 2);
    auto r = quasi_gradient_certificate(rot, g, m, {}, 1000);
    CHECK_FALSE(r.passed);
    CHECK(r.max_violation > 0.1);

    FieldExpr zero = parse_field("(0, 0)", m);
    auto z = quasi_gradient_certificate(zero, g, m, {}, 500);
    CHECK(z.passed);
    CHECK(z.outside == 0);
    CHECK(z.inside == 500);
}

TEST_CASE("blow-up field of a linear circle-equivariant field") {
    const double mu = 1.7;
    BlowupField bf(diagonal_field({mu}), 0, 1, false);
    for (int k = 0; k < 16; ++k) {
        double t = 2 * std::numbers::pi * k / 16.0;
        for (double s : {0.0, 0.3, 1.2}) {
            Vec y = vec({s, std::cos(t), std::sin(t)});
            Vec w = bf.eval(y);
            CHECK(w.tail(2).norm() < 1e-12);
            CHECK(lambda_energy(bf, y) == doctest::Approx(mu).epsilon(1e-12));
            CHECK(w[0] == doctest::Approx(mu * s).epsilon(1e-12));
        }
    }
    // Reverse flow s' = -Lambda s: explicit decay agrees with exp(-mu t).
    double s = 0.8;
    const double h = 1e-4;
    for (int i = 0; i < 10000; ++i) {
        Vec y = vec({s, 1.0, 0.0});
        double k1 = -bf.eval(y)[0];
        y[0] = s + 0.5 * h * k1;
        double k2 = -bf.eval(y)[0];
        s += h * k2;
    }
    CHECK(s == doctest::Approx(0.8 * std::exp(-mu)).epsilon(1e-7));
}

TEST_CASE("Lambda on diagonal complex linearizations") {
    BlowupField b12(diagonal_field({1.0, 2.0}), 0, 2, false);
    CHECK(lambda_energy(b12, vec({0, 1, 0, 0, 0})) == doctest::Approx(1.0));
    CHECK(lambda_energy(b12, vec({0, 0, 0, 1, 0})) == doctest::Approx(2.0));
    BlowupField b13(diagonal_field({1.0, 3.0}), 0, 2, false);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(lambda_energy(b13, vec({0, 1, 0, 0, 0})) == doctest::Approx(1.0));
    // Oracle: <phi, L phi> = (1 + 3) / 2.
    CHECK(lambda_energy(b13, vec({0, r, 0, r, 0})) == doctest::Approx(2.0));
    CHECK(error_kind([&] { lambda_energy(b13, vec({0, 1, 0, 1, 0})); }) == ErrorKind::Precondition);
}

TEST_CASE("blow-up field of a nonlinear equivariant field") {
    // R^1 + C^1: v_R = r - r^3 + |z|^2, v_C = z (r - 1 + 2 |z|^2).
    auto base = std::make_shared<LambdaField>(3, [](const Vec& x) {
        double n2 = x[1] * x[1] + x[2] * x[2];
        double c = x[0] - 1 + 2 * n2;
        return vec({x[0] - x[0] * x[0] * x[0] + n2, c * x[1], c * x[2]});
    });
    ManifoldSpec m = full_space(3);
    m.action = {1, 1, {1}};
    CHECK_NOTHROW(check_equivariance(*base, m));
    BlowupField bf(base, 1, 1, false);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 30; ++k) {
        double t = 3 * u(rng), s = 0.5 * (1 + u(rng)), r = u(rng);
        Vec y = vec({r, s, std::cos(t), std::sin(t)});
        Vec x = bf.blow_down(y);
        // Oracle: the ray integral of the derivative is v_C(r, s phi) / s.
        Vec vt = bf.vtilde(y);
        CHECK((vt - base->eval(x).tail(2) / s).norm() < 1e-10);
        // Push-forward of the blow-up field is the original field.
        Vec w = bf.eval(y);
        Vec push = w[1] * y.tail(2) + s * w.tail(2);
        CHECK((push - base->eval(x).tail(2)).norm() < 1e-10);
        CHECK(w[0] == doctest::Approx(base->eval(x)[0]));
        // s = 0 is invariant.
        y[1] = 0;
        CHECK(bf.eval(y)[1] == 0.0);
    }
    auto conj = std::make_shared<LambdaField>(2, [](const Vec& x) { return vec({x[0], -x[1]}); });
    ManifoldSpec mc = full_space(2);
    mc.action = {0, 1, {1}};
    CHECK(error_kind([&] { check_equivariance(*conj, mc); }) == ErrorKind::NotEquivariant);
}

TEST_CASE("boundary stationary points are eigenvectors") {
    // L = diag(1, 3) in a rotated unitary frame.
    const double c = std::cos(0.4), s = std::sin(0.4);
    Eigen::MatrixXcd Uc(2, 2);
    Uc << c, cplx(0, s), cplx(0, s), c;
    Eigen::MatrixXcd Lc = Uc * Eigen::Vector2cd(1.0, 3.0).asDiagonal() * Uc.adjoint();
    Mat A(4, 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            A(2 * i, 2 * j) = Lc(i, j).real();
            A(2 * i, 2 * j + 1) = -Lc(i, j).imag();
            A(2 * i + 1, 2 * j) = Lc(i, j).imag();
            A(2 * i + 1, 2 * j + 1) = Lc(i, j).real();
        }
    auto base = std::make_shared<LambdaField>(4, [A](const Vec& x) { return Vec(A * x); });
    BlowupField bf(base, 0, 2, false);
    auto to_real = [](const Eigen::Vector2cd& z) { return vec({z[0].real(), z[0].imag(), z[1].real(), z[1].imag()}); };
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int k = 0; k < 200; ++k) {
        Eigen::Vector2cd z;
        if (k % 4 == 0) {
            z = Uc.col(k % 8 == 0 ? 0 : 1) * std::polar(1.0, g(rng));
            if (k % 3 == 0) z += 1e-3 * Eigen::Vector2cd(cplx(g(rng), g(rng)), cplx(g(rng), g(rng)));
        } else {
            z = Eigen::Vector2cd(cplx(g(rng), g(rng)), cplx(g(rng), g(rng)));
        }
        z.normalize();
        Vec y(5);
        y[0] = 0;
        y.tail(4) = to_real(z);
        double residual = bf.eval(y).tail(4).norm();
        double dist = std::numeric_limits<double>::infinity();
        for (int j = 0; j < 2; ++j) dist = std::min(dist, std::sqrt(std::max(0.0, 2 - 2 * std::abs(Uc.col(j).dot(z)))));
        CHECK((residual < 1e-6) == (dist < 1e-6));
    }
}

TEST_CASE("reducible stationary points of a blow-up") {
    BlowupField bf(diagonal_field({1.0, 2.0}), 0, 2, false);
    ManifoldSpec m = bf.manifold(true);
    CHECK(m.dim() == 3);
    StationaryOptions opt;
    opt.seeds = 300;
    auto pts = find_stationary_points(bf, m, opt).points;
    annotate_reducible(bf, pts);
    REQUIRE(pts.size() == 2);
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.eigen_ordinal < b.eigen_ordinal; });
    for (int i = 0; i < 2; ++i) {
        CHECK(pts[i].reducible);
        CHECK(pts[i].coords[0] == doctest::Approx(0.0));
        CHECK(pts[i].eigenvector.norm() == doctest::Approx(1.0));
        CHECK(pts[i].eigenvalue == doctest::Approx(i + 1.0));
        CHECK(pts[i].eigen_ordinal == i + 1);
        CHECK(pts[i].cls == PointClass::BoundaryStable);
    }
    CHECK(flow_index(pts[0]) == 0);
    CHECK(flow_index(pts[1]) == 2);
}

TEST_CASE("equivariant field certificate condition (c)") {
    auto run = [](std::vector<double> mu) {
        BlowupField bf(diagonal_field(mu), 0, static_cast<int>(mu.size()), false);
        return equivariant_field_certificate(bf, {Vec(0)}, {}, nullptr);
    };
    auto good = run({1.0, 2.5});
    CHECK(good.passed());
    auto repeated = run({1.0, 1.0});
    CHECK_FALSE(repeated.simple_spectrum);
    CHECK(repeated.nonzero_spectrum);
    auto kernel = run({0.0, 1.0});
    CHECK_FALSE(kernel.nonzero_spectrum);
    CHECK(kernel.simple_spectrum);
    QuasiGradientCertificate failed;
    failed.passed = false;
    BlowupField bf(diagonal_field({1.0, 2.0}), 0, 2, false);
    auto d = equivariant_field_certificate(bf, {Vec(0)}, {}, &failed);
    CHECK_FALSE(d.quasi_gradient);
    CHECK(d.failures.size() == 1);
}
