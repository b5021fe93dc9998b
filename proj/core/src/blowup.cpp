#include "morsecon/blowup.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

namespace morsecon {

void check_equivariance(const VectorField& field, const ManifoldSpec& manifold, std::size_t samples, double tol) {
    if (!manifold.action.present()) return;
    for (std::size_t i = 0; i < samples; ++i) {
        std::vector<double> u = halton(i + 17, manifold.sample_dim() + 1);
        Vec x = manifold.sample(u);
        double theta = 2.0 * std::numbers::pi * u.back();
        Vec lhs = field.eval(manifold.action.rotate(x, theta));
        Vec rhs = manifold.action.rotate(field.eval(x), theta);
        double err = (lhs - rhs).norm();
        if (err > tol * std::max(1.0, rhs.norm()))
            throw Error(ErrorKind::NotEquivariant, "equivariance defect " + std::to_string(err) + " at sample " +
                                                       std::to_string(i));
    }
}

BlowupField::BlowupField(std::shared_ptr<const VectorField> base, int real_dims, int complex_dims, bool base_sphere)
    : base_(std::move(base)), a_(real_dims), b_(complex_dims), sphere_(base_sphere) {
    using boost::math::quadrature::gauss;
    const auto& x = gauss<double, 16>::abscissa();
    const auto& w = gauss<double, 16>::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
        nodes_.push_back(0.5 * (1.0 - x[i]));
        weights_.push_back(0.5 * w[i]);
        nodes_.push_back(0.5 * (1.0 + x[i]));
        weights_.push_back(0.5 * w[i]);
    }
}

Vec BlowupField::blow_down(const Vec& y) const {
    Vec x(a_ + 2 * b_);
    x.head(a_) = y.head(a_);
    x.tail(2 * b_) = y[a_] * y.segment(a_ + 1, 2 * b_);
    return x;
}

Vec BlowupField::lift(const Vec& x) const {
    Vec y(dim());
    y.head(a_) = x.head(a_);
    Vec z = x.tail(2 * b_);
    double s = z.norm();
    y[a_] = s;
    y.segment(a_ + 1, 2 * b_) = s > 0 ? Vec(z / s) : Vec(Vec::Unit(2 * b_, 0));
    return y;
}

Vec BlowupField::vtilde(const Vec& y) const {
    const double s = y[a_];
    Vec phi = y.segment(a_ + 1, 2 * b_);
    Vec acc = Vec::Zero(2 * b_);
    Vec x(a_ + 2 * b_);
    x.head(a_) = y.head(a_);
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        x.tail(2 * b_) = nodes_[k] * s * phi;
        Mat J = base_->jacobian(x);
        acc += weights_[k] * (J.bottomRightCorner(2 * b_, 2 * b_) * phi);
    }
    return acc;
}

double BlowupField::lambda(const Vec& y) const { return y.segment(a_ + 1, 2 * b_).dot(vtilde(y)); }

Vec BlowupField::eval(const Vec& y) const {
    Vec out(dim());
    Vec vt = vtilde(y);
    Vec phi = y.segment(a_ + 1, 2 * b_);
    const double L = phi.dot(vt);
    out.head(a_) = base_->eval(blow_down(y)).head(a_);
    out[a_] = L * y[a_];
    out.segment(a_ + 1, 2 * b_) = vt - L * phi;
    return out;
}

Mat BlowupField::complex_linearization(const Vec& r) const {
    Vec x = Vec::Zero(a_ + 2 * b_);
    x.head(a_) = r;
    return base_->jacobian(x).bottomRightCorner(2 * b_, 2 * b_);
}

ManifoldSpec BlowupField::manifold(bool quotient) const {
    ManifoldSpec m;
    m.kind = ManifoldKind::Blowup;
    m.ambient_dim = dim();
    m.blowup_real = a_;
    m.blowup_complex = b_;
    m.blowup_base_sphere = sphere_;
    m.action.real_dims = a_ + 1;
    m.action.complex_dims = b_;
    m.action.weights.assign(b_, 1);
    m.quotient = quotient;
    m.lower.assign(a_, -2.0);
    m.upper.assign(a_, 2.0);
    return m;
}

double lambda_energy(const BlowupField& field, const Vec& y) {
    Vec phi = y.segment(field.real_dims() + 1, 2 * field.complex_dims());
    if (std::abs(phi.norm() - 1.0) > 1e-9) throw Error(ErrorKind::Precondition, "phi must have unit norm");
    return field.lambda(y);
}

namespace {

// Real 2b x 2b matrix of a complex-linear map back to a complex b x b matrix.
Eigen::MatrixXcd complexify(const Mat& M, double* defect) {
    const int b = static_cast<int>(M.rows() / 2);
    Eigen::MatrixXcd C(b, b);
    double d = 0.0;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            double a = M(2 * i, 2 * j), bb = M(2 * i, 2 * j + 1);
            double c = M(2 * i + 1, 2 * j), e = M(2 * i + 1, 2 * j + 1);
            d = std::max({d, std::abs(a - e), std::abs(bb + c)});
            C(i, j) = cplx(0.5 * (a + e), 0.5 * (c - bb));
        }
    if (defect) *defect = d;
    return C;
}

}  // namespace

EquivariantCertificate equivariant_field_certificate(const BlowupField& field, const std::vector<Vec>& fixed_points,
                                                     const std::vector<StationaryPoint>& quotient_points,
                                                     const QuasiGradientCertificate* witness, double tol_gap,
                                                     double tol_hyp) {
    EquivariantCertificate c;
    for (const auto& p : quotient_points)
        for (const auto& e : p.spectrum)
            if (std::abs(e.real()) < tol_hyp) {
                c.quotient_hyperbolic = false;
                c.failures.push_back("(a) quotient point " + p.id + " not hyperbolic");
                break;
            }
    for (std::size_t i = 0; i < fixed_points.size(); ++i) {
        const Vec& r = fixed_points[i];
        const int a = field.real_dims();
        if (a > 0) {
            LambdaField restricted(a, [&](const Vec& rr) {
                Vec y = Vec::Zero(field.dim());
                y.head(a) = rr;
                y[a + 1] = 1.0;
                return Vec(field.eval(y).head(a));
            });
            Eigen::EigenSolver<Mat> es(restricted.jacobian(r));
            for (int k = 0; k < a; ++k)
                if (std::abs(es.eigenvalues()[k].real()) < tol_hyp) {
                    c.fixed_hyperbolic = false;
                    c.failures.push_back("(b) fixed point " + std::to_string(i) + " not hyperbolic");
                    break;
                }
        }
        double defect = 0.0;
        Eigen::MatrixXcd L = complexify(field.complex_linearization(r), &defect);
        if (defect > 1e-9 || (L - L.adjoint()).norm() > 1e-9) {
            c.self_adjoint = false;
            c.failures.push_back("(c) L_q not self-adjoint at fixed point " + std::to_string(i));
            continue;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(L);
        const auto& ev = es.eigenvalues();
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
            if (std::abs(ev[k]) < tol_gap && c.nonzero_spectrum) {
                c.nonzero_spectrum = false;
                c.failures.push_back("(c) NonzeroSpectrum at fixed point " + std::to_string(i));
            }
            if (k > 0 && std::abs(ev[k] - ev[k - 1]) < tol_gap && c.simple_spectrum) {
                c.simple_spectrum = false;
                c.failures.push_back("(c) SimpleSpectrum at fixed point " + std::to_string(i));
            }
        }
    }
    if (witness && !witness->passed) {
        c.quasi_gradient = false;
        c.failures.push_back("(d) witness certificate failed");
    }
    return c;
}

void annotate_reducible(const BlowupField& field, std::vector<StationaryPoint>& points) {
    const int a = field.real_dims(), b = field.complex_dims();
    for (auto& p : points) {
        if (p.coords[a] > 1e-8) continue;
        p.reducible = true;
        p.base = p.coords.head(a);
        Vec phi = p.coords.segment(a + 1, 2 * b);
        p.eigenvector = phi;
        p.eigenvalue = field.lambda(p.coords);
        Eigen::MatrixXcd L = complexify(field.complex_linearization(p.base), nullptr);
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L);
        std::vector<double> ev;
        for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) ev.push_back(es.eigenvalues()[k].real());
        std::sort(ev.begin(), ev.end());
        int ordinal = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < ev.size(); ++k)
            if (std::abs(ev[k] - p.eigenvalue) < best) {
                best = std::abs(ev[k] - p.eigenvalue);
                ordinal = static_cast<int>(k) + 1;
            }
        p.eigen_ordinal = ordinal;
    }
}

}  // namespace morsecon
