#ifndef MORSECON_FLOW_MODEL_HPP
#define MORSECON_FLOW_MODEL_HPP

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morsecon/errors.hpp"
#include "morsecon/expr.hpp"

namespace morsecon {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;

class VectorField {
public:
    virtual ~VectorField() = default;
    virtual int dim() const = 0;
    virtual Vec eval(const Vec& x) const = 0;
    // Fourth-order central differences unless overridden.
    virtual Mat jacobian(const Vec& x) const;
};

class ScalarFunction {
public:
    virtual ~ScalarFunction() = default;
    virtual double eval(const Vec& x) const = 0;
    virtual Vec gradient(const Vec& x) const;
};

class FieldExpr : public VectorField {
public:
    explicit FieldExpr(std::vector<Expr> components, std::string text = {});
    int dim() const override { return static_cast<int>(components_.size()); }
    Vec eval(const Vec& x) const override;
    Mat jacobian(const Vec& x) const override;
    const std::vector<Expr>& components() const { return components_; }
    const std::string& text() const { return text_; }

private:
    std::vector<Expr> components_;
    std::vector<std::vector<Expr>> partials_;
    std::string text_;
};

class ExprFunction : public ScalarFunction {
public:
    explicit ExprFunction(Expr e, int dim);
    double eval(const Vec& x) const override { return expr_.eval(x.data()); }
    Vec gradient(const Vec& x) const override;
    const Expr& expr() const { return expr_; }

private:
    Expr expr_;
    std::vector<Expr> partials_;
};

class LambdaField : public VectorField {
public:
    using Fn = std::function<Vec(const Vec&)>;
    using Jac = std::function<Mat(const Vec&)>;
    LambdaField(int dim, Fn f, Jac j = {}) : dim_(dim), f_(std::move(f)), j_(std::move(j)) {}
    int dim() const override { return dim_; }
    Vec eval(const Vec& x) const override { return f_(x); }
    Mat jacobian(const Vec& x) const override { return j_ ? j_(x) : VectorField::jacobian(x); }

private:
    int dim_;
    Fn f_;
    Jac j_;
};

class LambdaFunction : public ScalarFunction {
public:
    using Fn = std::function<double(const Vec&)>;
    using Grad = std::function<Vec(const Vec&)>;
    LambdaFunction(Fn f, Grad g = {}) : f_(std::move(f)), g_(std::move(g)) {}
    double eval(const Vec& x) const override { return f_(x); }
    Vec gradient(const Vec& x) const override { return g_ ? g_(x) : ScalarFunction::gradient(x); }

private:
    Fn f_;
    Grad g_;
};

// Ambient layout [x_1..x_a, Re z_1, Im z_1, ..., Re z_b, Im z_b].
struct CircleAction {
    int real_dims = 0;
    int complex_dims = 0;
    std::vector<int> weights;

    bool present() const { return complex_dims > 0; }
    bool semifree() const;
    Vec generator(const Vec& x) const;
    Vec rotate(const Vec& x, double theta) const;
    cplx coordinate(const Vec& x, int j) const;
    // <x_C, y_C> = sum conj(x_j) y_j
    cplx hermitian(const Vec& x, const Vec& y) const;
};

enum class ManifoldKind { FullSpace, UnitSphere, Torus, Box, UnitBall, Hemisphere, Blowup };

struct ManifoldSpec {
    ManifoldKind kind = ManifoldKind::FullSpace;
    int ambient_dim = 0;
    // Box bounds; for unbounded kinds the seed window.
    std::vector<double> lower, upper;
    CircleAction action;
    // Work on the quotient by a free circle action.
    bool quotient = false;
    // Blowup layout [r (a), s, phi (2b)]; base_sphere adds |r|^2 + s^2 = 1.
    int blowup_real = 0;
    int blowup_complex = 0;
    bool blowup_base_sphere = false;
    // Coordinates held fixed; used for boundary strata (box faces, equators, s = 0).
    std::vector<std::pair<int, double>> pinned;

    int dim() const;
    Vec project(const Vec& x) const;
    Mat constraint_normals(const Vec& x) const;
    Mat tangent_basis(const Vec& x) const;
    bool has_boundary() const;
    double boundary_gap(const Vec& x) const;
    Vec outward_normal(const Vec& x) const;
    double distance(const Vec& x, const Vec& y) const;
    Vec align(const Vec& x, const Vec& ref) const;
    Vec canonical(const Vec& x) const;
    int sample_dim() const;
    Vec sample(const std::vector<double>& u) const;
    std::string kind_name() const;

private:
    Mat kind_normals(const Vec& x) const;
    Vec sample_kind(const std::vector<double>& u) const;
};

ManifoldSpec full_space(int n, double window = 2.0);
ManifoldSpec unit_sphere(int n);
ManifoldSpec torus(int circles);
ManifoldSpec box(std::vector<double> lower, std::vector<double> upper);
ManifoldSpec unit_ball(int n);
// Upper half of the unit sphere in R^n (last coordinate >= 0).
ManifoldSpec hemisphere(int n);
// The boundary stratum through x, as a closed manifold.
ManifoldSpec boundary_manifold(const ManifoldSpec& manifold, const Vec& x);

FieldExpr parse_field(const std::string& text, const ManifoldSpec& manifold);

// Radical-inverse sequence; index 0 is skipped by callers that want interior points.
std::vector<double> halton(std::uint64_t index, int dim);

enum class PointClass { Interior, BoundaryStable, BoundaryUnstable };
const char* to_string(PointClass c);

struct NewtonStep {
    Vec x;
    double residual = 0.0;
};

struct StationaryPoint {
    std::string id;
    Vec coords;
    std::vector<cplx> spectrum;
    int flow_index = 0;
    PointClass cls = PointClass::Interior;
    double residual = 0.0;
    // Orthonormal tangent basis (ambient x d) and the tangential linearization in it.
    Mat tangent;
    Mat linearization;
    // Oriented orthonormal bases of the unstable and stable spaces (ambient coordinates).
    Mat unstable;
    Mat stable;
    // Spectral projection onto the unstable space along the stable one, in `unstable` coordinates.
    Mat unstable_projection;
    Mat stable_projection;
    // Blow-up boundary data.
    bool reducible = false;
    Vec base;
    int eigen_ordinal = 0;
    double eigenvalue = 0.0;
    Vec eigenvector;
    std::vector<NewtonStep> trace;
};

struct StationaryOptions {
    double residual_tol = 1e-10;
    double dedupe_tol = 1e-6;
    double tol_hyp = 1e-8;
    std::size_t seeds = 10000;
    std::uint64_t seed_offset = 0;
    int max_iter = 60;
    double divergence_bound = 1e6;
    std::vector<Vec> extra_seeds;
    bool keep_trace = true;
};

struct StationaryResult {
    std::vector<StationaryPoint> points;
    std::size_t newton_failures = 0;
};

StationaryResult find_stationary_points(const VectorField& field, const ManifoldSpec& manifold,
                                        const StationaryOptions& options = {});

// Linearization, index, splitting and boundary class of a located zero.
StationaryPoint analyze_point(const VectorField& field, const ManifoldSpec& manifold, const Vec& x,
                              double tol_hyp = 1e-8);

// Newton from one seed; empty optional-like result signalled by a thrown NewtonDivergence.
StationaryPoint newton_point(const VectorField& field, const ManifoldSpec& manifold, const Vec& seed,
                             const StationaryOptions& options = {});

int flow_index(const StationaryPoint& p);
PointClass classify_boundary(const StationaryPoint& p, const ManifoldSpec& manifold);

struct QuasiGradientCertificate {
    std::size_t samples = 0;
    std::size_t inside = 0;
    std::size_t outside = 0;
    double min_outside = 0.0;
    double min_overall = 0.0;
    double max_violation = 0.0;
    double floor = 0.0;
    bool passed = false;
};

struct CertificateOptions {
    double ball_radius = 0.05;
    double floor = 1e-6;
    double tol_qg = 1e-9;
    double stationary_speed = 1e-9;
};

QuasiGradientCertificate quasi_gradient_certificate(const VectorField& field, const ScalarFunction& witness,
                                                    const ManifoldSpec& manifold,
                                                    const std::vector<StationaryPoint>& points, std::size_t samples,
                                                    const CertificateOptions& options = {});

}  // namespace morsecon

#endif
