#include "morsecon/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <atomic>
#include <numbers>
#include <sstream>

#include "morsecon/parallel.hpp"

namespace morsecon {

namespace {
std::atomic<int> g_jobs{1};
}

void set_jobs(int jobs) { g_jobs = std::max(1, jobs); }
int jobs() { return g_jobs.load(); }

Mat VectorField::jacobian(const Vec& x) const {
    const int n = static_cast<int>(x.size());
    Mat J(dim(), n);
    for (int j = 0; j < n; ++j) {
        const double h = 1e-4 * std::max(1.0, std::abs(x[j]));
        Vec a = x, b = x, c = x, d = x;
        a[j] += h;
        b[j] -= h;
        c[j] += 2 * h;
        d[j] -= 2 * h;
        J.col(j) = (8.0 * (eval(a) - eval(b)) - (eval(c) - eval(d))) / (12.0 * h);
    }
    return J;
}

Vec ScalarFunction::gradient(const Vec& x) const {
    Vec g(x.size());
    for (int j = 0; j < x.size(); ++j) {
        const double h = 1e-4 * std::max(1.0, std::abs(x[j]));
        Vec a = x, b = x, c = x, d = x;
        a[j] += h;
        b[j] -= h;
        c[j] += 2 * h;
        d[j] -= 2 * h;
        g[j] = (8.0 * (eval(a) - eval(b)) - (eval(c) - eval(d))) / (12.0 * h);
    }
    return g;
}

FieldExpr::FieldExpr(std::vector<Expr> components, std::string text)
    : components_(std::move(components)), text_(std::move(text)) {
    const int n = dim();
    partials_.resize(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i)
        for (int j = 0; j < n; ++j) partials_[i].push_back(components_[i].derivative(j));
}

Vec FieldExpr::eval(const Vec& x) const {
    Vec out(dim());
    for (int i = 0; i < dim(); ++i) out[i] = components_[i].eval(x.data());
    return out;
}

Mat FieldExpr::jacobian(const Vec& x) const {
    Mat J(dim(), dim());
    for (int i = 0; i < dim(); ++i)
        for (int j = 0; j < dim(); ++j) J(i, j) = partials_[i][j].eval(x.data());
    return J;
}

ExprFunction::ExprFunction(Expr e, int dim) : expr_(std::move(e)) {
    if (expr_.arity() > dim)
        throw Error(ErrorKind::ArityError, "witness uses x" + std::to_string(expr_.arity()) + " but dimension is " +
                                               std::to_string(dim));
    for (int j = 0; j < dim; ++j) partials_.push_back(expr_.derivative(j));
}

Vec ExprFunction::gradient(const Vec& x) const {
    Vec g(static_cast<int>(partials_.size()));
    for (std::size_t j = 0; j < partials_.size(); ++j) g[static_cast<int>(j)] = partials_[j].eval(x.data());
    return g;
}

bool CircleAction::semifree() const {
    return std::all_of(weights.begin(), weights.end(), [](int w) { return w == 1; });
}

Vec CircleAction::generator(const Vec& x) const {
    Vec g = Vec::Zero(x.size());
    for (int j = 0; j < complex_dims; ++j) {
        const int re = real_dims + 2 * j;
        const double w = weights.empty() ? 1.0 : weights[j];
        g[re] = -w * x[re + 1];
        g[re + 1] = w * x[re];
    }
    return g;
}

Vec CircleAction::rotate(const Vec& x, double theta) const {
    Vec y = x;
    for (int j = 0; j < complex_dims; ++j) {
        const int re = real_dims + 2 * j;
        const double w = weights.empty() ? 1.0 : weights[j];
        const double c = std::cos(w * theta), s = std::sin(w * theta);
        y[re] = c * x[re] - s * x[re + 1];
        y[re + 1] = s * x[re] + c * x[re + 1];
    }
    return y;
}

cplx CircleAction::coordinate(const Vec& x, int j) const {
    const int re = real_dims + 2 * j;
    return {x[re], x[re + 1]};
}

cplx CircleAction::hermitian(const Vec& x, const Vec& y) const {
    cplx acc = 0.0;
    for (int j = 0; j < complex_dims; ++j) acc += std::conj(coordinate(x, j)) * coordinate(y, j);
    return acc;
}

int ManifoldSpec::dim() const {
    int d = ambient_dim;
    switch (kind) {
        case ManifoldKind::UnitSphere:
        case ManifoldKind::Hemisphere: d -= 1; break;
        case ManifoldKind::Torus: d /= 2; break;
        case ManifoldKind::Blowup: d -= blowup_base_sphere ? 2 : 1; break;
        default: break;
    }
    if (quotient) d -= 1;
    return d - static_cast<int>(pinned.size());
}

Vec ManifoldSpec::project(const Vec& x) const {
    Vec y = x;
    for (const auto& [i, value] : pinned) y[i] = value;
    switch (kind) {
        case ManifoldKind::FullSpace: break;
        case ManifoldKind::UnitSphere: {
            double n = y.norm();
            if (n > 0) y /= n;
            break;
        }
        case ManifoldKind::Hemisphere: {
            y[ambient_dim - 1] = std::max(0.0, y[ambient_dim - 1]);
            double n = y.norm();
            if (n > 0) y /= n;
            break;
        }
        case ManifoldKind::Torus:
            for (int i = 0; i + 1 < ambient_dim; i += 2) {
                double n = std::hypot(y[i], y[i + 1]);
                if (n > 0) {
                    y[i] /= n;
                    y[i + 1] /= n;
                }
            }
            break;
        case ManifoldKind::Box:
            for (int i = 0; i < ambient_dim; ++i) y[i] = std::clamp(y[i], lower[i], upper[i]);
            break;
        case ManifoldKind::UnitBall: {
            double n = y.norm();
            if (n > 1.0) y /= n;
            break;
        }
        case ManifoldKind::Blowup: {
            const int a = blowup_real, b = blowup_complex;
            auto phi = y.segment(a + 1, 2 * b);
            if (y[a] < 0) {
                y[a] = -y[a];
                phi = -phi;
            }
            double n = phi.norm();
            if (n > 0) phi /= n;
            if (blowup_base_sphere) {
                double m = y.head(a + 1).norm();
                if (m > 0) y.head(a + 1) /= m;
            }
            break;
        }
    }
    return y;
}

Mat ManifoldSpec::constraint_normals(const Vec& x) const {
    Mat n = kind_normals(x);
    if (pinned.empty()) return n;
    Mat out = Mat::Zero(ambient_dim, n.cols() + static_cast<Eigen::Index>(pinned.size()));
    out.leftCols(n.cols()) = n;
    for (std::size_t k = 0; k < pinned.size(); ++k) out(pinned[k].first, n.cols() + static_cast<Eigen::Index>(k)) = 1.0;
    return out;
}

Mat ManifoldSpec::kind_normals(const Vec& x) const {
    switch (kind) {
        case ManifoldKind::UnitSphere:
        case ManifoldKind::Hemisphere: {
            Mat n(ambient_dim, 1);
            n.col(0) = x;
            return n;
        }
        case ManifoldKind::Torus: {
            Mat n = Mat::Zero(ambient_dim, ambient_dim / 2);
            for (int i = 0; i < ambient_dim / 2; ++i) {
                n(2 * i, i) = x[2 * i];
                n(2 * i + 1, i) = x[2 * i + 1];
            }
            return n;
        }
        case ManifoldKind::Blowup: {
            const int a = blowup_real, b = blowup_complex;
            Mat n = Mat::Zero(ambient_dim, blowup_base_sphere ? 2 : 1);
            n.col(0).segment(a + 1, 2 * b) = x.segment(a + 1, 2 * b);
            if (blowup_base_sphere) n.col(1).head(a + 1) = x.head(a + 1);
            return n;
        }
        default: return Mat(ambient_dim, 0);
    }
}

Mat ManifoldSpec::tangent_basis(const Vec& x) const {
    Mat normals = constraint_normals(x);
    if (quotient) {
        normals.conservativeResize(Eigen::NoChange, normals.cols() + 1);
        normals.col(normals.cols() - 1) = action.generator(x);
    }
    if (normals.cols() == 0) return Mat::Identity(ambient_dim, ambient_dim);
    Eigen::HouseholderQR<Mat> qr(normals);
    Mat Q = qr.householderQ() * Mat::Identity(ambient_dim, ambient_dim);
    return Q.rightCols(ambient_dim - normals.cols());
}

bool ManifoldSpec::has_boundary() const {
    if (!pinned.empty()) return false;
    return kind == ManifoldKind::Box || kind == ManifoldKind::UnitBall || kind == ManifoldKind::Hemisphere ||
           kind == ManifoldKind::Blowup;
}

double ManifoldSpec::boundary_gap(const Vec& x) const {
    switch (kind) {
        case ManifoldKind::Box: {
            double g = std::numeric_limits<double>::infinity();
            for (int i = 0; i < ambient_dim; ++i) g = std::min({g, x[i] - lower[i], upper[i] - x[i]});
            return g;
        }
        case ManifoldKind::UnitBall: return 1.0 - x.norm();
        case ManifoldKind::Hemisphere: return x[ambient_dim - 1];
        case ManifoldKind::Blowup: return x[blowup_real];
        default: return std::numeric_limits<double>::infinity();
    }
}

Vec ManifoldSpec::outward_normal(const Vec& x) const {
    Vec n = Vec::Zero(ambient_dim);
    switch (kind) {
        case ManifoldKind::Box: {
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < ambient_dim; ++i) {
                if (x[i] - lower[i] < best) {
                    best = x[i] - lower[i];
                    n.setZero();
                    n[i] = -1.0;
                }
                if (upper[i] - x[i] < best) {
                    best = upper[i] - x[i];
                    n.setZero();
                    n[i] = 1.0;
                }
            }
            return n;
        }
        case ManifoldKind::UnitBall: return x / x.norm();
        case ManifoldKind::Hemisphere: n[ambient_dim - 1] = -1.0; return n;
        case ManifoldKind::Blowup: n[blowup_real] = -1.0; return n;
        default: throw Error(ErrorKind::Precondition, "manifold has no boundary");
    }
}

double ManifoldSpec::distance(const Vec& x, const Vec& y) const {
    if (!quotient) return (x - y).norm();
    const int r = action.real_dims;
    double real2 = (x.head(r) - y.head(r)).squaredNorm();
    double cx = x.tail(x.size() - r).squaredNorm(), cy = y.tail(y.size() - r).squaredNorm();
    double cross = std::abs(action.hermitian(x, y));
    return std::sqrt(std::max(0.0, real2 + cx + cy - 2.0 * cross));
}

Vec ManifoldSpec::align(const Vec& x, const Vec& ref) const {
    if (!action.present()) return x;
    cplx h = action.hermitian(ref, x);
    if (std::abs(h) == 0.0) return x;
    return action.rotate(x, -std::arg(h));
}

Vec ManifoldSpec::canonical(const Vec& x) const {
    if (!quotient) return x;
    int best = 0;
    double mag = -1.0;
    for (int j = 0; j < action.complex_dims; ++j) {
        double m = std::abs(action.coordinate(x, j));
        if (m > mag + 1e-9) {
            mag = m;
            best = j;
        }
    }
    return action.rotate(x, -std::arg(action.coordinate(x, best)));
}

int ManifoldSpec::sample_dim() const { return ambient_dim; }

Vec ManifoldSpec::sample(const std::vector<double>& u) const {
    Vec x = sample_kind(u);
    return pinned.empty() ? x : project(x);
}

Vec ManifoldSpec::sample_kind(const std::vector<double>& u) const {
    Vec x(ambient_dim);
    switch (kind) {
        case ManifoldKind::Torus:
            for (int i = 0; i + 1 < ambient_dim; i += 2) {
                double t = 2.0 * std::numbers::pi * u[i];
                x[i] = std::cos(t);
                x[i + 1] = std::sin(t);
            }
            return x;
        case ManifoldKind::FullSpace:
        case ManifoldKind::Box:
            for (int i = 0; i < ambient_dim; ++i) x[i] = lower[i] + u[i] * (upper[i] - lower[i]);
            return x;
        case ManifoldKind::Blowup: {
            const int a = blowup_real;
            for (int i = 0; i < ambient_dim; ++i) x[i] = 2.0 * u[i] - 1.0;
            if (!lower.empty())
                for (int i = 0; i < a; ++i) x[i] = lower[i] + u[i] * (upper[i] - lower[i]);
            x[a] = u[a];
            if (x.segment(a + 1, 2 * blowup_complex).norm() < 1e-12) x[a + 1] = 1.0;
            return project(x);
        }
        default:
            for (int i = 0; i < ambient_dim; ++i) x[i] = 2.0 * u[i] - 1.0;
            if (x.norm() < 1e-12) x[0] = 1.0;
            if (kind == ManifoldKind::UnitBall && x.norm() > 1.0) x *= 0.999 / x.norm();
            if (kind == ManifoldKind::Hemisphere) x[ambient_dim - 1] = std::abs(x[ambient_dim - 1]);
            return project(x);
    }
}

std::string ManifoldSpec::kind_name() const {
    switch (kind) {
        case ManifoldKind::FullSpace: return action.present() ? "real-complex-split" : "full-space";
        case ManifoldKind::UnitSphere: return "unit-sphere";
        case ManifoldKind::Torus: return "torus";
        case ManifoldKind::Box: return "box";
        case ManifoldKind::UnitBall: return "unit-ball";
        case ManifoldKind::Hemisphere: return "hemisphere";
        case ManifoldKind::Blowup: return "blowup";
    }
    return "?";
}

ManifoldSpec full_space(int n, double window) {
    ManifoldSpec m;
    m.kind = ManifoldKind::FullSpace;
    m.ambient_dim = n;
    m.lower.assign(n, -window);
    m.upper.assign(n, window);
    return m;
}

ManifoldSpec unit_sphere(int n) {
    ManifoldSpec m;
    m.kind = ManifoldKind::UnitSphere;
    m.ambient_dim = n;
    return m;
}

ManifoldSpec torus(int circles) {
    ManifoldSpec m;
    m.kind = ManifoldKind::Torus;
    m.ambient_dim = 2 * circles;
    return m;
}

ManifoldSpec box(std::vector<double> lower, std::vector<double> upper) {
    ManifoldSpec m;
    m.kind = ManifoldKind::Box;
    m.ambient_dim = static_cast<int>(lower.size());
    m.lower = std::move(lower);
    m.upper = std::move(upper);
    return m;
}

ManifoldSpec unit_ball(int n) {
    ManifoldSpec m;
    m.kind = ManifoldKind::UnitBall;
    m.ambient_dim = n;
    return m;
}

ManifoldSpec hemisphere(int n) {
    ManifoldSpec m;
    m.kind = ManifoldKind::Hemisphere;
    m.ambient_dim = n;
    return m;
}

ManifoldSpec boundary_manifold(const ManifoldSpec& manifold, const Vec& x) {
    if (!manifold.has_boundary()) throw Error(ErrorKind::Precondition, "manifold has no boundary");
    if (manifold.boundary_gap(x) > 1e-8) throw Error(ErrorKind::Precondition, "point is not on the boundary");
    ManifoldSpec b = manifold;
    switch (manifold.kind) {
        case ManifoldKind::Box:
            for (int i = 0; i < manifold.ambient_dim; ++i) {
                if (std::abs(x[i] - manifold.lower[i]) <= 1e-8) b.pinned.emplace_back(i, manifold.lower[i]);
                else if (std::abs(x[i] - manifold.upper[i]) <= 1e-8) b.pinned.emplace_back(i, manifold.upper[i]);
            }
            if (b.pinned.size() > 1) throw Error(ErrorKind::Precondition, "corner points are not supported");
            break;
        case ManifoldKind::UnitBall: b.kind = ManifoldKind::UnitSphere; break;
        case ManifoldKind::Hemisphere:
            b.kind = ManifoldKind::UnitSphere;
            b.pinned.emplace_back(manifold.ambient_dim - 1, 0.0);
            break;
        case ManifoldKind::Blowup: b.pinned.emplace_back(manifold.blowup_real, 0.0); break;
        default: break;
    }
    return b;
}

FieldExpr parse_field(const std::string& text, const ManifoldSpec& manifold) {
    std::vector<Expr> comps = parse_tuple(text);
    if (static_cast<int>(comps.size()) != manifold.ambient_dim)
        throw Error(ErrorKind::ArityError, "field has " + std::to_string(comps.size()) + " components, ambient dimension is " +
                                               std::to_string(manifold.ambient_dim));
    for (const auto& c : comps)
        if (c.arity() > manifold.ambient_dim)
            throw Error(ErrorKind::ArityError, "component uses x" + std::to_string(c.arity()) +
                                                   " beyond ambient dimension " + std::to_string(manifold.ambient_dim));
    return FieldExpr(std::move(comps), text);
}

std::vector<double> halton(std::uint64_t index, int dim) {
    static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                                 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157,
                                 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241,
                                 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311, 313, 317, 331, 337, 347};
    const int nprimes = static_cast<int>(sizeof(primes) / sizeof(primes[0]));
    std::vector<double> u(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
        const int base = primes[d % nprimes];
        // Higher dimensions reuse primes with a scrambled index.
        std::uint64_t i = index + 1 + static_cast<std::uint64_t>(d / nprimes) * 7919u;
        double f = 1.0, r = 0.0;
        while (i > 0) {
            f /= base;
            r += f * static_cast<double>(i % base);
            i /= base;
        }
        u[static_cast<std::size_t>(d)] = r;
    }
    return u;
}

const char* to_string(PointClass c) {
    switch (c) {
        case PointClass::Interior: return "interior";
        case PointClass::BoundaryStable: return "boundary-stable";
        case PointClass::BoundaryUnstable: return "boundary-unstable";
    }
    return "?";
}

namespace {

struct EigenEntry {
    cplx value;
    Eigen::VectorXcd vector;
};

// Real basis of the invariant subspace spanned by the given eigenpairs.
Mat real_basis(const std::vector<EigenEntry>& entries, const Mat& T) {
    std::vector<Vec> cols;
    for (const auto& e : entries) {
        if (e.value.imag() < -1e-12) continue;
        Eigen::VectorXcd v = e.vector;
        Eigen::Index k;
        v.cwiseAbs().maxCoeff(&k);
        v *= std::conj(v[k]) / std::abs(v[k]);
        Vec re = T * v.real();
        if (std::abs(e.value.imag()) <= 1e-12) {
            Eigen::Index m;
            re.cwiseAbs().maxCoeff(&m);
            if (re[m] < 0) re = -re;
            cols.push_back(re / re.norm());
        } else {
            Vec im = T * v.imag();
            cols.push_back(re);
            cols.push_back(im);
        }
    }
    Mat B(T.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) B.col(static_cast<Eigen::Index>(i)) = cols[i];
    return B;
}

// Orthonormal basis with the orientation of B (positive R diagonal).
Mat oriented_orthonormal(const Mat& B, Mat* R_out) {
    if (B.cols() == 0) {
        if (R_out) *R_out = Mat(0, 0);
        return Mat(B.rows(), 0);
    }
    Eigen::HouseholderQR<Mat> qr(B);
    Mat Q = qr.householderQ() * Mat::Identity(B.rows(), B.cols());
    Mat R = qr.matrixQR().topRows(B.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < B.cols(); ++i)
        if (R(i, i) < 0) {
            Q.col(i) = -Q.col(i);
            R.row(i) = -R.row(i);
        }
    if (R_out) *R_out = R;
    return Q;
}

}  // namespace

StationaryPoint analyze_point(const VectorField& field, const ManifoldSpec& manifold, const Vec& x, double tol_hyp) {
    StationaryPoint p;
    p.coords = x;
    p.residual = field.eval(x).norm();
    p.tangent = manifold.tangent_basis(x);
    const Mat& T = p.tangent;
    p.linearization = T.transpose() * field.jacobian(x) * T;
    const int d = static_cast<int>(T.cols());
    std::vector<EigenEntry> entries;
    if (d > 0) {
        Eigen::EigenSolver<Mat> es(p.linearization);
        for (int i = 0; i < d; ++i) entries.push_back({es.eigenvalues()[i], es.eigenvectors().col(i)});
    }
    std::sort(entries.begin(), entries.end(), [](const EigenEntry& a, const EigenEntry& b) {
        if (a.value.real() != b.value.real()) return a.value.real() < b.value.real();
        return a.value.imag() < b.value.imag();
    });
    for (const auto& e : entries) p.spectrum.push_back(e.value);
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& e : entries) gap = std::min(gap, std::abs(e.value.real()));
    if (d > 0 && gap < tol_hyp) {
        std::ostringstream os;
        os << "min |Re eigenvalue| = " << gap << " at " << x.transpose();
        throw Error(ErrorKind::DegenerateSpectrum, os.str());
    }
    std::vector<EigenEntry> unstable, stable;
    for (const auto& e : entries) (e.value.real() < 0 ? unstable : stable).push_back(e);
    // Weakest expansion first, so adding strongly expanding modes appends basis vectors.
    auto weak_first = [](const EigenEntry& a, const EigenEntry& b) {
        if (std::abs(a.value.real()) != std::abs(b.value.real()))
            return std::abs(a.value.real()) < std::abs(b.value.real());
        return a.value.imag() > b.value.imag();
    };
    std::stable_sort(unstable.begin(), unstable.end(), weak_first);
    std::stable_sort(stable.begin(), stable.end(), weak_first);
    p.flow_index = static_cast<int>(unstable.size());
    Mat Bu = real_basis(unstable, T), Bs = real_basis(stable, T);
    Mat Ru, Rs;
    p.unstable = oriented_orthonormal(Bu, &Ru);
    p.stable = oriented_orthonormal(Bs, &Rs);
    Mat C(d, d);
    if (d > 0) {
        C << T.transpose() * Bu, T.transpose() * Bs;
        Mat Cinv = C.inverse();
        const int k = p.flow_index;
        p.unstable_projection = Ru * Cinv.topRows(k) * T.transpose();
        p.stable_projection = Rs * Cinv.bottomRows(d - k) * T.transpose();
    } else {
        p.unstable_projection = Mat(0, x.size());
        p.stable_projection = Mat(0, x.size());
    }
    p.cls = PointClass::Interior;
    if (manifold.has_boundary() && manifold.boundary_gap(x) < 1e-8) p.cls = classify_boundary(p, manifold);
    return p;
}

int flow_index(const StationaryPoint& p) {
    for (const auto& e : p.spectrum)
        if (std::abs(e.real()) < 1e-8) throw Error(ErrorKind::DegenerateSpectrum, "non-hyperbolic point " + p.id);
    return p.flow_index;
}

PointClass classify_boundary(const StationaryPoint& p, const ManifoldSpec& manifold) {
    if (!manifold.has_boundary() || manifold.boundary_gap(p.coords) > 1e-8)
        throw Error(ErrorKind::Precondition, "point is not on the boundary");
    Vec N = manifold.outward_normal(p.coords);
    Vec n = p.tangent.transpose() * N;
    if (n.norm() < 1e-12) throw Error(ErrorKind::NormalNotEigenvector, "normal is not tangent to the manifold");
    Vec An = p.linearization * n;
    double mu = n.dot(An) / n.squaredNorm();
    if ((An - mu * n).norm() > 1e-7)
        throw Error(ErrorKind::NormalNotEigenvector, "|dv(N) - mu N| = " + std::to_string((An - mu * n).norm()));
    return mu > 0 ? PointClass::BoundaryStable : PointClass::BoundaryUnstable;
}

StationaryPoint newton_point(const VectorField& field, const ManifoldSpec& manifold, const Vec& seed,
                             const StationaryOptions& options) {
    Vec x = manifold.project(seed);
    std::vector<NewtonStep> trace;
    double res = field.eval(x).norm();
    for (int it = 0; it <= options.max_iter; ++it) {
        if (options.keep_trace) trace.push_back({x, res});
        if (!std::isfinite(res) || x.norm() > options.divergence_bound) break;
        Mat T = manifold.tangent_basis(x);
        Vec v = field.eval(x);
        Mat A = T.transpose() * field.jacobian(x) * T;
        Vec g = T.transpose() * v;
        Vec delta = A.completeOrthogonalDecomposition().solve(-g);
        if (res <= options.residual_tol) {
            // One polishing step, kept only if it does not hurt.
            Vec y = manifold.project(x + T * delta);
            double ry = field.eval(y).norm();
            if (ry <= res) {
                x = y;
                res = ry;
                if (options.keep_trace) trace.push_back({x, res});
            }
            StationaryPoint p;
            p.coords = x;
            p.residual = res;
            p.trace = std::move(trace);
            return p;
        }
        double alpha = 1.0;
        bool accepted = false;
        while (alpha > 1e-6) {
            Vec y = manifold.project(x + alpha * (T * delta));
            double ry = field.eval(y).norm();
            if (std::isfinite(ry) && ry < (1.0 - 1e-4 * alpha) * res) {
                x = y;
                res = ry;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
    }
    throw Error(ErrorKind::NewtonDivergence, "no convergence, residual " + std::to_string(res));
}

namespace {

bool coord_less(const Vec& a, const Vec& b) {
    for (int i = 0; i < a.size(); ++i) {
        double ra = std::round(a[i] * 1e7), rb = std::round(b[i] * 1e7);
        if (ra != rb) return ra < rb;
    }
    return false;
}

}  // namespace

StationaryResult find_stationary_points(const VectorField& field, const ManifoldSpec& manifold,
                                        const StationaryOptions& options) {
    std::vector<Vec> seeds = options.extra_seeds;
    for (std::size_t i = 0; i < options.seeds; ++i)
        seeds.push_back(manifold.sample(halton(options.seed_offset + i, manifold.sample_dim())));
    std::vector<std::optional<StationaryPoint>> found(seeds.size());
    StationaryOptions quiet = options;
    parallel_for(seeds.size(), [&](std::size_t i) {
        try {
            found[i] = newton_point(field, manifold, seeds[i], quiet);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NewtonDivergence) throw;
        }
    });
    StationaryResult out;
    std::vector<StationaryPoint> unique;
    for (auto& f : found) {
        if (!f) {
            ++out.newton_failures;
            continue;
        }
        Vec c = manifold.canonical(f->coords);
        bool dup = false;
        for (auto& u : unique)
            if (manifold.distance(u.coords, c) < options.dedupe_tol) {
                dup = true;
                if (f->residual < u.residual) {
                    u.coords = c;
                    u.residual = f->residual;
                    u.trace = f->trace;
                }
                break;
            }
        if (!dup) {
            f->coords = c;
            unique.push_back(std::move(*f));
        }
    }
    for (auto& u : unique) {
        StationaryPoint p = analyze_point(field, manifold, u.coords, options.tol_hyp);
        p.trace = std::move(u.trace);
        out.points.push_back(std::move(p));
    }
    std::sort(out.points.begin(), out.points.end(),
              [](const StationaryPoint& a, const StationaryPoint& b) { return coord_less(a.coords, b.coords); });
    for (std::size_t i = 0; i < out.points.size(); ++i) out.points[i].id = "p" + std::to_string(i);
    return out;
}

QuasiGradientCertificate quasi_gradient_certificate(const VectorField& field, const ScalarFunction& witness,
                                                    const ManifoldSpec& manifold,
                                                    const std::vector<StationaryPoint>& points, std::size_t samples,
                                                    const CertificateOptions& options) {
    QuasiGradientCertificate c;
    c.samples = samples;
    c.floor = options.floor;
    c.min_outside = std::numeric_limits<double>::infinity();
    c.min_overall = std::numeric_limits<double>::infinity();
    std::vector<double> value(samples);
    std::vector<char> inside(samples);
    parallel_for(samples, [&](std::size_t i) {
        Vec x = manifold.sample(halton(i, manifold.sample_dim()));
        Vec v = field.eval(x);
        value[i] = witness.gradient(x).dot(v);
        bool in = v.norm() <= options.stationary_speed;
        for (const auto& p : points)
            if (manifold.distance(p.coords, x) < options.ball_radius) in = true;
        inside[i] = in;
    });
    for (std::size_t i = 0; i < samples; ++i) {
        c.min_overall = std::min(c.min_overall, value[i]);
        c.max_violation = std::max(c.max_violation, -value[i]);
        if (inside[i]) {
            ++c.inside;
        } else {
            ++c.outside;
            c.min_outside = std::min(c.min_outside, value[i]);
        }
    }
    c.passed = c.max_violation <= options.tol_qg && (c.outside == 0 || c.min_outside >= options.floor);
    return c;
}

}  // namespace morsecon
