#include "morsecon/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Sparse>
#include <boost/math/tools/minima.hpp>
#include <boost/numeric/odeint.hpp>

#include "morsecon/parallel.hpp"

namespace morsecon {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

// Adaptive Dormand-Prince stepping with projection after every accepted step.
template <class Rhs, class After>
std::size_t drive(Rhs&& rhs, State& s, double t_end, const FlowOptions& o, bool reproject, After&& after) {
    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(o.tolerance, o.tolerance);
    double t = 0.0, dt = o.initial_step;
    std::size_t steps = 0;
    while (t < t_end) {
        dt = std::min({dt, o.max_step, t_end - t});
        if (t_end - t - dt < 1e-12) dt = t_end - t;
        auto res = stepper.try_step(rhs, s, t, dt);
        if (res != odeint::success) {
            if (dt < 1e-13) throw Error(ErrorKind::BlowUp, "step size underflow at t = " + std::to_string(t));
            continue;
        }
        ++steps;
        if (reproject) stepper.reset();
        if (after(t, s)) break;
        if (steps > 5000000) throw Error(ErrorKind::BlowUp, "step budget exhausted");
    }
    return steps;
}

bool needs_projection(const ManifoldSpec& m) { return m.kind != ManifoldKind::FullSpace || !m.pinned.empty(); }

double align_angle(const ManifoldSpec& m, const Vec& z, const Vec& y) {
    if (!m.quotient) return 0.0;
    cplx h = m.action.hermitian(y, z);
    return std::abs(h) > 0 ? -std::arg(h) : 0.0;
}

Mat rotation_matrix(const ManifoldSpec& m, double theta) {
    const int d = m.ambient_dim;
    Mat R = Mat::Identity(d, d);
    if (theta == 0.0) return R;
    for (int j = 0; j < d; ++j) R.col(j) = m.action.rotate(Vec::Unit(d, j), theta);
    return R;
}

// Orthonormal basis with the orientation of B (positive R diagonal).
Mat qr_positive(const Mat& B, Mat* R_out = nullptr) {
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

double max_rate(const StationaryPoint& p) {
    double m = 0.0;
    for (const auto& e : p.spectrum) m = std::max(m, std::abs(e.real()));
    return m;
}

}  // namespace

FlowPath integrate_flow(const VectorField& field, const ManifoldSpec& manifold, const Vec& x0, double t_max,
                        const FlowOptions& options, const std::function<bool(double, const Vec&)>& stop) {
    const int d = field.dim();
    const double sgn = options.forward ? 1.0 : -1.0;
    State s(x0.data(), x0.data() + d);
    FlowPath path;
    path.t.push_back(0.0);
    path.x.push_back(manifold.project(x0));
    Eigen::Map<Vec>(s.data(), d) = path.x.back();
    if (stop && stop(0.0, path.x.back())) return path;
    auto rhs = [&](const State& x, State& dx, double) {
        Vec v = field.eval(Eigen::Map<const Vec>(x.data(), d));
        for (int i = 0; i < d; ++i) dx[i] = sgn * v[i];
    };
    const bool proj = needs_projection(manifold);
    drive(rhs, s, t_max, options, proj, [&](double t, State& st) {
        Eigen::Map<Vec> x(st.data(), d);
        if (proj) x = manifold.project(Vec(x));
        if (!x.allFinite() || x.norm() > options.blowup_bound)
            throw Error(ErrorKind::BlowUp, "trajectory left the bound at t = " + std::to_string(t));
        path.t.push_back(t);
        path.x.push_back(x);
        return stop && stop(t, path.x.back());
    });
    return path;
}

FlowMap flow_map(const VectorField& field, const ManifoldSpec& manifold, const Vec& x0, const Mat& frame, double t,
                 const FlowOptions& options) {
    const int d = field.dim();
    const int m = static_cast<int>(frame.cols());
    const double sgn = options.forward ? 1.0 : -1.0;
    State s(static_cast<std::size_t>(d) * (m + 1));
    const Vec start = manifold.project(x0);
    Eigen::Map<Vec>(s.data(), d) = start;
    // Chain rule through the projection onto the manifold.
    const Mat N = manifold.constraint_normals(start);
    if (N.cols() > 0 && m > 0) {
        Mat P = Mat::Identity(d, d) - N * (N.transpose() * N).ldlt().solve(N.transpose());
        Eigen::Map<Mat>(s.data() + d, d, m) = P * frame;
    } else {
        Eigen::Map<Mat>(s.data() + d, d, m) = frame;
    }
    auto rhs = [&](const State& st, State& ds, double) {
        Eigen::Map<const Vec> x(st.data(), d);
        Eigen::Map<const Mat> Z(st.data() + d, d, m);
        Eigen::Map<Vec>(ds.data(), d) = sgn * field.eval(x);
        Eigen::Map<Mat>(ds.data() + d, d, m) = sgn * (field.jacobian(x) * Z);
    };
    const bool proj = needs_projection(manifold);
    FlowOptions o = options;
    FlowMap out;
    out.steps = drive(rhs, s, t, o, proj, [&](double tt, State& st) {
        Eigen::Map<Vec> x(st.data(), d);
        if (proj) x = manifold.project(Vec(x));
        if (!x.allFinite() || x.norm() > options.blowup_bound)
            throw Error(ErrorKind::BlowUp, "trajectory left the bound at t = " + std::to_string(tt));
        return false;
    });
    out.end = Eigen::Map<Vec>(s.data(), d);
    out.frame = Eigen::Map<Mat>(s.data() + d, d, m);
    return out;
}

cplx CutSpec::eval(const CircleAction& action, const Vec& x) const {
    cplx h = 0.0;
    for (int j = 0; j < action.complex_dims && j < static_cast<int>(coefficients.size()); ++j)
        h += coefficients[j] * action.coordinate(x, j);
    return h;
}

Mat CutSpec::differential(const CircleAction& action, int ambient_dim) const {
    Mat D = Mat::Zero(2, ambient_dim);
    for (int j = 0; j < action.complex_dims && j < static_cast<int>(coefficients.size()); ++j) {
        const int c = action.real_dims + 2 * j;
        const double a = coefficients[j].real(), b = coefficients[j].imag();
        D(0, c) = a;
        D(0, c + 1) = -b;
        D(1, c) = b;
        D(1, c + 1) = a;
    }
    return D;
}

CutSpec CutSpec::generic(int complex_dims, double phase) {
    CutSpec c;
    for (int j = 0; j < complex_dims; ++j) c.coefficients.push_back(std::polar(1.0 + 0.37 * j, 0.9 * j + 0.3 + phase));
    return c;
}

void check_cut_equivariance(const CutSpec& cut, const CircleAction& action, int ambient_dim) {
    for (std::size_t j = 0; j < cut.coefficients.size(); ++j)
        if (j >= action.weights.size() || (action.weights[j] != 1 && cut.coefficients[j] != 0.0))
            throw Error(ErrorKind::Precondition, "cut must only use weight-one coordinates");
    for (std::uint64_t i = 1; i <= 32; ++i) {
        std::vector<double> u = halton(i, ambient_dim + 1);
        Vec x(ambient_dim);
        for (int k = 0; k < ambient_dim; ++k) x[k] = 2 * u[k] - 1;
        double th = 2 * std::numbers::pi * u.back();
        cplx lhs = cut.eval(action, action.rotate(x, th)), rhs = std::polar(1.0, th) * cut.eval(action, x);
        if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(rhs)))
            throw Error(ErrorKind::Precondition, "cut is not weight-one equivariant");
    }
}

void reorient_unstable(StationaryPoint& p, const Mat& basis) {
    if (basis.cols() != p.unstable.cols()) throw Error(ErrorKind::Precondition, "basis dimension mismatch");
    if (basis.cols() == 0) return;
    Mat G = basis.transpose() * p.unstable;
    if (std::abs(std::abs(G.determinant()) - 1.0) > 1e-6)
        throw Error(ErrorKind::Precondition, "basis does not span the unstable space of " + p.id);
    p.unstable_projection = G * p.unstable_projection;
    p.unstable = basis;
}

int orientation_sign(const StationaryPoint& y, const ManifoldSpec& manifold, const Vec& end, const Mat& frame,
                     const Vec& velocity) {
    const double th = align_angle(manifold, end, y.coords);
    const Mat R = rotation_matrix(manifold, th);
    const Eigen::Index k = frame.cols();
    Mat A = y.unstable_projection * R * frame;
    Vec ct = frame.transpose() * velocity;
    if (ct.norm() == 0.0) throw Error(ErrorKind::SingularProjection, "zero velocity at the end point");
    ct.normalize();
    Mat S(k, k);
    S.topRows(k - 1) = A;
    S.row(k - 1) = ct.transpose();
    Mat An = A;
    for (Eigen::Index i = 0; i < An.rows(); ++i) An.row(i).normalize();
    Mat Sn = S;
    Sn.topRows(k - 1) = An;
    double dn = Sn.determinant();
    if (!std::isfinite(dn) || std::abs(dn) < 1e-8)
        throw Error(ErrorKind::SingularProjection, "projection determinant " + std::to_string(dn));
    Mat N = A.completeOrthogonalDecomposition().pseudoInverse();
    Mat C(k, k);
    C.col(0) = ct;
    C.rightCols(k - 1) = N;
    return C.determinant() > 0 ? 1 : -1;
}

namespace {

struct Seed {
    Vec a;
    double tau = 0.0;  // cut time
    double T = 0.0;    // total time (no cut) or time after the cut
    FlowPath path;     // reference path for node guesses
    double score = 0.0;
};

// Quasi-homogeneous start radii r^(rate_i / rate_min), so that rays spread evenly
// once the weakest direction reaches unit size.
Vec start_radii(const VectorField& field, const StationaryPoint& x, double r, double max_power) {
    const Eigen::Index k = x.unstable.cols();
    Vec radii = Vec::Constant(k, r);
    if (k < 2) return radii;
    Mat J = field.jacobian(x.coords);
    Vec rate(k);
    for (Eigen::Index i = 0; i < k; ++i) rate[i] = -x.unstable.col(i).dot(J * x.unstable.col(i));
    const double lo = rate.minCoeff();
    if (!(lo > 0)) return radii;
    for (Eigen::Index i = 0; i < k; ++i) radii[i] = std::pow(r, std::clamp(rate[i] / lo, 1.0, max_power));
    return radii;
}

struct Bvp {
    const VectorField& field;
    const ManifoldSpec& manifold;
    const StationaryPoint& x;
    const StationaryPoint& y;
    const CutSpec* cut;
    const CircleAction* action;
    int M = 1, c = 0;
    double T = 0.0;
    // Start offsets per unstable direction.
    Vec radii;
    FlowOptions flow;

    int d() const { return field.dim(); }
    int k() const { return static_cast<int>(x.unstable.cols()); }
    int ky() const { return static_cast<int>(y.unstable.cols()); }
    bool has_cut() const { return cut != nullptr; }
    int tau_col() const { return k(); }
    int node_col(int i) const { return k() + (has_cut() ? 1 : 0) + (i - 1) * d(); }
    int unknowns() const { return k() + (has_cut() ? 1 : 0) + (M - 1) * d(); }
    int rows() const { return 1 + (M - 1) * d() + (has_cut() ? 2 : 0) + ky(); }

    Vec start(const Vec& a) const { return manifold.project(x.coords + x.unstable * radii.cwiseProduct(a)); }
    Mat dstart(const Vec& a) const {
        const Vec w = x.coords + x.unstable * radii.cwiseProduct(a);
        Mat P(d(), d());
        const double h = 1e-6;
        for (int j = 0; j < d(); ++j) {
            Vec e = Vec::Unit(d(), j) * h;
            P.col(j) = (manifold.project(w + e) - manifold.project(w - e)) / (2 * h);
        }
        return P * x.unstable * radii.asDiagonal();
    }
    double duration(int i, double tau) const {
        if (!has_cut()) return T / M;
        return i <= c ? tau / c : T / (M - c);
    }
    Vec a_of(const Vec& u) const { return u.head(k()); }
    double tau_of(const Vec& u) const { return has_cut() ? u[tau_col()] : 0.0; }
    Vec node(const Vec& u, int i) const { return i == 0 ? start(a_of(u)) : Vec(u.segment(node_col(i), d())); }

    struct Eval {
        Vec F;
        Eigen::SparseMatrix<double> J;
        std::vector<FlowMap> segments;
        Mat dS;
        double theta = 0.0;
    };

    Eval evaluate(const Vec& u, bool jac) const {
        Eval e;
        const int D = d();
        e.F = Vec::Zero(rows());
        std::vector<Eigen::Triplet<double>> trip;
        const Vec a = a_of(u);
        const double tau = tau_of(u);
        e.F[0] = a.squaredNorm() - 1.0;
        if (jac) {
            for (int j = 0; j < k(); ++j) trip.emplace_back(0, j, 2 * a[j]);
            e.dS = dstart(a);
        }
        e.segments.resize(M);
        std::vector<Vec> z(M);
        for (int i = 1; i <= M; ++i) z[i - 1] = node(u, i - 1);
        parallel_for(static_cast<std::size_t>(M), [&](std::size_t s) {
            const int i = static_cast<int>(s) + 1;
            Mat frame = jac ? (i == 1 ? e.dS : Mat(Mat::Identity(D, D))) : Mat(D, 0);
            e.segments[s] = flow_map(field, manifold, z[s], frame, duration(i, tau), flow);
        });
        int row = 1;
        auto put = [&](int r0, int c0, const Mat& B) {
            for (Eigen::Index i = 0; i < B.rows(); ++i)
                for (Eigen::Index j = 0; j < B.cols(); ++j)
                    if (B(i, j) != 0.0) trip.emplace_back(r0 + static_cast<int>(i), c0 + static_cast<int>(j), B(i, j));
        };
        for (int i = 1; i < M; ++i) {
            const FlowMap& fm = e.segments[i - 1];
            e.F.segment(row, D) = fm.end - u.segment(node_col(i), D);
            if (jac) {
                put(row, i == 1 ? 0 : node_col(i - 1), fm.frame);
                put(row, node_col(i), -Mat::Identity(D, D));
                if (has_cut() && i <= c) put(row, tau_col(), Mat(-field.eval(fm.end) / c));
            }
            row += D;
        }
        if (has_cut()) {
            Vec zc = u.segment(node_col(c), D);
            cplx h = cut->eval(*action, zc);
            e.F[row] = h.real();
            e.F[row + 1] = h.imag();
            if (jac) put(row, node_col(c), cut->differential(*action, D));
            row += 2;
        }
        const FlowMap& last = e.segments[M - 1];
        e.theta = align_angle(manifold, last.end, y.coords);
        Mat R = rotation_matrix(manifold, e.theta);
        e.F.segment(row, ky()) = y.unstable_projection * (R * last.end - y.coords);
        if (jac && ky() > 0) put(row, M == 1 ? 0 : node_col(M - 1), Mat(y.unstable_projection * R * last.frame));
        if (jac) {
            e.J.resize(rows(), unknowns());
            e.J.setFromTriplets(trip.begin(), trip.end());
        }
        return e;
    }

    Vec initial(const Seed& s) const {
        Vec u = Vec::Zero(unknowns());
        u.head(k()) = s.a;
        if (has_cut()) u[tau_col()] = s.tau;
        double t = 0.0;
        for (int i = 1; i < M; ++i) {
            t += duration(i, s.tau);
            u.segment(node_col(i), d()) = sample_path(s.path, t);
        }
        return u;
    }

    static Vec sample_path(const FlowPath& p, double t) {
        auto it = std::lower_bound(p.t.begin(), p.t.end(), t);
        if (it == p.t.begin()) return p.x.front();
        if (it == p.t.end()) return p.x.back();
        std::size_t j = static_cast<std::size_t>(it - p.t.begin());
        double w = (t - p.t[j - 1]) / (p.t[j] - p.t[j - 1]);
        return (1 - w) * p.x[j - 1] + w * p.x[j];
    }

    // Levenberg-Marquardt on the square system; returns the final residual norm.
    double solve(Vec& u, int max_iter, double tol) const {
        Eval e = evaluate(u, true);
        double f = e.F.lpNorm<Eigen::Infinity>();
        double mu = 1e-4;
        for (int it = 0; it < max_iter && f > tol; ++it) {
            Eigen::SparseMatrix<double> JtJ = e.J.transpose() * e.J;
            Vec g = e.J.transpose() * e.F;
            Vec diag = JtJ.diagonal().cwiseMax(1e-14);
            bool accepted = false;
            while (mu < 1e12) {
                Eigen::SparseMatrix<double> A = JtJ;
                for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) += mu * diag[i];
                Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
                if (ldlt.info() != Eigen::Success) {
                    mu *= 10;
                    continue;
                }
                Vec delta = ldlt.solve(-g);
                Vec un = u + delta;
                double fn;
                try {
                    fn = evaluate(un, false).F.norm();
                } catch (const Error&) {
                    mu *= 10;
                    continue;
                }
                if (std::isfinite(fn) && fn < e.F.norm()) {
                    u = un;
                    mu = std::max(mu / 10, 1e-14);
                    accepted = true;
                    break;
                }
                mu *= 10;
            }
            if (!accepted) break;
            e = evaluate(u, true);
            f = e.F.lpNorm<Eigen::Infinity>();
        }
        return f;
    }
};

struct Solution {
    Vec a;
    double tau = 0.0, T = 0.0;
    Vec u;
    Bvp::Eval eval;
};

std::vector<Vec> sphere_directions(int k, int density) {
    std::vector<Vec> dirs;
    if (k == 1) {
        dirs.push_back(Vec::Constant(1, 1.0));
        dirs.push_back(Vec::Constant(1, -1.0));
        return dirs;
    }
    if (k == 2) {
        for (int j = 0; j < density; ++j) {
            double t = 2 * std::numbers::pi * (j + 0.5) / density;
            Vec v(2);
            v << std::cos(t), std::sin(t);
            dirs.push_back(v);
        }
        return dirs;
    }
    const double n = std::min(20000.0, 4.0 * std::pow(static_cast<double>(density), 0.5 * (k - 1)));
    const int m = 2 * ((k + 1) / 2);
    for (std::uint64_t i = 1; dirs.size() < static_cast<std::size_t>(n); ++i) {
        std::vector<double> h = halton(i, m);
        Vec v(k);
        for (int j = 0; j < k; j += 2) {
            double r = std::sqrt(-2.0 * std::log(std::max(h[j], 1e-300)));
            double th = 2 * std::numbers::pi * h[j + 1];
            v[j] = r * std::cos(th);
            if (j + 1 < k) v[j + 1] = r * std::sin(th);
        }
        if (v.norm() > 1e-12) dirs.push_back(v.normalized());
    }
    return dirs;
}

// Indices whose score is no larger than every neighbor's.
std::vector<std::size_t> local_minima(const std::vector<Vec>& dirs, const std::vector<double>& score, int k) {
    const std::size_t n = dirs.size();
    std::vector<std::size_t> out;
    if (k == 1) {
        for (std::size_t i = 0; i < n; ++i)
            if (std::isfinite(score[i])) out.push_back(i);
        return out;
    }
    if (k == 2) {
        for (std::size_t i = 0; i < n; ++i) {
            double l = score[(i + n - 1) % n], r = score[(i + 1) % n];
            if (std::isfinite(score[i]) && score[i] <= l && score[i] <= r) out.push_back(i);
        }
        return out;
    }
    const std::size_t K = static_cast<std::size_t>(2 * k + 2);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(score[i])) continue;
        std::vector<std::pair<double, std::size_t>> nb;
        nb.reserve(n);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) nb.emplace_back(-dirs[i].dot(dirs[j]), j);
        std::partial_sort(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(std::min(K, nb.size())), nb.end());
        bool minimum = true;
        for (std::size_t q = 0; q < std::min(K, nb.size()) && minimum; ++q) {
            std::size_t j = nb[q].second;
            if (score[j] < score[i] || (score[j] == score[i] && j < i)) minimum = false;
        }
        if (minimum) out.push_back(i);
    }
    return out;
}

Vec inward_coordinates(const ManifoldSpec& manifold, const StationaryPoint& x) {
    if (!manifold.has_boundary() || manifold.boundary_gap(x.coords) > 1e-8) return Vec();
    return x.unstable.transpose() * manifold.outward_normal(x.coords);
}

bool passes_near(const ManifoldSpec& manifold, const std::vector<Vec>& samples, const Vec& p, double radius) {
    for (const auto& s : samples)
        if (manifold.distance(p, s) < radius) return true;
    return false;
}

struct ScanRecord {
    double dist = std::numeric_limits<double>::infinity();
    double t_dist = 0.0;
    double hmin = std::numeric_limits<double>::infinity();
    double t_h = 0.0;
    FlowPath path;
};

std::vector<Seed> scan_seeds(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                             const StationaryPoint& y, const std::vector<StationaryPoint>& others, const CutSpec* cut,
                             const ShootingOptions& o) {
    const int k = static_cast<int>(x.unstable.cols());
    const int ky = static_cast<int>(y.unstable.cols());
    // Only the weakest unstable directions are scanned; the solve uses all of them.
    const int ks = std::min(k, std::max(1, o.max_scan_dim));
    std::vector<Vec> dirs = sphere_directions(ks, o.density);
    auto embed = [&](const Vec& d) {
        Vec a = Vec::Zero(k);
        a.head(ks) = d;
        return a;
    };
    Vec inward = inward_coordinates(manifold, x);
    const Vec radii = start_radii(field, x, o.r_shoot, o.max_distortion);
    FlowOptions scan_flow = o.flow;
    scan_flow.tolerance = std::max(o.flow.tolerance, 1e-8);
    const double inf = std::numeric_limits<double>::infinity();

    auto trace = [&](const Vec& a, bool fine = false) {
        ScanRecord r;
        if (inward.size() > 0 && radii.cwiseProduct(a).dot(inward) > -1e-3 * radii.minCoeff()) return r;
        Vec z0 = manifold.project(x.coords + x.unstable * radii.cwiseProduct(a));
        try {
            r.path = integrate_flow(field, manifold, z0, o.t_max, fine ? o.flow : scan_flow, [&](double t, const Vec& z) {
                double dy = manifold.distance(y.coords, z);
                if (dy < r.dist) {
                    r.dist = dy;
                    r.t_dist = t;
                }
                if (dy < 2 * o.capture_radius || z.norm() > o.escape_radius) return true;
                for (const auto& p : others)
                    if (manifold.distance(p.coords, z) < o.capture_radius) return true;
                return false;
            });
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::BlowUp) throw;
            r.path = FlowPath{};
            r.dist = inf;
        }
        if (cut && !r.path.t.empty()) {
            for (std::size_t j = 0; j < r.path.t.size() && r.path.t[j] <= r.t_dist; ++j) {
                double hv = std::abs(cut->eval(manifold.action, r.path.x[j]));
                if (hv < r.hmin) {
                    r.hmin = hv;
                    r.t_h = r.path.t[j];
                }
            }
        }
        return r;
    };
    auto objective = [&](const ScanRecord& r) {
        if (r.path.t.empty()) return inf;
        return (ky > 0 ? r.dist : 0.0) + (cut ? r.hmin : 0.0);
    };

    std::vector<ScanRecord> rec(dirs.size());
    parallel_for(dirs.size(), [&](std::size_t i) { rec[i] = trace(embed(dirs[i])); });
    std::vector<double> score(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) score[i] = objective(rec[i]);
    std::vector<std::size_t> mins = local_minima(dirs, score, ks);
    std::sort(mins.begin(), mins.end(), [&](std::size_t a, std::size_t b) {
        return score[a] != score[b] ? score[a] < score[b] : a < b;
    });
    if (mins.size() > static_cast<std::size_t>(o.max_candidates)) mins.resize(static_cast<std::size_t>(o.max_candidates));

    // Sharpen each local minimum: closest approach depends on the ray through a power law.
    std::vector<Vec> best(mins.size());
    std::vector<ScanRecord> best_rec(mins.size());
    const bool refine = ks >= 2 && (ky > 0 || cut);
    const double spacing =
        ks == 2 ? 2 * std::numbers::pi / o.density
                : 2 * std::numbers::pi * std::pow(static_cast<double>(dirs.size()), -1.0 / (ks - 1));
    parallel_for(mins.size(), [&](std::size_t c) {
        Vec a0 = dirs[mins[c]];
        best[c] = embed(a0);
        best_rec[c] = rec[mins[c]];
        if (!refine) return;
        Eigen::HouseholderQR<Mat> qr(a0);
        Mat B = (qr.householderQ() * Mat::Identity(ks, ks)).rightCols(ks - 1);
        Vec w = Vec::Zero(ks - 1);
        auto dir = [&](const Vec& ww) { return embed((a0 + B * ww).normalized()); };
        for (int cycle = 0; cycle < (ks == 2 ? 1 : 3); ++cycle)
            for (int j = 0; j < ks - 1; ++j) {
                auto f = [&](double v) {
                    Vec ww = w;
                    ww[j] = v;
                    return objective(trace(dir(ww), true));
                };
                auto res = boost::math::tools::brent_find_minima(f, w[j] - spacing, w[j] + spacing, 40);
                if (res.second < objective(best_rec[c])) w[j] = res.first;
                best[c] = dir(w);
                best_rec[c] = trace(best[c], true);
            }
        // On a circle of rays the closest approach has a cusp at the orbit; golden-section
        // search keeps bracketing it where parabolic steps stall.
        if (ks != 2) return;
        const std::size_t n = dirs.size(), i = mins[c];
        const double base = std::atan2(dirs[i][1], dirs[i][0]);
        auto at = [&](double th) {
            Vec d(2);
            d << std::cos(th), std::sin(th);
            return embed(d);
        };
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double lo = base - spacing, hi = base + spacing;
        double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
        ScanRecord r1 = trace(at(m1), true), r2 = trace(at(m2), true);
        for (int it = 0; it < 72; ++it) {
            if (objective(r1) <= objective(r2)) {
                hi = m2;
                m2 = m1;
                r2 = std::move(r1);
                m1 = hi - g * (hi - lo);
                r1 = trace(at(m1), true);
            } else {
                lo = m1;
                m1 = m2;
                r1 = std::move(r2);
                m2 = lo + g * (hi - lo);
                r2 = trace(at(m2), true);
            }
        }
        for (auto* r : {&r1, &r2})
            if (objective(*r) < objective(best_rec[c])) {
                best[c] = at(r == &r1 ? m1 : m2);
                best_rec[c] = std::move(*r);
            }
    });

    std::vector<Seed> seeds;
    for (std::size_t c = 0; c < mins.size(); ++c) {
        const ScanRecord& r = best_rec[c];
        if (r.path.t.empty() || r.dist > 0.5) continue;
        Seed s;
        s.a = best[c];
        s.score = objective(r);
        s.path = r.path;
        double t_end = std::max(r.t_dist, 1.0);
        if (cut) {
            s.tau = std::max(r.t_h, 0.2);
            s.T = std::max(t_end - s.tau, 1.0);
        } else {
            s.T = t_end;
        }
        seeds.push_back(std::move(s));
    }
    return seeds;
}

Bvp make_bvp(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
             const StationaryPoint& y, const CutSpec* cut, const ShootingOptions& o, const Seed& s) {
    Bvp b{field, manifold, x, y, cut, &manifold.action};
    b.radii = start_radii(field, x, o.r_shoot, o.max_distortion);
    b.flow = o.flow;
    const double rate = std::max({max_rate(x), max_rate(y), 1e-3});
    const double total = s.T + (cut ? s.tau : 0.0);
    b.M = std::max(cut ? 2 : 1, static_cast<int>(std::ceil(total * rate / o.segment_scale)));
    if (cut) b.c = std::clamp(static_cast<int>(std::lround(b.M * s.tau / total)), 1, b.M - 1);
    b.T = s.T;
    return b;
}

// Time at which a path first gets within rho of y (or its closest approach).
double arrival_time(const ManifoldSpec& manifold, const FlowPath& p, const Vec& y, double rho) {
    double best = std::numeric_limits<double>::infinity(), tb = p.t.back();
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        double d = manifold.distance(y, p.x[i]);
        if (d <= rho) return p.t[i];
        if (d < best) {
            best = d;
            tb = p.t[i];
        }
    }
    return tb;
}

FlowPath solution_path(const Bvp& b, const Vec& u) {
    FlowPath out;
    double t0 = 0.0;
    for (int i = 1; i <= b.M; ++i) {
        FlowPath seg = integrate_flow(b.field, b.manifold, b.node(u, i - 1), b.duration(i, b.tau_of(u)), b.flow);
        for (std::size_t j = (i == 1 ? 0 : 1); j < seg.t.size(); ++j) {
            out.t.push_back(t0 + seg.t[j]);
            out.x.push_back(seg.x[j]);
        }
        t0 += b.duration(i, b.tau_of(u));
    }
    return out;
}

std::optional<Solution> refine(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                               const StationaryPoint& y, const CutSpec* cut, const ShootingOptions& o, Seed seed) {
    const double tol = std::max(o.residual_tol, 100 * o.flow.tolerance);
    for (int pass = 0; pass < 2; ++pass) {
        Bvp b = make_bvp(field, manifold, x, y, cut, o, seed);
        Vec u = b.initial(seed);
        double f;
        try {
            f = b.solve(u, o.max_newton, tol);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::BlowUp) throw;
            return std::nullopt;
        }
        if (!(f <= tol)) return std::nullopt;
        FlowPath path = solution_path(b, u);
        if (pass == 0) {
            // Canonical end time: first arrival within a fixed radius of y.
            const double rho = std::min(0.02, 0.5 * o.end_radius);
            double t_arr = arrival_time(manifold, path, y.coords, rho);
            Seed next = seed;
            next.a = b.a_of(u);
            next.path = path;
            if (cut) {
                next.tau = b.tau_of(u);
                next.T = std::max(t_arr - next.tau, 0.5);
            } else {
                next.T = std::max(t_arr, 0.5);
            }
            seed = next;
            continue;
        }
        Solution s;
        s.a = b.a_of(u);
        s.tau = b.tau_of(u);
        s.T = b.T;
        s.u = u;
        s.eval = b.evaluate(u, true);
        return s;
    }
    return std::nullopt;
}

Trajectory finish(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                  const StationaryPoint& y, const std::vector<StationaryPoint>& others, const CutSpec* cut,
                  const ShootingOptions& o, const Solution& s) {
    Seed seed;
    seed.a = s.a;
    seed.tau = s.tau;
    seed.T = s.T;
    Bvp b = make_bvp(field, manifold, x, y, cut, o, seed);
    FlowPath path = solution_path(b, s.u);
    Trajectory tr;
    tr.source = x.id;
    tr.target = y.id;
    tr.shooting = s.a;
    tr.capture_time = path.t.back();
    tr.cut_time = s.tau;
    tr.t = path.t;
    tr.samples = path.x;
    if (manifold.distance(y.coords, path.x.back()) > o.end_radius) tr.sign = 0;
    for (const auto& p : others)
        if (passes_near(manifold, path.x, p.coords, o.capture_radius))
            throw Error(ErrorKind::CaptureAmbiguity, "orbit " + x.id + " -> " + y.id + " passes within " +
                                                          std::to_string(o.capture_radius) + " of " + p.id);
    // Transport the unstable frame of x segment by segment.
    std::vector<Mat> B(b.M + 1), R(b.M + 1);
    B[0] = x.unstable;
    for (int i = 1; i <= b.M; ++i) {
        const FlowMap& fm = s.eval.segments[i - 1];
        Mat moved = (i == 1) ? Mat(fm.frame) : Mat(fm.frame * B[i - 1]);
        B[i] = qr_positive(moved, &R[i]);
    }
    const Vec end = s.eval.segments[b.M - 1].end;
    const Vec vel = -field.eval(end);
    if (!cut) {
        tr.sign = orientation_sign(y, manifold, end, B[b.M], vel);
        return tr;
    }
    const double th = align_angle(manifold, end, y.coords);
    Mat A = y.unstable_projection * rotation_matrix(manifold, th) * B[b.M];
    const int k = static_cast<int>(B[b.M].cols());
    Eigen::JacobiSVD<Mat> svd(A.rows() > 0 ? A : Mat::Zero(1, k), Eigen::ComputeFullV);
    Mat V = svd.matrixV();
    Mat ker = V.rightCols(2);
    Mat N = A.rows() > 0 ? Mat(A.completeOrthogonalDecomposition().pseudoInverse()) : Mat(k, 0);
    Mat C(k, k);
    C.leftCols(2) = ker;
    C.rightCols(k - 2) = N;
    if (C.determinant() < 0) ker.col(1) = -ker.col(1);
    Mat S = Mat::Identity(k, k);
    for (int i = b.c + 1; i <= b.M; ++i) S = R[i] * S;
    Mat w = S.triangularView<Eigen::Upper>().solve(ker);
    Mat tang = B[b.c] * w;
    for (int j = 0; j < 2; ++j) tang.col(j).normalize();
    Vec zc = b.node(s.u, b.c);
    Mat Dh = cut->differential(manifold.action, field.dim()) * tang;
    double det = Dh.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-8)
        throw Error(ErrorKind::NonTransverseCut, "cut determinant " + std::to_string(det) + " on " + x.id + " -> " +
                                                     y.id + " at |h| = " +
                                                     std::to_string(std::abs(cut->eval(manifold.action, zc))));
    tr.sign = det > 0 ? 1 : -1;
    return tr;
}

std::vector<Trajectory> shoot(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                              const StationaryPoint& y, const std::vector<StationaryPoint>& others, const CutSpec* cut,
                              const ShootingOptions& o) {
    std::vector<Seed> seeds = scan_seeds(field, manifold, x, y, others, cut, o);
    std::vector<std::optional<Solution>> sols(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) { sols[i] = refine(field, manifold, x, y, cut, o, seeds[i]); });
    std::vector<Solution> unique;
    Vec inward = inward_coordinates(manifold, x);
    const Vec radii = start_radii(field, x, o.r_shoot, o.max_distortion);
    for (auto& s : sols) {
        if (!s) continue;
        if (inward.size() > 0 && radii.cwiseProduct(s->a).dot(inward) > -1e-6 * radii.minCoeff()) continue;
        if (cut && s->tau <= 0.0) continue;
        bool dup = false;
        for (const auto& q : unique) dup = dup || (q.a - s->a).norm() < 1e-6;
        if (!dup) unique.push_back(std::move(*s));
    }
    std::sort(unique.begin(), unique.end(), [](const Solution& p, const Solution& q) {
        for (Eigen::Index i = 0; i < p.a.size(); ++i)
            if (p.a[i] != q.a[i]) return p.a[i] < q.a[i];
        return false;
    });
    std::vector<Trajectory> out;
    for (const auto& s : unique) {
        Trajectory t = finish(field, manifold, x, y, others, cut, o, s);
        if (t.sign != 0) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

std::vector<Trajectory> find_connecting_orbits(const VectorField& field, const ManifoldSpec& manifold,
                                               const StationaryPoint& x, const StationaryPoint& y,
                                               const std::vector<StationaryPoint>& others,
                                               const ShootingOptions& options) {
    if (x.flow_index - y.flow_index != 1)
        throw Error(ErrorKind::Precondition, "index gap " + std::to_string(x.flow_index - y.flow_index) + " from " +
                                                 x.id + " to " + y.id + " (expected 1)");
    return shoot(field, manifold, x, y, others, nullptr, options);
}

CutResult cut_count(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                    const StationaryPoint& y, const std::vector<StationaryPoint>& others, const CutSpec& cut,
                    const ShootingOptions& options) {
    if (x.flow_index - y.flow_index != 2)
        throw Error(ErrorKind::Precondition, "index gap " + std::to_string(x.flow_index - y.flow_index) + " from " +
                                                 x.id + " to " + y.id + " (expected 2)");
    check_cut_equivariance(cut, manifold.action, manifold.ambient_dim);
    CutResult r;
    try {
        r.crossings = shoot(field, manifold, x, y, others, &cut, options);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonTransverseCut) throw;
        // One retry with a rotated reference phase.
        CutSpec turned = cut;
        for (auto& c : turned.coefficients) c *= std::polar(1.0, 0.1);
        r.crossings = shoot(field, manifold, x, y, others, &turned, options);
    }
    for (const auto& t : r.crossings) r.count += t.sign;
    return r;
}

std::map<std::string, StationaryPoint> orient_boundary_points(const VectorField& field, const ManifoldSpec& manifold,
                                                              std::vector<StationaryPoint>& points) {
    std::map<std::string, StationaryPoint> out;
    if (!manifold.has_boundary()) return out;
    for (auto& p : points) {
        if (p.cls == PointClass::Interior) continue;
        ManifoldSpec bm = boundary_manifold(manifold, p.coords);
        StationaryPoint q = analyze_point(field, bm, p.coords);
        q.id = p.id;
        Mat basis = q.unstable;
        if (p.cls == PointClass::BoundaryUnstable) {
            Vec n = manifold.outward_normal(p.coords);
            n = p.tangent * (p.tangent.transpose() * n);
            n -= q.unstable * (q.unstable.transpose() * n);
            basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
            basis.col(basis.cols() - 1) = n.normalized();
        }
        reorient_unstable(p, basis);
        out.emplace(p.id, std::move(q));
    }
    return out;
}

namespace {

bool same_stratum(const ManifoldSpec& a, const ManifoldSpec& b) { return a.pinned == b.pinned; }

}  // namespace

CountLedger count_matrix(const VectorField& field, const ManifoldSpec& manifold, std::vector<StationaryPoint>& points,
                         const CountOptions& options) {
    CountLedger ledger;
    auto bpoints = orient_boundary_points(field, manifold, points);
    auto others_of = [](const std::vector<StationaryPoint>& all, const std::string& a, const std::string& b) {
        std::vector<StationaryPoint> o;
        for (const auto& p : all)
            if (p.id != a && p.id != b) o.push_back(p);
        return o;
    };
    const CutSpec* cut = options.cut_counts ? &options.cut : nullptr;
    // Interior moduli: sources interior or boundary-unstable, targets interior or boundary-stable.
    for (const auto& x : points) {
        if (x.cls == PointClass::BoundaryStable) continue;
        for (const auto& y : points) {
            if (y.cls == PointClass::BoundaryUnstable) continue;
            const int gap = x.flow_index - y.flow_index;
            if (gap == 1) {
                auto orbits = find_connecting_orbits(field, manifold, x, y, others_of(points, x.id, y.id),
                                                     options.shooting);
                int total = 0;
                for (auto& t : orbits) {
                    total += t.sign;
                    ledger.trajectories.push_back(std::move(t));
                }
                ledger.n[{x.id, y.id}] = total;
            } else if (gap == 2 && cut) {
                auto res = cut_count(field, manifold, x, y, others_of(points, x.id, y.id), *cut, options.shooting);
                for (auto& t : res.crossings) ledger.trajectories.push_back(std::move(t));
                ledger.m[{x.id, y.id}] = res.count;
            }
        }
    }
    // Boundary moduli from boundary-stable sources.
    std::vector<StationaryPoint> blist;
    for (const auto& [id, q] : bpoints) blist.push_back(q);
    for (const auto& x : points) {
        if (x.cls != PointClass::BoundaryStable) continue;
        const StationaryPoint& bx = bpoints.at(x.id);
        ManifoldSpec bm = boundary_manifold(manifold, x.coords);
        for (const auto& y : points) {
            if (y.cls == PointClass::Interior || y.id == x.id) continue;
            if (!same_stratum(bm, boundary_manifold(manifold, y.coords))) continue;
            const StationaryPoint& by = bpoints.at(y.id);
            const int gap = bx.flow_index - by.flow_index;
            std::vector<StationaryPoint> others;
            for (const auto& q : blist)
                if (q.id != x.id && q.id != y.id && same_stratum(bm, boundary_manifold(manifold, q.coords)))
                    others.push_back(q);
            if (gap == 1) {
                auto orbits = find_connecting_orbits(field, bm, bx, by, others, options.shooting);
                int total = 0;
                for (auto& t : orbits) {
                    t.boundary = true;
                    total += t.sign;
                    ledger.trajectories.push_back(std::move(t));
                }
                ledger.nbar[{x.id, y.id}] = total;
            } else if (gap == 2 && cut) {
                auto res = cut_count(field, bm, bx, by, others, *cut, options.shooting);
                for (auto& t : res.crossings) {
                    t.boundary = true;
                    ledger.trajectories.push_back(std::move(t));
                }
                ledger.mbar[{x.id, y.id}] = res.count;
            }
        }
    }
    return ledger;
}

std::string trajectory_csv(const std::vector<Trajectory>& trajectories) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "source,target,boundary,sign,shooting,capture_time,cut_time\n";
    for (const auto& t : trajectories) {
        os << t.source << ',' << t.target << ',' << (t.boundary ? 1 : 0) << ',' << t.sign << ',';
        for (Eigen::Index i = 0; i < t.shooting.size(); ++i) os << (i ? " " : "") << t.shooting[i];
        os << ',' << t.capture_time << ',' << t.cut_time << '\n';
    }
    return os.str();
}

}  // namespace morsecon

