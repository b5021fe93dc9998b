#include "morsecon/truncation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/quadrature/gauss.hpp>

namespace morsecon {

namespace {

using Gauss64 = boost::math::quadrature::gauss<double, 64>;

double exp_bump(double t) { return t > 0.0 && t < 1.0 ? std::exp(-1.0 / (t * (1.0 - t))) : 0.0; }

double bump_raw(BumpKind kind, double t) {
    if (kind == BumpKind::Polynomial) return t > 0.0 && t < 1.0 ? 30.0 * t * t * (1 - t) * (1 - t) : 0.0;
    return exp_bump(t);
}

double bump_norm(BumpKind kind) {
    static const double exp_norm = Gauss64::integrate(exp_bump, 0.0, 1.0);
    return kind == BumpKind::Polynomial ? 1.0 : exp_norm;
}

// Smooth step: 1 on [0, 1], 0 on [2, inf).
double psi(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double dpsi(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

double step(double r) {
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    const double a = psi(2.0 - r), b = psi(r - 1.0);
    return a / (a + b);
}

double dstep(double r) {
    if (r <= 1.0 || r >= 2.0) return 0.0;
    const double a = psi(2.0 - r), b = psi(r - 1.0);
    const double da = -dpsi(2.0 - r), db = dpsi(r - 1.0);
    return (da * b - a * db) / ((a + b) * (a + b));
}

// Point on the radius-r sphere of R^d from a quasi-random index.
Vec sphere_point(std::uint64_t i, int d, double r) {
    const int m = 2 * ((d + 1) / 2);
    std::vector<double> h = halton(i, m);
    Vec v(d);
    for (int j = 0; j < d; j += 2) {
        double rr = std::sqrt(-2.0 * std::log(std::max(h[j], 1e-300)));
        double th = 2 * std::numbers::pi * h[j + 1];
        v[j] = rr * std::cos(th);
        if (j + 1 < d) v[j + 1] = rr * std::sin(th);
    }
    return r * v / std::max(v.norm(), 1e-300);
}

bool lex_less(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i)
        if (a[i] != b[i]) return a[i] < b[i];
    return a.size() < b.size();
}

// Round-off entries are cleared so that invariant coordinate subspaces stay exactly invariant.
void orient_frame(StationaryPoint& p) {
    if (p.unstable.cols() == 0) return;
    Mat B = p.unstable.unaryExpr([](double v) { return std::abs(v) < 1e-13 ? 0.0 : v; });
    Eigen::HouseholderQR<Mat> qr(B);
    Mat R = qr.matrixQR().topRows(B.cols()).triangularView<Eigen::Upper>();
    B = qr.householderQ() * Mat::Identity(B.rows(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j)
        if (R(j, j) < 0) B.col(j) *= -1.0;
    B = B.unaryExpr([](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; });
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        Eigen::Index r;
        B.col(j).cwiseAbs().maxCoeff(&r);
        if (B(r, j) < 0) B.col(j) *= -1.0;
    }
    reorient_unstable(p, B);
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

}  // namespace

TruncationFamily TruncationFamily::standard(int modes, int first, int last) {
    TruncationFamily f;
    for (int n = 1; n <= modes; ++n) f.eigenvalues.push_back((n % 2 ? 1.0 : -1.0) * ((n + 1) / 2));
    for (int i = first; i <= last; ++i) {
        f.cutoffs.push_back(i + 0.5);
        f.half_widths.push_back(0.25);
    }
    f.validate();
    return f;
}

void TruncationFamily::validate() const {
    if (cutoffs.size() != half_widths.size()) throw Error(ErrorKind::Precondition, "one half-width per cutoff");
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        const double lo = cutoffs[i] - half_widths[i], hi = cutoffs[i] + half_widths[i];
        if (!(half_widths[i] > 0) || lo <= 1.0)
            throw Error(ErrorKind::Precondition, "cutoff interval must be positive and lie above 1");
        if (i > 0 && lo <= cutoffs[i - 1] + half_widths[i - 1])
            throw Error(ErrorKind::Precondition, "cutoff intervals must increase and be disjoint");
        for (double e : eigenvalues)
            if (std::abs(e) >= lo && std::abs(e) <= hi)
                throw Error(ErrorKind::Precondition, "cutoff interval around " + fmt(cutoffs[i]) +
                                                         " contains the eigenvalue " + fmt(e));
    }
}

std::vector<int> TruncationFamily::window(double lambda) const {
    std::vector<int> out;
    for (int n = 0; n < ambient_dim(); ++n)
        if (std::abs(eigenvalues[n]) < lambda) out.push_back(n);
    return out;
}

int TruncationFamily::negative_dim(double lambda) const {
    int k = 0;
    for (double e : eigenvalues)
        if (e < 0 && std::abs(e) < lambda) ++k;
    return k;
}

double TruncationFamily::beta(double theta) const { return bump_raw(bump, theta) / bump_norm(bump); }

double TruncationFamily::beta_integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return Gauss64::integrate([this](double s) { return beta(s); }, 0.0, t);
}

double TruncationFamily::cutoff_bump(std::size_t i, double lambda) const {
    const double u = (lambda - cutoffs[i]) / half_widths[i];
    if (std::abs(u) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

Vec sharp_weights(const TruncationFamily& family, double lambda) {
    if (!(lambda > 0)) throw Error(ErrorKind::Precondition, "cutoff must be positive");
    Vec w = Vec::Zero(family.ambient_dim());
    for (int n : family.window(lambda)) w[n] = 1.0;
    return w;
}

Vec smoothed_weights(const TruncationFamily& family, double lambda) {
    if (!(lambda > 1)) throw Error(ErrorKind::Precondition, "smoothed projection needs lambda > 1");
    double sb = 0.0;
    for (std::size_t i = 0; i < family.cutoffs.size(); ++i) sb += family.cutoff_bump(i, lambda);
    Vec sharp = sharp_weights(family, lambda);
    Vec w(family.ambient_dim());
    for (int n = 0; n < family.ambient_dim(); ++n) {
        const double prel = family.beta_integral(lambda - std::abs(family.eigenvalues[n]));
        w[n] = sb * sharp[n] + (1.0 - sb) * prel;
    }
    return w;
}

Vec sharp_projection(const TruncationFamily& family, double lambda, const Vec& x) {
    return sharp_weights(family, lambda).cwiseProduct(x);
}

Vec smoothed_projection(const TruncationFamily& family, double lambda, const Vec& x) {
    return smoothed_weights(family, lambda).cwiseProduct(x);
}

ToyNonlinearity ToyNonlinearity::zero(const TruncationFamily& family) {
    ToyNonlinearity c;
    for (double e : family.eigenvalues) c.weights.push_back(1.0 / (1.0 + std::abs(e)));
    return c;
}

ToyNonlinearity ToyNonlinearity::standard(const TruncationFamily& family) {
    ToyNonlinearity c = zero(family);
    const int N = family.ambient_dim();
    if (N < 2) throw Error(ErrorKind::Precondition, "the toy model needs two core modes");
    const auto& w = c.weights;
    c.scale = 1.0 / (c.epsilon * w[0] * w[0] * w[0]);
    auto add = [&](int k, int n, int m, double a) {
        std::set<std::tuple<int, int, int>> perms;
        std::array<int, 3> t{k, n, m};
        std::sort(t.begin(), t.end());
        do perms.insert({t[0], t[1], t[2]});
        while (std::next_permutation(t.begin(), t.end()));
        for (auto [i, j, l] : perms) c.terms.push_back({i, j, l, c.epsilon * w[i] * w[j] * w[l] * a});
    };
    add(0, 0, 0, 1.0);
    add(0, 1, 1, -0.35);
    for (int k = 2; k < N; ++k) {
        if (family.eigenvalues[k] < 0) continue;
        add(k, 0, 0, 0.1 * std::cos(1.7 * k + 0.4));
        add(k, 1, 1, 0.1 * std::sin(2.3 * k + 1.1));
        add(k, 0, 1, 0.06 * std::cos(0.9 * k + 0.3));
    }
    return c;
}

Vec ToyNonlinearity::eval(const Vec& x) const {
    Vec out = Vec::Zero(x.size());
    for (const auto& t : terms) out[t.k] += scale * t.s * x[t.n] * x[t.m];
    if (linear.size()) out += linear * x;
    return out;
}

Mat ToyNonlinearity::jacobian(const Vec& x) const {
    Mat J = Mat::Zero(x.size(), x.size());
    for (const auto& t : terms) {
        J(t.k, t.n) += scale * t.s * x[t.m];
        J(t.k, t.m) += scale * t.s * x[t.n];
    }
    if (linear.size()) J += linear;
    return J;
}

void ToyNonlinearity::validate() const {
    const int N = static_cast<int>(weights.size());
    for (const auto& t : terms) {
        if (t.k < 0 || t.n < 0 || t.m < 0 || t.k >= N || t.n >= N || t.m >= N)
            throw Error(ErrorKind::Precondition, "quadratic term outside the mode range");
        const double bound = epsilon * weights[t.k] * weights[t.n] * weights[t.m];
        if (std::abs(t.s) > bound * (1 + 1e-12))
            throw Error(ErrorKind::Precondition, "coefficient of modes " + std::to_string(t.n) + "," +
                                                     std::to_string(t.m) + " feeding mode " + std::to_string(t.k) +
                                                     " exceeds the decay bound " + fmt(bound));
    }
    if (linear.size() && (linear.rows() != N || linear.cols() != N))
        throw Error(ErrorKind::ShapeMismatch, "linear perturbation has the wrong shape");
}

bool ToyNonlinearity::is_gradient() const {
    if (linear.size()) return false;
    std::map<std::tuple<int, int, int>, double> s;
    for (const auto& t : terms) s[{t.k, t.n, t.m}] += t.s;
    for (const auto& [key, v] : s) {
        auto [k, n, m] = key;
        for (auto perm : {std::tuple{n, k, m}, std::tuple{m, n, k}, std::tuple{k, m, n}}) {
            auto it = s.find(perm);
            if (it == s.end() || std::abs(it->second - v) > 1e-15 * std::max(1.0, std::abs(v))) return false;
        }
    }
    return true;
}

double ToyNonlinearity::potential(const Vec& x) const {
    double p = 0.0;
    for (const auto& t : terms) p += t.s * x[t.k] * x[t.n] * x[t.m];
    return scale * p / 3.0;
}

double ToyNonlinearity::decay_ratio(int M, double R, std::size_t samples) const {
    const int N = static_cast<int>(weights.size());
    double w2 = 0.0, tail2 = 0.0;
    for (int n = 0; n < N; ++n) {
        w2 += weights[n] * weights[n];
        if (n >= M) tail2 += weights[n] * weights[n];
    }
    const double envelope = scale * epsilon * w2 * R * R * std::sqrt(tail2);
    double worst = 0.0;
    for (std::size_t i = 1; i <= samples; ++i) {
        Vec x = sphere_point(i, N, R);
        Vec cx = eval(x);
        if (linear.size()) cx -= linear * x;
        const double tail = M < N ? cx.tail(N - M).norm() : 0.0;
        worst = std::max(worst, envelope > 0 ? tail / envelope : (tail > 0 ? INFINITY : 0.0));
    }
    return worst;
}

TruncatedField::TruncatedField(const TruncationFamily& family, const ToyNonlinearity& c, double lambda)
    : ambient_(family.ambient_dim()), lambda_(lambda), modes_(family.window(lambda)), scale_(c.scale) {
    const int d = dim();
    Vec w = smoothed_weights(family, lambda);
    eig_.resize(d);
    proj_.resize(d);
    std::vector<int> local(ambient_, -1);
    for (int i = 0; i < d; ++i) {
        local[modes_[i]] = i;
        eig_[i] = family.eigenvalues[modes_[i]];
        proj_[i] = w[modes_[i]];
    }
    for (const auto& t : c.terms) {
        if (local[t.k] < 0 || local[t.n] < 0 || local[t.m] < 0) continue;
        terms_.push_back({local[t.k], local[t.n], local[t.m], t.s * proj_[local[t.k]]});
    }
    if (c.linear.size()) {
        linear_.resize(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) linear_(i, j) = proj_[i] * c.linear(modes_[i], modes_[j]);
    }
}

Vec TruncatedField::eval(const Vec& y) const {
    Vec out = eig_.cwiseProduct(y);
    for (const auto& t : terms_) out[t.k] += scale_ * t.s * y[t.n] * y[t.m];
    if (linear_.size()) out += linear_ * y;
    return out;
}

Mat TruncatedField::jacobian(const Vec& y) const {
    Mat J = eig_.asDiagonal();
    for (const auto& t : terms_) {
        J(t.k, t.n) += scale_ * t.s * y[t.m];
        J(t.k, t.m) += scale_ * t.s * y[t.n];
    }
    if (linear_.size()) J += linear_;
    return J;
}

Vec TruncatedField::embed(const Vec& y) const {
    Vec x = Vec::Zero(ambient_);
    for (int i = 0; i < dim(); ++i) x[modes_[i]] = y[i];
    return x;
}

Vec TruncatedField::restrict(const Vec& x) const {
    Vec y(dim());
    for (int i = 0; i < dim(); ++i) y[i] = x[modes_[i]];
    return y;
}

std::vector<StationaryPoint> truncated_points(const TruncatedField& field, const TruncationOptions& o) {
    const int d = field.dim();
    const int core = std::min(d, o.core_modes);
    StationaryOptions so;
    so.seeds = o.random_seeds;
    so.tol_hyp = o.tol_hyp;
    if (core > 0) {
        std::size_t total = 1;
        for (int a = 0; a < core; ++a) total *= static_cast<std::size_t>(o.core_grid);
        for (std::size_t i = 0; i < total; ++i) {
            Vec s = Vec::Zero(d);
            std::size_t r = i;
            for (int a = 0; a < core; ++a) {
                const int g = static_cast<int>(r % static_cast<std::size_t>(o.core_grid));
                r /= static_cast<std::size_t>(o.core_grid);
                s[a] = o.core_grid > 1 ? -o.R + 2 * o.R * g / (o.core_grid - 1) : 0.0;
            }
            so.extra_seeds.push_back(s);
        }
    }
    auto found = find_stationary_points(field, full_space(d, o.R), so).points;
    std::vector<StationaryPoint> pts;
    for (auto& p : found)
        if (p.coords.norm() <= o.R) pts.push_back(std::move(p));
    std::sort(pts.begin(), pts.end(), [](const StationaryPoint& a, const StationaryPoint& b) {
        if (a.flow_index != b.flow_index) return a.flow_index < b.flow_index;
        return lex_less(a.coords, b.coords);
    });
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i].id = "p" + std::to_string(i);
        orient_frame(pts[i]);
    }
    return pts;
}

Rational swf_grading(const StationaryPoint& p, const TruncationFamily& family, double lambda, const Rational& n_shift) {
    return Rational(p.flow_index - family.negative_dim(lambda)) - 2 * n_shift;
}

PairingTable pair_points(const TruncatedField& field, const std::vector<StationaryPoint>& points,
                         const std::vector<Rational>& degrees, const TruncatedField& ambient_field,
                         const std::vector<StationaryPoint>& ambient, const std::vector<Rational>& ambient_degrees) {
    PairingTable table;
    table.lambda = field.lambda();
    std::set<std::size_t> used;
    bool injective = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        Vec x = field.embed(points[i].coords);
        double d1 = INFINITY, d2 = INFINITY;
        std::size_t best = 0;
        for (std::size_t j = 0; j < ambient.size(); ++j) {
            const double d = (ambient_field.embed(ambient[j].coords) - x).norm();
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = j;
            } else if (d < d2) {
                d2 = d;
            }
        }
        if (ambient.empty()) {
            injective = false;
            continue;
        }
        if (d2 < 2 * d1)
            throw Error(ErrorKind::PairingAmbiguous, points[i].id + " at lambda " + fmt(field.lambda()) +
                                                         ": candidates at " + fmt(d1) + " and " + fmt(d2));
        if (!used.insert(best).second) injective = false;
        table.rows.push_back({points[i].id, ambient[best].id, d1, degrees[i], ambient_degrees[best]});
    }
    table.bijective = injective && points.size() == ambient.size();
    return table;
}

namespace {

struct Ambient {
    TruncatedField field;
    std::vector<StationaryPoint> points;
    std::vector<Rational> degrees;
};

Ambient ambient_points(const TruncationFamily& family, const ToyNonlinearity& c, const TruncationOptions& o) {
    double top = 0.0;
    for (double e : family.eigenvalues) top = std::max(top, std::abs(e));
    Ambient a{TruncatedField(family, c, top + 1.0), {}, {}};
    a.points = truncated_points(a.field, o);
    for (const auto& p : a.points) a.degrees.push_back(swf_grading(p, family, a.field.lambda(), o.n_shift));
    // Ambient ids follow the grading, then the coordinates.
    std::vector<std::size_t> order(a.points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (a.degrees[i] != a.degrees[j]) return a.degrees[i] < a.degrees[j];
        return lex_less(a.points[i].coords, a.points[j].coords);
    });
    std::vector<StationaryPoint> pts;
    std::vector<Rational> deg;
    for (std::size_t i : order) {
        pts.push_back(a.points[i]);
        pts.back().id = "q" + std::to_string(pts.size() - 1);
        deg.push_back(a.degrees[i]);
    }
    a.points = std::move(pts);
    a.degrees = std::move(deg);
    return a;
}

}  // namespace

std::vector<PairingTable> pair_stationary_points(const TruncationFamily& family, const ToyNonlinearity& c,
                                                 const std::vector<double>& cutoffs, const TruncationOptions& o) {
    Ambient amb = ambient_points(family, c, o);
    std::vector<PairingTable> out;
    for (double lambda : cutoffs) {
        TruncatedField f(family, c, lambda);
        auto pts = truncated_points(f, o);
        std::vector<Rational> deg;
        for (const auto& p : pts) deg.push_back(swf_grading(p, family, lambda, o.n_shift));
        out.push_back(pair_points(f, pts, deg, amb.field, amb.points, amb.degrees));
    }
    return out;
}

ConfinementReport confinement_check(const TruncatedField& field, const TruncationOptions& o) {
    ConfinementReport r;
    const int d = field.dim();
    const double slack = 0.05 * o.R, T = o.confinement_time;
    const double outer = 2 * o.R + slack;
    for (std::size_t i = 1; i <= o.confinement_samples; ++i) {
        const Vec x0 = sphere_point(i, d, 2 * o.R);
        bool bounded = true;
        double late = 0.0;
        for (bool forward : {false, true}) {
            FlowOptions fo;
            fo.tolerance = 1e-8;
            fo.forward = forward;
            bool left = false;
            try {
                FlowPath p = integrate_flow(field, full_space(d, o.R), x0, T, fo, [&](double, const Vec& z) {
                    left = left || z.norm() > outer;
                    return left;
                });
                if (!left && p.t.back() < T) left = true;
                for (std::size_t j = 0; j < p.t.size() && !left; ++j)
                    if (p.t[j] >= T / 2) late = std::max(late, p.x[j].norm());
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::BlowUp) throw;
                left = true;
            }
            bounded = bounded && !left;
        }
        ++r.sampled;
        if (bounded) {
            ++r.bounded;
            r.max_norm = std::max(r.max_norm, late);
        }
    }
    r.passed = r.max_norm <= o.R + slack;
    return r;
}

double Reparametrization::eval(double mu) const {
    if (std::isinf(mu)) return 0.0;
    if (!(mu > 0)) throw Error(ErrorKind::Precondition, "reparametrization is defined on (0, inf]");
    if (mu >= knots.back()) return values.back() * knots.back() / mu;
    auto x = knots;
    auto y = values;
    boost::math::interpolators::pchip<std::vector<double>> f(std::move(x), std::move(y));
    return f(mu);
}

Reparametrization reparam_lambda(const TruncationFamily& family) {
    std::vector<double> mags;
    for (double e : family.eigenvalues) mags.push_back(std::abs(e));
    std::sort(mags.begin(), mags.end());
    mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
    if (mags.size() < 5 || mags.front() <= 0)
        throw Error(ErrorKind::Precondition, "reparametrization needs five distinct nonzero magnitudes");
    Reparametrization r;
    r.knots.push_back(0.0);
    r.values.push_back(1.0);
    // mags[n] is mu_{n+1}; the formula gives f(mu_{n+1}) = 1 / mu_n + 1 / n for n >= 3.
    const double f4 = 1.0 / mags[2] + 1.0 / 3.0;
    for (std::size_t j = 0; j < mags.size(); ++j) {
        r.knots.push_back(mags[j]);
        if (j < 3)
            r.values.push_back(1.0 - (1.0 - f4) * (j + 1) / 4.0);
        else
            r.values.push_back(1.0 / mags[j - 1] + 1.0 / static_cast<double>(j));
    }
    for (std::size_t j = 1; j < r.values.size(); ++j)
        if (!(r.values[j] < r.values[j - 1]))
            throw Error(ErrorKind::Precondition, "knot values are not decreasing at |lambda| = " + fmt(r.knots[j]));
    return r;
}

QuasiGradient::QuasiGradient(const TruncatedField& field, const ToyNonlinearity& c, const TruncationFamily& family,
                             std::vector<Vec> truncated, std::vector<Vec> ambient, double epsilon)
    : field_(&field),
      c_(&c),
      eig_(Eigen::Map<const Vec>(family.eigenvalues.data(), family.ambient_dim())),
      truncated_(std::move(truncated)),
      ambient_(std::move(ambient)),
      epsilon_(epsilon) {}

Vec QuasiGradient::transform(const Vec& y) const {
    Vec x = field_->embed(y);
    for (std::size_t j = 0; j < truncated_.size(); ++j) {
        const double h = step((y - truncated_[j]).norm() / epsilon_);
        if (h > 0) x += h * (ambient_[j] - field_->embed(truncated_[j]));
    }
    return x;
}

double QuasiGradient::value(const Vec& y) const {
    Vec z = transform(y);
    return 0.5 * z.dot(eig_.cwiseProduct(z)) + c_->potential(z);
}

double QuasiGradient::derivative(const Vec& y, const Vec& w) const {
    Vec z = transform(y);
    Vec grad = eig_.cwiseProduct(z) + c_->eval(z);
    Vec dz = field_->embed(w);
    for (std::size_t j = 0; j < truncated_.size(); ++j) {
        Vec u = y - truncated_[j];
        const double r = u.norm();
        const double dh = dstep(r / epsilon_);
        if (dh != 0.0 && r > 0) dz += dh / epsilon_ * (u.dot(w) / r) * (ambient_[j] - field_->embed(truncated_[j]));
    }
    return grad.dot(dz);
}

QuasiGradient build_F_lambda(const TruncatedField& field, const ToyNonlinearity& c, const TruncationFamily& family,
                             const std::vector<StationaryPoint>& points, const TruncatedField& ambient_field,
                             const std::vector<StationaryPoint>& ambient, const PairingTable& pairing) {
    if (!c.is_gradient()) throw Error(ErrorKind::Precondition, "the nonlinearity has no potential");
    if (!pairing.bijective) throw Error(ErrorKind::CertificateFailure, "stationary pairing is not bijective");
    double sep = INFINITY;
    for (std::size_t i = 0; i < ambient.size(); ++i)
        for (std::size_t j = i + 1; j < ambient.size(); ++j)
            sep = std::min(sep, (ambient[i].coords - ambient[j].coords).norm());
    const double eps = std::isfinite(sep) ? sep / 14.0 : 1.0;
    std::map<std::string, const StationaryPoint*> by_id;
    for (const auto& p : ambient) by_id[p.id] = &p;
    std::vector<Vec> tr, am;
    for (const auto& row : pairing.rows) {
        if (row.distance > eps)
            throw Error(ErrorKind::CertificateFailure, row.point + " is " + fmt(row.distance) +
                                                           " from its ambient partner, more than epsilon = " +
                                                           fmt(eps));
        auto it = std::find_if(points.begin(), points.end(), [&](const StationaryPoint& p) { return p.id == row.point; });
        tr.push_back(it->coords);
        am.push_back(ambient_field.embed(by_id.at(row.partner)->coords));
    }
    return QuasiGradient(field, c, family, std::move(tr), std::move(am), eps);
}

CertificateResult certify(const QuasiGradient& F, const TruncatedField& field, double R, std::size_t ball_samples,
                          std::size_t neighborhood_samples) {
    CertificateResult r;
    r.min_ratio = INFINITY;
    r.max_ratio = -INFINITY;
    r.min_outside = INFINITY;
    const int d = field.dim();
    std::vector<Vec> samples;
    for (std::size_t i = 1; i <= ball_samples; ++i) {
        const double u = halton(i, 1)[0];
        samples.push_back(sphere_point(i, d, 2 * R * std::pow(u, 1.0 / d)));
    }
    for (const Vec& c : F.centers())
        for (std::size_t i = 1; i <= neighborhood_samples; ++i) {
            const double u = halton(i, 1)[0];
            samples.push_back(c + sphere_point(i, d, 2 * F.epsilon() * u));
        }
    double worst = -INFINITY;
    r.passed = true;
    for (const Vec& y : samples) {
        const Vec v = field.eval(y);
        const double v2 = v.squaredNorm();
        const double dF = F.derivative(y, v);
        ++r.samples;
        bool outside = true;
        for (const Vec& c : F.centers()) outside = outside && (y - c).norm() > F.epsilon();
        if (outside) r.min_outside = std::min(r.min_outside, dF);
        if (v2 == 0.0) continue;
        const double ratio = dF / v2;
        r.min_ratio = std::min(r.min_ratio, ratio);
        r.max_ratio = std::max(r.max_ratio, ratio);
        const double violation = std::max(0.25 * v2 - dF, dF - 4 * v2);
        if (violation > worst) {
            worst = violation;
            r.worst = y;
        }
        if (violation > 1e-9) r.passed = false;
    }
    if (r.min_outside <= 1e-10) r.passed = false;
    return r;
}

void require_certificate(const CertificateResult& result) {
    if (result.passed) return;
    std::ostringstream os;
    os << "quasi-gradient bound fails; ratios [" << result.min_ratio << ", " << result.max_ratio << "], worst point "
       << result.worst.transpose();
    throw Error(ErrorKind::CertificateFailure, os.str());
}

EnergyDrop energy_vs_drop(const FlowPath& path, const TruncatedField& field, const QuasiGradient& F) {
    EnergyDrop e;
    if (path.t.size() < 2) {
        e.ratio = std::numeric_limits<double>::quiet_NaN();
        e.passed = true;
        return e;
    }
    double prev = field.eval(path.x.front()).squaredNorm();
    for (std::size_t i = 1; i < path.t.size(); ++i) {
        const double cur = field.eval(path.x[i]).squaredNorm();
        e.energy += 0.5 * (prev + cur) * (path.t[i] - path.t[i - 1]);
        prev = cur;
    }
    e.drop = F.value(path.x.front()) - F.value(path.x.back());
    if (e.energy < 1e-14 && std::abs(e.drop) < 1e-14) {
        e.ratio = std::numeric_limits<double>::quiet_NaN();
        e.passed = true;
        return e;
    }
    e.ratio = e.drop / e.energy;
    e.passed = e.ratio >= 0.25 && e.ratio <= 4.0;
    return e;
}

std::vector<HomologyDegree> windowed(const HomologyResult& h, int window) {
    std::vector<HomologyDegree> out;
    for (const auto& g : h.nonzero()) {
        const Rational deg = Rational(g.degree) + h.offset;
        if (deg >= -window && deg <= window) out.push_back(g);
    }
    return out;
}

TruncationReport lambda_invariance_experiment(const TruncationFamily& family, const ToyNonlinearity& c,
                                              const std::vector<double>& cutoffs, const TruncationOptions& o) {
    family.validate();
    c.validate();
    if (cutoffs.size() < 3) throw Error(ErrorKind::Precondition, "at least three cutoffs");
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        if (std::find(family.cutoffs.begin(), family.cutoffs.end(), cutoffs[i]) == family.cutoffs.end())
            throw Error(ErrorKind::Precondition, "cutoff " + fmt(cutoffs[i]) + " is not designated");
        if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) throw Error(ErrorKind::Precondition, "cutoffs must increase");
    }
    TruncationReport rep;
    Ambient amb = ambient_points(family, c, o);
    rep.ambient = amb.points;
    rep.ambient_degrees = amb.degrees;
    for (double lambda : cutoffs) {
        const auto t0 = std::chrono::steady_clock::now();
        CutoffReport cr;
        cr.lambda = lambda;
        TruncatedField field(family, c, lambda);
        cr.dim = field.dim();
        cr.negative_dim = family.negative_dim(lambda);
        cr.points = truncated_points(field, o);
        for (const auto& p : cr.points) cr.degrees.push_back(swf_grading(p, family, lambda, o.n_shift));
        cr.pairing = pair_points(field, cr.points, cr.degrees, amb.field, amb.points, amb.degrees);
        if (cr.pairing.bijective) {
            for (std::size_t i = 0; i < cr.points.size(); ++i) {
                cr.points[i].id = cr.pairing.rows[i].partner;
                cr.pairing.rows[i].point = cr.points[i].id;
            }
        }
        const ManifoldSpec space = full_space(cr.dim, o.R);
        CountOptions co;
        co.shooting = o.shooting;
        cr.ledger = count_matrix(field, space, cr.points, co);
        auto assembly = build_morse_complex(cr.points, cr.ledger);
        cr.homology = homology(grading_shift(assembly.complex, Rational(-cr.negative_dim) - 2 * o.n_shift));
        cr.confinement = confinement_check(field, o);
        try {
            QuasiGradient F = build_F_lambda(field, c, family, cr.points, amb.field, amb.points, cr.pairing);
            cr.epsilon = F.epsilon();
            cr.certificate = certify(F, field, o.R, o.certificate_samples, o.neighborhood_samples);
            FlowOptions fo;
            fo.max_step = 0.005;
            fo.tolerance = 1e-10;
            std::vector<Vec> starts;
            for (const auto& t : cr.ledger.trajectories)
                if (!t.samples.empty()) starts.push_back(t.samples.front());
            for (std::size_t i = 1; i <= o.energy_trajectories; ++i) {
                const double u = halton(i, 1)[0];
                starts.push_back(sphere_point(i + 7919, cr.dim, o.R * std::pow(u, 1.0 / cr.dim)));
            }
            for (const Vec& s : starts) {
                FlowPath p;
                try {
                    p = integrate_flow(field, space, s, 10.0, fo,
                                       [&](double, const Vec& z) { return z.norm() > 2 * o.R; });
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::BlowUp) throw;
                    continue;
                }
                while (p.x.size() > 1 && p.x.back().norm() > 2 * o.R) {
                    p.x.pop_back();
                    p.t.pop_back();
                }
                cr.energy.push_back(energy_vs_drop(p, field, F));
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::CertificateFailure) throw;
            rep.failures.push_back("lambda " + fmt(lambda) + ": " + e.what());
        }
        cr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.cutoffs.push_back(std::move(cr));
    }

    auto fail = [&](bool ok, const std::string& what) {
        if (!ok) rep.failures.push_back(what);
        return ok;
    };
    const auto& first = rep.cutoffs.front();
    rep.homology_agrees = true;
    rep.pairing_bijective = true;
    rep.degrees_agree = true;
    rep.certificates_pass = true;
    rep.energy_pass = true;
    rep.confinement_pass = true;
    for (const auto& cr : rep.cutoffs) {
        rep.homology_agrees = rep.homology_agrees && windowed(cr.homology, o.window) == windowed(first.homology, o.window) &&
                              cr.homology.offset == first.homology.offset;
        rep.pairing_bijective = rep.pairing_bijective && cr.pairing.bijective;
        for (const auto& row : cr.pairing.rows) rep.degrees_agree = rep.degrees_agree && row.degree == row.partner_degree;
        rep.certificates_pass = rep.certificates_pass && cr.certificate.passed && cr.certificate.samples > 0;
        for (const auto& e : cr.energy) rep.energy_pass = rep.energy_pass && e.passed;
        rep.energy_pass = rep.energy_pass && !cr.energy.empty();
        rep.confinement_pass = rep.confinement_pass && cr.confinement.passed;
    }
    rep.distances_decrease = rep.pairing_bijective;
    if (rep.pairing_bijective) {
        std::map<std::string, double> last;
        for (const auto& cr : rep.cutoffs)
            for (const auto& row : cr.pairing.rows) {
                auto it = last.find(row.partner);
                if (it != last.end() && row.distance > it->second) rep.distances_decrease = false;
                last[row.partner] = row.distance;
            }
    }
    const auto& a = rep.cutoffs[rep.cutoffs.size() - 2];
    const auto& b = rep.cutoffs.back();
    rep.counts_agree = rep.pairing_bijective && a.ledger.n == b.ledger.n;
    fail(rep.homology_agrees, "graded homology differs across cutoffs");
    fail(rep.pairing_bijective, "stationary pairing is not bijective");
    fail(rep.distances_decrease, "pairing distances do not decrease");
    fail(rep.degrees_agree, "paired gradings differ");
    fail(rep.counts_agree, "trajectory counts differ between the two largest cutoffs");
    fail(rep.certificates_pass, "quasi-gradient certificate fails");
    fail(rep.energy_pass, "energy and drop are not commensurable");
    fail(rep.confinement_pass, "confinement fails");
    rep.passed = rep.homology_agrees && rep.pairing_bijective && rep.distances_decrease && rep.degrees_agree &&
                 rep.counts_agree && rep.certificates_pass && rep.energy_pass && rep.confinement_pass;
    return rep;
}

}  // namespace morsecon
