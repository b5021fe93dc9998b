#ifndef MORSECON_TRUNCATION_HPP
#define MORSECON_TRUNCATION_HPP

#include <string>
#include <vector>

#include "morsecon/chain_algebra.hpp"
#include "morsecon/complex_builder.hpp"
#include "morsecon/trajectory.hpp"

namespace morsecon {

enum class BumpKind { Exponential, Polynomial };

// Diagonal ambient operator with designated spectral cutoffs. Mode n (0-based) has eigenvalue eigenvalues[n].
struct TruncationFamily {
    std::vector<double> eigenvalues;
    std::vector<double> cutoffs;
    std::vector<double> half_widths;
    BumpKind bump = BumpKind::Exponential;

    // eigenvalues +1, -1, +2, -2, ...; cutoffs i + 1/2 for i = first..last with half-width 1/4.
    static TruncationFamily standard(int modes = 60, int first = 5, int last = 15);

    // Throws Precondition when a cutoff interval contains an eigenvalue.
    void validate() const;
    int ambient_dim() const { return static_cast<int>(eigenvalues.size()); }
    // Modes with |eigenvalue| < lambda.
    std::vector<int> window(double lambda) const;
    // dim W^(-lambda, 0).
    int negative_dim(double lambda) const;

    // Smoothing profile on (0, 1) with unit integral, and its integral from 0 to t.
    double beta(double theta) const;
    double beta_integral(double t) const;
    // beta_i: 1 at cutoffs[i], supported in the cutoff interval.
    double cutoff_bump(std::size_t i, double lambda) const;
};

// Ambient diagonal weights of the sharp and smoothed projections.
Vec sharp_weights(const TruncationFamily& family, double lambda);
Vec smoothed_weights(const TruncationFamily& family, double lambda);
Vec sharp_projection(const TruncationFamily& family, double lambda, const Vec& x);
Vec smoothed_projection(const TruncationFamily& family, double lambda, const Vec& x);

// c_k(x) = scale * sum S x_n x_m over the stored ordered terms (k, n, m, S), plus linear * x.
struct ToyNonlinearity {
    struct Term {
        int k, n, m;
        double s;
    };
    double epsilon = 0.05;
    // Uniform coordinate scale; c is quadratic, so it only moves stationary points radially.
    double scale = 1.0;
    std::vector<double> weights;
    std::vector<Term> terms;
    Mat linear;

    // Weights 1 / (1 + |lambda_n|). Two core modes carry the cubic potential
    // y1^3 / 3 - 0.35 y1 y2^2; every other positive mode is driven by the core quadratically.
    static ToyNonlinearity standard(const TruncationFamily& family);
    static ToyNonlinearity zero(const TruncationFamily& family);

    Vec eval(const Vec& x) const;
    Mat jacobian(const Vec& x) const;
    // |S_knm| <= epsilon w_k w_n w_m for every term; throws Precondition naming the first violation.
    void validate() const;
    // S symmetric in all three slots and no linear part, so c is the gradient of potential().
    bool is_gradient() const;
    double potential(const Vec& x) const;
    // Largest ratio of the tail norm beyond mode M to the decay envelope over quasi-random points of B(R).
    double decay_ratio(int M, double R, std::size_t samples) const;
};

// l + p^lambda c restricted to W^lambda, in the coordinates of window(lambda).
class TruncatedField : public VectorField {
public:
    TruncatedField(const TruncationFamily& family, const ToyNonlinearity& c, double lambda);

    int dim() const override { return static_cast<int>(modes_.size()); }
    Vec eval(const Vec& y) const override;
    Mat jacobian(const Vec& y) const override;

    double lambda() const { return lambda_; }
    const std::vector<int>& modes() const { return modes_; }
    Vec embed(const Vec& y) const;
    Vec restrict(const Vec& x) const;

private:
    int ambient_;
    double lambda_;
    std::vector<int> modes_;
    Vec eig_, proj_;
    std::vector<ToyNonlinearity::Term> terms_;
    Mat linear_;
    double scale_;
};

struct TruncationOptions {
    // Confinement radius; stationary points are collected in B(R).
    double R = 2.5;
    int window = 4;
    Rational n_shift = 0;
    // Newton seeds on a grid over the first core_modes modes, other coordinates zero.
    int core_modes = 2;
    int core_grid = 25;
    std::size_t random_seeds = 64;
    double tol_hyp = 1e-8;
    std::size_t certificate_samples = 1000;
    std::size_t neighborhood_samples = 100;
    std::size_t energy_trajectories = 20;
    std::size_t confinement_samples = 64;
    double confinement_time = 8.0;
    // The index gap lives in the two core modes; tail modes are scanned at zero.
    ShootingOptions shooting = [] {
        ShootingOptions s;
        s.max_scan_dim = 2;
        return s;
    }();
};

// Stationary points of the truncated field in B(R), with unstable frames oriented so that
// the largest entry of every basis vector is positive. Throws DegenerateSpectrum.
std::vector<StationaryPoint> truncated_points(const TruncatedField& field, const TruncationOptions& options);

// gr = index - dim W^(-lambda, 0) - 2 n_shift.
Rational swf_grading(const StationaryPoint& p, const TruncationFamily& family, double lambda, const Rational& n_shift);

struct PairingRow {
    std::string point, partner;
    double distance = 0.0;
    Rational degree, partner_degree;
};

struct PairingTable {
    double lambda = 0.0;
    std::vector<PairingRow> rows;
    bool bijective = false;
};

// Nearest ambient partner in the ambient norm. Throws PairingAmbiguous when the runner-up
// is within twice the nearest distance.
PairingTable pair_points(const TruncatedField& field, const std::vector<StationaryPoint>& points,
                         const std::vector<Rational>& degrees, const TruncatedField& ambient_field,
                         const std::vector<StationaryPoint>& ambient, const std::vector<Rational>& ambient_degrees);

std::vector<PairingTable> pair_stationary_points(const TruncationFamily& family, const ToyNonlinearity& c,
                                                 const std::vector<double>& cutoffs, const TruncationOptions& options);

struct ConfinementReport {
    std::size_t sampled = 0;
    std::size_t bounded = 0;
    double max_norm = 0.0;
    bool passed = false;
};

// Orbits through the 2R sphere that stay in B(2R) on [-T, T] must lie in B(R) for |t| >= T / 2.
ConfinementReport confinement_check(const TruncatedField& field, const TruncationOptions& options);

// f(|lambda_{n+1}|) = 1 / |lambda_n| + 1 / n on the distinct magnitudes, monotone interpolation
// between knots, f(0+) = 1 and f(mu) ~ 1 / mu beyond the last knot.
struct Reparametrization {
    std::vector<double> knots, values;
    double eval(double mu) const;
};
Reparametrization reparam_lambda(const TruncationFamily& family);

// F = L o T with T the local translation of each truncated stationary point onto its ambient partner.
class QuasiGradient {
public:
    QuasiGradient(const TruncatedField& field, const ToyNonlinearity& c, const TruncationFamily& family,
                  std::vector<Vec> truncated, std::vector<Vec> ambient, double epsilon);

    double epsilon() const { return epsilon_; }
    Vec transform(const Vec& y) const;
    double value(const Vec& y) const;
    // dF(y) applied to the tangent vector w.
    double derivative(const Vec& y, const Vec& w) const;
    const std::vector<Vec>& centers() const { return truncated_; }

private:
    const TruncatedField* field_;
    const ToyNonlinearity* c_;
    Vec eig_;
    std::vector<Vec> truncated_, ambient_;
    double epsilon_;
};

// Chooses epsilon as half the largest value with orbit separation >= 7 epsilon.
// Throws Precondition when c is not a gradient.
QuasiGradient build_F_lambda(const TruncatedField& field, const ToyNonlinearity& c, const TruncationFamily& family,
                             const std::vector<StationaryPoint>& points, const TruncatedField& ambient_field,
                             const std::vector<StationaryPoint>& ambient, const PairingTable& pairing);

struct CertificateResult {
    std::size_t samples = 0;
    double min_ratio = 0.0, max_ratio = 0.0;
    // Smallest dF(v) outside the epsilon balls.
    double min_outside = 0.0;
    Vec worst;
    bool passed = false;
};

// 1/4 |v|^2 <= dF(v) <= 4 |v|^2 at quasi-random points of B(2R) and of the 2 epsilon balls.
CertificateResult certify(const QuasiGradient& F, const TruncatedField& field, double R, std::size_t ball_samples,
                          std::size_t neighborhood_samples);
// As certify, throwing CertificateFailure with the worst point.
void require_certificate(const CertificateResult& result);

struct EnergyDrop {
    double energy = 0.0;
    // Decrease of F along the reverse flow.
    double drop = 0.0;
    double ratio = 0.0;
    bool passed = false;
};

EnergyDrop energy_vs_drop(const FlowPath& path, const TruncatedField& field, const QuasiGradient& F);

struct CutoffReport {
    double lambda = 0.0;
    int dim = 0;
    int negative_dim = 0;
    std::vector<StationaryPoint> points;
    std::vector<Rational> degrees;
    CountLedger ledger;
    HomologyResult homology;
    PairingTable pairing;
    ConfinementReport confinement;
    CertificateResult certificate;
    std::vector<EnergyDrop> energy;
    double epsilon = 0.0;
    double seconds = 0.0;
};

struct TruncationReport {
    std::vector<StationaryPoint> ambient;
    std::vector<Rational> ambient_degrees;
    std::vector<CutoffReport> cutoffs;
    bool homology_agrees = false;
    bool pairing_bijective = false;
    bool distances_decrease = false;
    bool degrees_agree = false;
    bool counts_agree = false;
    bool certificates_pass = false;
    bool energy_pass = false;
    bool confinement_pass = false;
    bool passed = false;
    std::vector<std::string> failures;
};

// Truncated homology is graded by gr and compared on [-window, window].
TruncationReport lambda_invariance_experiment(const TruncationFamily& family, const ToyNonlinearity& c,
                                              const std::vector<double>& cutoffs, const TruncationOptions& options);

// Homology restricted to degrees with |degree + offset| <= window.
std::vector<HomologyDegree> windowed(const HomologyResult& h, int window);

}  // namespace morsecon

#endif
