#ifndef MORSECON_BLOWUP_HPP
#define MORSECON_BLOWUP_HPP

#include <memory>
#include <string>
#include <vector>

#include "morsecon/flow_model.hpp"

namespace morsecon {

// Throws NotEquivariant unless v(u x) = u v(x) at sampled points.
void check_equivariance(const VectorField& field, const ManifoldSpec& manifold, std::size_t samples = 64,
                        double tol = 1e-9);

// Field on the blow-up of R^a + C^b (or of its unit sphere) along the fixed
// locus, in coordinates y = (r, s, phi).
class BlowupField : public VectorField {
public:
    BlowupField(std::shared_ptr<const VectorField> base, int real_dims, int complex_dims, bool base_sphere);

    int dim() const override { return a_ + 1 + 2 * b_; }
    Vec eval(const Vec& y) const override;

    // int_0^1 D_{(r, t s phi)} v_C (0, phi) dt, 16-point Gauss-Legendre.
    Vec vtilde(const Vec& y) const;
    double lambda(const Vec& y) const;
    // Linearization of v_C in the complex directions at (r, 0).
    Mat complex_linearization(const Vec& r) const;

    ManifoldSpec manifold(bool quotient = true) const;
    Vec blow_down(const Vec& y) const;
    Vec lift(const Vec& x) const;

    int real_dims() const { return a_; }
    int complex_dims() const { return b_; }

private:
    std::shared_ptr<const VectorField> base_;
    int a_, b_;
    bool sphere_;
    std::vector<double> nodes_, weights_;
};

double lambda_energy(const BlowupField& field, const Vec& y);

struct EquivariantCertificate {
    bool quotient_hyperbolic = true;
    bool fixed_hyperbolic = true;
    bool self_adjoint = true;
    bool simple_spectrum = true;
    bool nonzero_spectrum = true;
    bool quasi_gradient = true;
    std::vector<std::string> failures;
    bool passed() const { return failures.empty(); }
};

// Conditions on fixed points q (given by their r coordinates) and on the
// quotient points; the witness certificate is passed in precomputed.
EquivariantCertificate equivariant_field_certificate(const BlowupField& field, const std::vector<Vec>& fixed_points,
                                                     const std::vector<StationaryPoint>& quotient_points,
                                                     const QuasiGradientCertificate* witness,
                                                     double tol_gap = 1e-8, double tol_hyp = 1e-8);

// Fill in reducible data (base, eigen ordinal, eigenvalue, eigenvector) of
// stationary points lying on s = 0.
void annotate_reducible(const BlowupField& field, std::vector<StationaryPoint>& points);

}  // namespace morsecon

#endif
