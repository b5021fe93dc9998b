#ifndef MORSECON_COMPLEX_BUILDER_HPP
#define MORSECON_COMPLEX_BUILDER_HPP

#include <functional>
#include <string>
#include <vector>

#include "morsecon/blowup.hpp"
#include "morsecon/chain_algebra.hpp"
#include "morsecon/flow_model.hpp"
#include "morsecon/trajectory.hpp"

namespace morsecon {

struct Generator {
    std::string id;
    int degree = 0;
    PointClass cls = PointClass::Interior;
};

// Ledger terms behind one matrix entry, e.g. "n(a,b)" or "n(u,o)*nbar(s,u)".
struct ProvenanceEntry {
    std::string matrix;
    int degree = 0;
    std::string row, col;
    long long value = 0;
    std::vector<std::string> terms;
};

struct ComplexAssembly {
    std::vector<Generator> generators;
    ChainComplex complex;
    // Generator indices spanning C_k, in matrix order.
    std::map<int, std::vector<std::size_t>> basis;
    std::vector<ProvenanceEntry> provenance;
    // Inputs, kept for restriction and the U map.
    std::vector<StationaryPoint> points;
    CountLedger ledger;
    // Degrees through which the equivariant complex agrees with Borel homology; -1 when not equivariant.
    int window = -1;

    std::size_t index_of(const std::string& id) const;
};

// Closed manifolds only. Throws Precondition, NotAComplex.
ComplexAssembly build_morse_complex(const std::vector<StationaryPoint>& points, const CountLedger& ledger);

// Complex on interior and boundary-stable generators with the block differential
// [[d_oo, -d_uo dbar_su], [d_os, dbar_ss - d_us dbar_su]]. Throws NotAComplex.
ComplexAssembly build_boundary_complex(const std::vector<StationaryPoint>& points, const CountLedger& ledger);

// ind_Q + 2i - 2 for a positive eigenvalue, ind_Q + 2i - 1 for a negative one.
// Throws ZeroEigenvalue, Precondition.
int equivariant_index(int ind_q, int ordinal, int eigen_sign);

// Index of a reducible point inside the fixed locus, from the blow-up field at s = 0.
int fixed_locus_index(const BlowupField& field, const StationaryPoint& p);

struct EquivariantInput {
    // Null for a free action on a closed manifold (complex on the quotient directly).
    const BlowupField* field = nullptr;
    std::vector<StationaryPoint> points;
    CountLedger ledger;
    const EquivariantCertificate* certificate = nullptr;
};

// Certificate for a free action: hyperbolic quotient points and a passing witness.
EquivariantCertificate free_action_certificate(const ManifoldSpec& quotient,
                                               const std::vector<StationaryPoint>& points,
                                               const QuasiGradientCertificate* witness, double tol_hyp = 1e-8);

// Throws CertificateMissing, CertificateFailure, NotAComplex, and Precondition when a
// boundary generator's quotient index disagrees with equivariant_index.
ComplexAssembly build_equivariant_complex(const EquivariantInput& input);

// Keep generators inside the region and orbits between them. Throws LeakyRegion when
// a kept orbit leaves the region.
ComplexAssembly restrict_to_isolated_set(const ComplexAssembly& assembly,
                                         const std::function<bool(const Vec&)>& region);

// Degree -2 map from cut-down counts m, mbar. Throws NotChainMap.
GradedMap build_u_map(const ComplexAssembly& assembly, const CountLedger& cuts);

// 2 i(mu, nu) for eigenvalues of the same sign, 2 i(mu, nu) - 1 otherwise, with
// i(mu, nu) = #{eigenvalues in (nu, mu]}. Throws ZeroEigenvalue, Precondition.
int reducible_relative_grading(double mu, double nu, const std::vector<double>& spectrum, double tol = 1e-9);

}  // namespace morsecon

#endif
