#ifndef MORSECON_TRAJECTORY_HPP
#define MORSECON_TRAJECTORY_HPP

#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morsecon/flow_model.hpp"

namespace morsecon {

struct FlowOptions {
    double tolerance = 1e-10;
    double blowup_bound = 1e6;
    double max_step = 0.25;
    double initial_step = 1e-3;
    // Integrate v instead of the reverse flow -v.
    bool forward = false;
};

struct FlowPath {
    std::vector<double> t;
    std::vector<Vec> x;
};

// Reverse flow gamma' = -v(gamma) with per-step projection back to the manifold.
// The optional stop predicate ends the integration early. Throws BlowUp.
FlowPath integrate_flow(const VectorField& field, const ManifoldSpec& manifold, const Vec& x0, double t_max,
                        const FlowOptions& options = {},
                        const std::function<bool(double, const Vec&)>& stop = {});

struct FlowMap {
    Vec end;
    // Derivative of the time-t map applied to the initial frame.
    Mat frame;
    std::size_t steps = 0;
};

FlowMap flow_map(const VectorField& field, const ManifoldSpec& manifold, const Vec& x0, const Mat& frame, double t,
                 const FlowOptions& options = {});

// Weight-one equivariant cut h(x) = sum_j c_j z_j over the action's complex coordinates.
struct CutSpec {
    std::vector<cplx> coefficients;

    cplx eval(const CircleAction& action, const Vec& x) const;
    // Rows: d Re h, d Im h.
    Mat differential(const CircleAction& action, int ambient_dim) const;
    static CutSpec generic(int complex_dims, double phase = 0.0);
};

void check_cut_equivariance(const CutSpec& cut, const CircleAction& action, int ambient_dim);

struct Trajectory {
    std::string source, target;
    int sign = 0;
    bool boundary = false;
    // Unit vector a; the start point is x + sum_i a_i r_i u_i over the unstable frame.
    Vec shooting;
    double capture_time = 0.0;
    // Time of the cut crossing for cut-down orbits.
    double cut_time = 0.0;
    std::vector<double> t;
    std::vector<Vec> samples;
};

struct ShootingOptions {
    double r_shoot = 1e-3;
    // Start radius along unstable direction i is r_shoot^p_i with p_i = rate_i / rate_min, capped.
    double max_distortion = 2.0;
    double capture_radius = 1e-4;
    // Final distance to the target accepted as on its local stable manifold.
    double end_radius = 0.05;
    // Ray count per circle of directions; scaled for higher spheres.
    int density = 64;
    // Seeds are scanned over the weakest max_scan_dim unstable directions only.
    int max_scan_dim = 4;
    int max_candidates = 24;
    double t_max = 60.0;
    // Scan rays stop once they are this far out; the closest approach so far still counts.
    double escape_radius = 1e3;
    double separation = 1e-9;
    double residual_tol = 1e-10;
    int max_newton = 60;
    // Segment length cap for multiple shooting, in units of 1 / (max |Re eigenvalue|).
    double segment_scale = 3.0;
    FlowOptions flow;
};

// Orbits of the reverse flow from x to y with flow_index(x) - flow_index(y) = 1.
// Other stationary points are used to reject broken orbits. Throws Precondition,
// CaptureAmbiguity.
std::vector<Trajectory> find_connecting_orbits(const VectorField& field, const ManifoldSpec& manifold,
                                               const StationaryPoint& x, const StationaryPoint& y,
                                               const std::vector<StationaryPoint>& others,
                                               const ShootingOptions& options = {});

// Sign from the transported unstable frame of x, given the frame at the end point near y.
int orientation_sign(const StationaryPoint& y, const ManifoldSpec& manifold, const Vec& end, const Mat& frame,
                     const Vec& velocity);

struct CutResult {
    int count = 0;
    std::vector<Trajectory> crossings;
};

// Signed count of orbits from x to y (index gap 2) through the zero set of the cut.
// Throws Precondition, NonTransverseCut.
CutResult cut_count(const VectorField& field, const ManifoldSpec& manifold, const StationaryPoint& x,
                    const StationaryPoint& y, const std::vector<StationaryPoint>& others, const CutSpec& cut,
                    const ShootingOptions& options = {});

using PairKey = std::pair<std::string, std::string>;

struct CountLedger {
    std::map<PairKey, int> n, nbar, m, mbar;
    std::vector<Trajectory> trajectories;
};

struct CountOptions {
    ShootingOptions shooting;
    bool cut_counts = false;
    CutSpec cut;
};

// Boundary-unstable points get the frame (boundary unstable frame, outward normal),
// boundary-stable points the boundary unstable frame. Returns the boundary analyses.
std::map<std::string, StationaryPoint> orient_boundary_points(const VectorField& field, const ManifoldSpec& manifold,
                                                              std::vector<StationaryPoint>& points);

// n for index gap 1 in the interior; nbar along the boundary; m, mbar for gap 2 when requested.
CountLedger count_matrix(const VectorField& field, const ManifoldSpec& manifold, std::vector<StationaryPoint>& points,
                         const CountOptions& options = {});

// Replace the oriented unstable frame of p by another basis of the same space.
void reorient_unstable(StationaryPoint& p, const Mat& basis);

std::string trajectory_csv(const std::vector<Trajectory>& trajectories);

}  // namespace morsecon

#endif
