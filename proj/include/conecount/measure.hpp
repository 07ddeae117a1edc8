#pragma once
// The invariant measure on the light cone and region volumes.
//
// In the chart x -> (offset, u) with offset = (x_1..x_n) and u = [x] the
// bracket, the cone carries the measure  d(offset) du/u  (equivalently
// d(offset) d(axis) / height in the (offset, axis) chart).  It is invariant
// under the G-action up to the overall normalization kappa, which this
// library treats as an external parameter: every volume here is reported in
// the raw measure times kappa (default 1).
//
// The flow shell F_{T,c} is exactly {|offset| < c, 1 <= u < e^T} in the
// chart, so its raw volume is closed-form:  omega_n c^n T  with omega_n the
// Euclidean unit-ball volume.  The solution region E_{T,c} has no elementary
// closed form and is estimated by Monte Carlo; so is F when a cross-checking
// estimate is wanted (the MC route samples the (offset, axis) chart with
// 1/height weights and importance sampling along axis, independent of the
// closed form).  A direction set A scales closed forms by its measure and
// restricts samplers by membership.

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "conecount/counting.hpp"

namespace conecount {

struct MeasureConfig {
  double kappa = 1.0;
  int64_t samples = 1'000'000;
  uint64_t seed = 1729;
  int threads = 1;  // counting helpers only; samplers are sequential
};

// Euclidean unit-ball volume omega_n (2, pi, 4pi/3 for n = 1, 2, 3).
double unit_ball_volume(int n);

struct VolumeResult {
  double value = 0.0;
  double se = 0.0;  // standard error (0 for closed forms)
  std::string method;
  int64_t samples = 0;
};

VolumeResult volume_F(int n, const Window& w, const DirectionSet* A,
                      const MeasureConfig& cfg, bool monte_carlo = false);
VolumeResult volume_E(int n, const Window& w, const DirectionSet* A,
                      const MeasureConfig& cfg);

// Density of the main counting term per unit T: eta(c) = kappa omega_n c^n.
double eta(int n, double c, double kappa = 1.0);

// Generic region mass in the (offset, u) chart: the region must be contained
// in {|offset| < radius, u_lo <= u < u_hi}.  The predicate sees the full
// ambient vector (offset, axis, height).
struct ChartBox {
  double radius = 1.0;
  double u_lo = 1.0;
  double u_hi = 2.0;
};
using RegionPredicate = std::function<bool(std::span<const double>)>;
VolumeResult region_mass(int n, const ChartBox& box, const RegionPredicate& pred,
                         int64_t samples, uint64_t seed);

// Monte-Carlo check that a bounded region and its g-image carry equal mass
// (the measure is G-invariant, so they must).  The region has to lie inside
// `box`; a chart box enclosing the image is derived from g and box, and when
// no positive lower bound on the image bracket exists the image chart is
// unbounded below and the test refuses (std::invalid_argument).  Passes iff
// the estimates agree within 3 combined standard errors; g = identity
// reuses the sample stream and compares exactly.
struct InvarianceReport {
  VolumeResult direct;       // mass of the region
  VolumeResult transported;  // mass of g * region
  ChartBox image_box;
  bool pass = false;
};
InvarianceReport invariance_test(int n, const GroupElement& g, const ChartBox& box,
                                 const RegionPredicate& region, int64_t samples,
                                 uint64_t seed);

// Fit kappa from counts: draw `targets` random unit targets, count solutions
// in the window, average count / (omega_n c^n T).
struct CalibrationResult {
  double kappa_hat = 0.0;
  std::vector<double> per_target;
  int n = 0;
  double c = 0.0, T = 0.0;
  uint64_t seed = 0;
};

CalibrationResult calibrate_kappa(int n, int targets, const Window& w,
                                  const MeasureConfig& cfg);

}  // namespace conecount
