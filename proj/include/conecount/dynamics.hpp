#pragma once
// Geodesic-flow averages over lattice points in the bracket shell.
//
// The shell F_{r,c} = {radial < c^2, 1 <= [x] < e^r} moves under the flow by
// bracket scaling ([g_t x] = e^{-t}[x], radial part fixed), so for a fixed
// lattice L the Siegel-type sum
//
//     fhat(g_t L) = #(g_t L  intersect  F_{r,c})
//
// is a step function of t whose integral over [0, T] is an exact finite sum:
// x qualifies during t in (log[x] - r, log[x]], hence contributes
// max(0, min(T, log[x]) - max(0, log[x] - r)).  This gives sandwich bounds
//
//     #(L cap (F_{T,c} \ F_{r,c}))  <=  (1/r) I(T)  <=  #(L cap F_{T+r,c})
//     (1/r) I(T-r)  <=  #(L cap F_{T,c})  <=  (1/r) I(T) + #(L cap F_{r,c})
//
// with I(S) the integral up to S — both verified exactly (up to float
// roundoff slack) by orbit_chain_check, point set shared between all terms.
// birkhoff_slope(T) = I(T)/(r T) is the orbit average per unit time, the
// quantity whose large-T limit is the density eta(c) vol(A) kappa.

#include <cstdint>
#include <optional>

#include "conecount/counting.hpp"

namespace conecount {

struct OrbitConfig {
  double r = 1.0;  // shell length, 0 < r < T
  Window w;        // w.T integration endpoint, w.c radial size
  LatticeDescriptor lattice;
  std::optional<DirectionSet> A;
  int threads = 1;
};

struct BandCount {
  int64_t total = 0;
  uint64_t boundary_hits = 0;  // decisions near the radial or bracket edges
};

// #(lattice points with radial < c^2, direction in A, u_lo <= [x] < u_hi).
BandCount count_F_band(const LatticeDescriptor& lat, double c, double u_lo,
                       double u_hi, const DirectionSet* A = nullptr, int threads = 1);

// Shell count #(L cap F_{r,c,A}): the Siegel-transform value at the lattice.
BandCount siegel_count(const LatticeDescriptor& lat, double r, double c,
                       const DirectionSet* A = nullptr, int threads = 1);

// I(T) = integral_0^T fhat(g_t L) dt, exactly (one term per lattice point).
double exact_orbit_integral(const OrbitConfig& cfg);

struct OrbitChainReport {
  int64_t count_shell_diff = 0;  // #(F_{T,c} \ F_{r,c})
  int64_t count_F_T = 0;
  int64_t count_F_T_plus_r = 0;
  int64_t count_F_r = 0;
  double integral_T = 0.0;
  double integral_T_minus_r = 0.0;
  uint64_t boundary_hits = 0;
  bool chain_flow_ok = false;   // first display above
  bool chain_count_ok = false;  // second display above
};

OrbitChainReport orbit_chain_check(const OrbitConfig& cfg);

// I(T) / (r T): the finite-T orbit average per unit time.
double birkhoff_slope(const OrbitConfig& cfg);

// Quadrature cross-check of the exact integral: evaluate fhat(g_t L) on a
// uniform t-grid (midpoint rule, `steps` cells) and integrate numerically.
// O(steps) full shell counts: desk scale only.
double quadrature_orbit_integral(const OrbitConfig& cfg, int64_t steps);

}  // namespace conecount
