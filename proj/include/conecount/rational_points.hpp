#pragma once
// Integer points on the light cone and their enumeration.
//
// An integer cone point (p, q), p in Z^{n+1}, q in Z, q >= 1, |p| = q, is the
// same thing as a rational point p/q on the unit sphere S^n with denominator
// q.  Two enumeration strategies:
//
//   enumerate_all   every point with q <= q_max, ordered by (q, lex p).
//                   Cost grows like q_max^{n+1}; fine at desk scale.
//
//   enumerate_near  only points with |q*alpha - p| < c for a fixed target
//                   alpha in S^n, for q in [q_lo, q_hi].  Per q this scans
//                   the integer box of half-width c around q*alpha, solving
//                   the last coordinate exactly from q^2 - |p'|^2 being a
//                   perfect square.  Cost is O(q_hi) with a tiny constant,
//                   which is what makes counts up to q ~ 1e9 practical.
//
// Membership |q*alpha - p| < c is decided in double-double arithmetic, with
// decisions within 1e-9 * c^2 (relative band on the squared distance)
// reported as boundary hits.  An exact-rational target mode (alpha = a/b
// componentwise) decides membership in integer arithmetic instead; tests use
// it as an oracle, and it classifies polar points (p = q*alpha) exactly.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "conecount/dd.hpp"

namespace conecount {

// Largest admissible denominator: q^2 must fit comfortably in int64.
inline constexpr int64_t kMaxDenominator = 3'000'000'000LL;

// Relative half-width of the boundary band on squared distances.
inline constexpr double kBoundaryBand = 1e-9;

struct RationalApproximate {
  std::vector<int64_t> p;  // length n+1
  int64_t q = 0;
  bool primitive = false;  // gcd(p_1,...,p_{n+1},q) == 1

  int n() const { return static_cast<int>(p.size()) - 1; }
};

bool is_primitive(std::span<const int64_t> p, int64_t q);
// Exact check that sum p_i^2 == q^2 (128-bit internally).
bool on_cone(const RationalApproximate& v);

// Exact target alpha = (num_1/den, ..., num_{n+1}/den); need not be reduced,
// must satisfy sum num_i^2 == den^2 (so alpha really lies on the sphere).
struct RationalTarget {
  std::vector<int64_t> num;
  int64_t den = 1;

  int n() const { return static_cast<int>(num.size()) - 1; }
  std::vector<double> as_doubles() const;
};

RationalTarget make_rational_target(std::vector<int64_t> num, int64_t den);

// One accepted point from a near-target scan.
//   dist2      |q*alpha - p|^2 in double-double
//   boundary   decision fell inside the boundary band
//   polar      p == q*alpha (exact in rational mode, thresholded in float mode)
struct NearHit {
  RationalApproximate pt;
  DD dist2;
  bool boundary = false;
  bool polar = false;
};

struct ScanStats {
  uint64_t boundary_hits = 0;
  uint64_t hits = 0;
  bool wide_window = false;  // c >= q_lo: window admits antipodal-type points
};

using NearVisitor = std::function<void(const NearHit&)>;

// Scan q in [q_lo, q_hi] for points with |q*alpha - p| < c.  alpha must be a
// unit vector within 1e-12; q_hi must not exceed kMaxDenominator (range
// error otherwise).  Visits hits in (q, lex p) order.
ScanStats enumerate_near(std::span<const double> alpha, double c, int64_t q_lo,
                         int64_t q_hi, const NearVisitor& visit);

// Same scan with exact membership against a rational target.
ScanStats enumerate_near(const RationalTarget& alpha, double c, int64_t q_lo,
                         int64_t q_hi, const NearVisitor& visit);

// Multi-threshold variant: one pass, hits classified against each c in
// c_list by the caller via the returned dist2.  The scan box uses
// max(c_list).  (Convenience wrapper over the float-alpha scan.)
ScanStats enumerate_near_multi(std::span<const double> alpha, double c_max,
                               int64_t q_lo, int64_t q_hi, const NearVisitor& visit);

using PointVisitor = std::function<void(const RationalApproximate&)>;

// All integer cone points with 1 <= q <= q_max, ordered by (q, lex p).
void enumerate_all(int n, int64_t q_max, const PointVisitor& visit);
std::vector<RationalApproximate> collect_all(int n, int64_t q_max);

// One point per line: q,p_1,...,p_{n+1},primitive (decimal, 0/1 flag).
void dump_points(std::ostream& out, std::span<const RationalApproximate> pts);

// Points of a transformed lattice g * Z^{n+2} restricted to the cone, with
// height (last coordinate) below height_bound: enumerates integer points up
// to a support bound derived from |g^{-1}| and maps them through g.
// Desk-scale only; throws std::range_error if the support bound exceeds
// kMaxDenominator.
class GroupElement;  // cone_core.hpp
struct TransformedPoint {
  std::vector<double> x;      // g * (p, q), length n+2
  RationalApproximate base;   // the integer preimage
};
std::vector<TransformedPoint> enumerate_transformed(const GroupElement& g,
                                                    double height_bound);

// floor(sqrt(v)) for v >= 0, exact.
uint64_t isqrt_u64(uint64_t v);
// Fast perfect-square rejection (mod 64 / 63 / 65 residue tables); a `true`
// answer still needs the isqrt confirmation.
bool maybe_square(uint64_t v);

// Largest q with q < cosh(T) (strict), as used by height windows.
int64_t height_limit(double T);

}  // namespace conecount
