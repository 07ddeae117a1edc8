#pragma once
// Counting rational approximates on the sphere.
//
// For a unit target alpha in S^n and a window (T, c), the count
//
//     N_{T,c}(alpha) = #{ (p, q) integer cone points :
//                         |q alpha - p| < c,  1 <= q < cosh T }
//
// has two equivalent descriptions.  Directly it is the number of solutions
// of the Diophantine inequality above.  Geometrically, rotate alpha to the
// pole u_{n+1} by k = rotation_to_pole(alpha): then (p, q) is a solution
// iff k(p,q) lies in the solution region
//
//     E_{T,c} = { x on the cone : 2 x_{n+2} (x_{n+2} - x_{n+1}) < c^2,
//                 1 <= x_{n+2} < cosh T },
//
// because |q alpha - p|^2 = 2q(q - <alpha, p>) on the cone.  The region
//
//     F_{T,c} = { x : x_{n+2}^2 - x_{n+1}^2 < c^2, 1 <= [x] < e^T },
//     [x] = x_{n+2} + x_{n+1}  (the bracket),
//
// is the flow-compatible version ([g_t x] = e^{-t}[x]); E is sandwiched
// between brackets of F up to the constants in SandwichConstants, and the
// two counts agree up to boundary shells (sandwich_check verifies the
// inclusions pointwise on enumerated point sets).
//
// Direction sets A restrict the count to solutions whose direction
// pi(x) = (x_1..x_n)/|(x_1..x_n)| (computed in the pole frame) lies in A.
// Polar points (p = q alpha, direction undefined) are excluded from every
// directional count and tallied separately.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conecount/cone_core.hpp"
#include "conecount/rational_points.hpp"

namespace conecount {

struct Window {
  double T = 0.0;
  double c = 0.0;
};

// Validates 0 < c, 0 < T <= 700 (cosh overflow guard).
Window make_window(double T, double c);

// Rotation k in SO(n+1) (embedded block-diagonally) with k alpha = u_{n+1}.
GroupElement rotation_to_pole(std::span<const double> alpha);
// The (n+1)x(n+1) rotation block itself.
Mat rotation_block_to_pole(std::span<const double> alpha);

// Membership tests.  The integer overloads are exact (128-bit) against
// double thresholds with a relative guard band; *boundary is set when the
// decision fell inside the band.  Real overloads use double-double.
bool in_E(const RationalApproximate& v, const Window& w, bool* boundary = nullptr);
bool in_E(std::span<const double> x, const Window& w, bool* boundary = nullptr);
bool in_F(const RationalApproximate& v, const Window& w, bool* boundary = nullptr);
bool in_F(std::span<const double> x, const Window& w, bool* boundary = nullptr);

// Direction of a nonpolar cone point: first n coordinates normalized.
// Throws std::domain_error on polar input (|offset| ~ rounding of height).
Vec direction(std::span<const double> x);
// Exact variant for integer points: nullopt iff polar (offset exactly zero).
std::optional<Vec> direction(const RationalApproximate& v);

// Measurable subsets of the direction sphere S^{n-1} subset R^n with exact
// closed-form measure (normalized to vol(S^{n-1}) = 1).
class DirectionSet {
 public:
  enum class Kind { full, hemisphere, cap, orthant, complement, disjoint_union };

  static DirectionSet full(int n);
  static DirectionSet hemisphere(Vec axis);          // { sigma . axis > 0 }
  static DirectionSet cap(Vec center, double radius);  // { angle(sigma,center) < radius }
  static DirectionSet orthant(std::vector<int> signs);  // entries -1/0/+1; 0 free
  static DirectionSet complement(DirectionSet inner);   // includes inner's boundary
  static DirectionSet disjoint_union(std::vector<DirectionSet> parts);

  int n() const { return n_; }
  Kind kind() const { return kind_; }
  bool contains(std::span<const double> sigma) const;
  double measure() const;
  std::string label() const;     // short kind tag for CSV
  std::string describe() const;  // kind plus parameters

 private:
  DirectionSet() = default;
  Kind kind_ = Kind::full;
  int n_ = 0;
  Vec axis_;
  double radius_ = 0.0;
  std::vector<int> signs_;
  std::vector<DirectionSet> parts_;  // complement: 1 entry; union: >= 1
};

// The lattice being counted: integer cone points, a rotated copy, or a
// general transformed copy g Z^{n+2} (desk scale only).
struct LatticeDescriptor {
  enum class Kind { integer, rotated, general };
  Kind kind = Kind::integer;
  int n = 1;
  std::optional<GroupElement> g;  // empty iff integer
  std::string label = "identity";

  static LatticeDescriptor integer_lattice(int n);
  // Classifies g: identity -> integer, height-fixing -> rotated, else general.
  static LatticeDescriptor transformed(const GroupElement& g, std::string label = "");
};

struct CountOptions {
  int threads = 1;
  bool cross_check = false;   // recount via rotated-region membership, assert equal
  bool keep_points = false;   // retain the solutions in the report
  int64_t q_lo = 1;
  // Direction-frame override: any height-fixing element whose block sends
  // alpha to the pole may serve as the frame (the canonical choice is
  // rotation_to_pole).  Validated; directional counts must not depend on it.
  std::optional<GroupElement> frame_k;
};

struct CountReport {
  int64_t total = 0;
  int64_t primitive_total = 0;
  int64_t polar = 0;           // solutions with p = q alpha (undirected tally)
  uint64_t boundary_hits = 0;
  bool wide_window = false;
  double elapsed_ms = 0.0;
  std::optional<int64_t> cross_check_total;
  std::vector<NearHit> points;  // filled when keep_points
};

// The count N_{T,c,A}(alpha; lattice).  A == nullptr counts without a
// direction condition (polar points included); with A, polar points are
// excluded and tallied in `polar`.
CountReport count_N(std::span<const double> alpha, const Window& w,
                    const LatticeDescriptor& lat, const DirectionSet* A = nullptr,
                    const CountOptions& opt = {});
// Exact-target variant (integer lattice only).
CountReport count_N(const RationalTarget& alpha, const Window& w,
                    const DirectionSet* A = nullptr, const CountOptions& opt = {});

// Multi-threshold engine: one scan of the integer lattice serves a whole
// (c, T) grid.  Cells are c-major: cell(ci, ti) = cells[ci * T_list.size() + ti].
struct GridCell {
  int64_t total = 0;
  int64_t primitive_total = 0;
  int64_t polar = 0;
  uint64_t boundary_hits = 0;
};

struct GridResult {
  std::vector<double> c_list, T_list;
  std::vector<GridCell> cells;
  std::vector<int64_t> q_limits;  // strict height limit per T
  double elapsed_ms = 0.0;
  const GridCell& cell(size_t ci, size_t ti) const { return cells[ci * T_list.size() + ti]; }
};

GridResult count_grid(std::span<const double> alpha, std::vector<double> c_list,
                      std::vector<double> T_list, const DirectionSet* A = nullptr,
                      int threads = 1);

// Every lattice point inside a region (a predicate over ambient vectors whose
// support lies in {height <= support_bound}): enumerates base integer points
// up to an operator-norm-inflated height bound, maps through the lattice
// transform, filters.  Desk scale; std::range_error when the inflated bound
// exceeds kMaxDenominator.
std::vector<TransformedPoint> enumerate_in_region(
    const LatticeDescriptor& lat,
    const std::function<bool(std::span<const double>)>& region, double support_bound);

// Constants of the bracket sandwich
//     F_{T-r0, c_ell} \ C_ell  subset  E_{T,c} \ C_0  subset  F_{T+r0, c}
// with r0 = log 2 + c^2, c_ell = c sqrt(1 - c^2/(2 ell)), C_0 = {height <=
// c^2 + 1}, C_ell = {height <= ell}, valid for T >= T_min (smallest T with
// 2 cosh(T - r0) + c^2 <= 2 cosh T, and never below r0).
struct SandwichConstants {
  double c = 0.0;
  int64_t ell = 0;
  double r0 = 0.0;
  double c_ell = 0.0;
  double T_min = 0.0;

  static SandwichConstants make(double c, int64_t ell);
};

struct SandwichViolation {
  RationalApproximate pt;
  enum class Side { inner, outer } side = Side::inner;
};

struct SandwichOutcome {
  int64_t checked = 0;
  int64_t skipped_boundary = 0;  // decisions inside a guard band: not judged
  std::vector<SandwichViolation> violations;
};

// Pointwise verification of the two inclusions over a supplied point set
// (integer points, pole frame).  A restricts all three sets consistently;
// frame, when given, is the rotation used for directions.
SandwichOutcome sandwich_check(std::span<const RationalApproximate> pts, double T,
                               const SandwichConstants& sc,
                               const DirectionSet* A = nullptr,
                               const GroupElement* frame = nullptr);

}  // namespace conecount
