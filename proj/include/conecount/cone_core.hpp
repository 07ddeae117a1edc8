#pragma once
// Linear algebra for the Minkowski form
//
//     Q(x) = x_1^2 + ... + x_{n+1}^2 - x_{n+2}^2        on R^{n+2},
//
// the positive light cone  L = { Q = 0, x_{n+2} >= 0 },  and the identity
// component G = SO(n+1,1)^o acting on it.  Supported dimensions n = 1, 2, 3.
//
// Distinguished subgroups (all returned as validated GroupElement):
//
//   make_g_t(t)   hyperbolic rotation of the last two coordinates,
//                 [[cosh t, -sinh t], [-sinh t, cosh t]]; scales the
//                 bracket [x] = x_{n+2} + x_{n+1} by e^{-t}.
//   make_u_y(y)   horospherical shear, y in R^n; commutes into the
//                 contracting direction of {g_t}.
//   embed_K(R)    block-diagonal (R, 1) with R in SO(n+1); fixes the
//                 last coordinate.
//
// iwasawa_decompose writes any g in G as u_y g_t k with k in the block
// rotation subgroup.  All validation is against the fixed tolerance
// kGroupTol, scaled by the squared size of the matrix entries (products of
// large hyperbolic factors lose absolute precision quadratically).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace conecount {

inline constexpr double kGroupTol = 1e-9;
inline constexpr int kMinSphereDim = 1;
inline constexpr int kMaxSphereDim = 3;

using Vec = std::vector<double>;

// Dense square matrix, row-major, dimensions up to 5 in practice.
struct Mat {
  int dim = 0;
  std::vector<double> a;

  Mat() = default;
  explicit Mat(int d) : dim(d), a(static_cast<size_t>(d) * d, 0.0) {}

  static Mat identity(int d);

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * dim + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * dim + j]; }

  Mat transposed() const;
  double det() const;          // LU with partial pivoting
  double max_abs() const;      // largest |entry|
  double max_abs_diff(const Mat& other) const;

  Vec apply(std::span<const double> x) const;
  friend Mat operator*(const Mat& l, const Mat& r);
};

// The Gram matrix J = diag(1,...,1,-1) of Q in dimension d = n+2.
Mat minkowski_gram(int d);

// Q(x) for a real vector of length n+2.
double eval_Q(std::span<const double> x);

// Bracket [x] = x_{n+2} + x_{n+1} (last plus second-to-last coordinate).
double bracket(std::span<const double> x);
long long bracket(std::span<const long long> v);

// Exact cone membership for integer vectors: sum p_i^2 == q^2 with q >= 0,
// evaluated in 128-bit arithmetic.
bool on_cone_exact(std::span<const long long> v);

// A point of the positive light cone.  `integral` marks vectors that came
// from integer data (kept exact by the caller); real vectors are validated
// to |Q(x)| <= tol * (1 + |x|^2) and x_{n+2} >= 0.
struct ConeVector {
  Vec x;
  bool integral = false;
  int n() const { return static_cast<int>(x.size()) - 2; }
  double height() const { return x.back(); }
};

ConeVector make_cone_vector(Vec x, double tol = kGroupTol);

// Element of G = SO(n+1,1)^o.  Construction validates g^T J g = J and
// det g = 1 (both within kGroupTol scaled by entry size) plus the
// orientation condition g_{n+2,n+2} > 0 picking the identity component.
// Throws std::invalid_argument on failure.
class GroupElement {
 public:
  explicit GroupElement(Mat m, double tol = kGroupTol);
  static GroupElement identity(int n);

  int n() const { return m_.dim - 2; }
  int dim() const { return m_.dim; }
  const Mat& matrix() const { return m_; }

  Vec apply(std::span<const double> x) const { return m_.apply(x); }
  ConeVector apply(const ConeVector& v) const;

  GroupElement inverse() const;  // J g^T J, exact up to roundoff
  friend GroupElement operator*(const GroupElement& l, const GroupElement& r);

  // True when the matrix is block-diagonal (R, 1): fixes the last coordinate.
  bool fixes_height(double tol = kGroupTol) const;
  // True within tol of the identity.
  bool is_identity(double tol = kGroupTol) const;

 private:
  Mat m_;
};

GroupElement make_g_t(int n, double t);
GroupElement make_u_y(std::span<const double> y);

// Embed R in SO(n+1) as the block-diagonal element (R, 1).
GroupElement embed_K(const Mat& rotation, double tol = kGroupTol);

struct IwasawaFactors {
  Vec y;           // horospherical part, length n
  double t = 0.0;  // flow time
  GroupElement k;  // block rotation
};

// g = u_y * g_t * k.  Derivation: the last column w = g e_{n+2} determines
// t and y because u_y g_t e_{n+2} has last-minus-second-last component e^t
// and offset part y e^t... concretely t = log(w_{n+2} - w_{n+1}) and
// y = (w_1,...,w_n) e^{-t}; then k = g_{-t} u_{-y} g is checked to fix the
// last coordinate.
IwasawaFactors iwasawa_decompose(const GroupElement& g, double tol = kGroupTol);

// Euclidean helpers on plain vectors.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
std::string format_vec(std::span<const double> v);

}  // namespace conecount
