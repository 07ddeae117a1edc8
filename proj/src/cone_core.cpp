#include "conecount/cone_core.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace conecount {

Mat Mat::identity(int d) {
  Mat m(d);
  for (int i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::transposed() const {
  Mat r(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r(j, i) = (*this)(i, j);
  return r;
}

double Mat::det() const {
  // LU with partial pivoting; dimensions here are at most 5.
  Mat lu = *this;
  double d = 1.0;
  for (int col = 0; col < dim; ++col) {
    int piv = col;
    for (int r = col + 1; r < dim; ++r)
      if (std::fabs(lu(r, col)) > std::fabs(lu(piv, col))) piv = r;
    if (lu(piv, col) == 0.0) return 0.0;
    if (piv != col) {
      for (int j = 0; j < dim; ++j) std::swap(lu(piv, j), lu(col, j));
      d = -d;
    }
    d *= lu(col, col);
    for (int r = col + 1; r < dim; ++r) {
      double f = lu(r, col) / lu(col, col);
      for (int j = col; j < dim; ++j) lu(r, j) -= f * lu(col, j);
    }
  }
  return d;
}

double Mat::max_abs() const {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

double Mat::max_abs_diff(const Mat& other) const {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - other.a[i]));
  return m;
}

Vec Mat::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim)
    throw std::invalid_argument("Mat::apply: size mismatch");
  Vec y(dim, 0.0);
  for (int i = 0; i < dim; ++i) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Mat operator*(const Mat& l, const Mat& r) {
  if (l.dim != r.dim) throw std::invalid_argument("Mat product: size mismatch");
  Mat out(l.dim);
  for (int i = 0; i < l.dim; ++i)
    for (int k = 0; k < l.dim; ++k) {
      double lik = l(i, k);
      if (lik == 0.0) continue;
      for (int j = 0; j < l.dim; ++j) out(i, j) += lik * r(k, j);
    }
  return out;
}

Mat minkowski_gram(int d) {
  Mat j = Mat::identity(d);
  j(d - 1, d - 1) = -1.0;
  return j;
}

double eval_Q(std::span<const double> x) {
  double s = 0.0;
  size_t d = x.size();
  for (size_t i = 0; i + 1 < d; ++i) s += x[i] * x[i];
  return s - x[d - 1] * x[d - 1];
}

double bracket(std::span<const double> x) {
  size_t d = x.size();
  return x[d - 1] + x[d - 2];
}

long long bracket(std::span<const long long> v) {
  size_t d = v.size();
  return v[d - 1] + v[d - 2];
}

bool on_cone_exact(std::span<const long long> v) {
  size_t d = v.size();
  if (d < 3 || v[d - 1] < 0) return false;
  __int128 s = 0;
  for (size_t i = 0; i + 1 < d; ++i) s += static_cast<__int128>(v[i]) * v[i];
  return s == static_cast<__int128>(v[d - 1]) * v[d - 1];
}

ConeVector make_cone_vector(Vec x, double tol) {
  int n = static_cast<int>(x.size()) - 2;
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("make_cone_vector: dimension out of range");
  double n2 = 0.0;
  for (double v : x) n2 += v * v;
  if (x.back() < 0.0)
    throw std::invalid_argument("make_cone_vector: negative height");
  if (std::fabs(eval_Q(x)) > tol * (1.0 + n2))
    throw std::invalid_argument("make_cone_vector: not on the cone");
  ConeVector cv;
  cv.x = std::move(x);
  return cv;
}

GroupElement::GroupElement(Mat m, double tol) : m_(std::move(m)) {
  int d = m_.dim;
  int n = d - 2;
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("GroupElement: dimension out of range");
  double scale = 1.0 + m_.max_abs() * m_.max_abs();
  Mat j = minkowski_gram(d);
  Mat gtjg = m_.transposed() * (j * m_);
  if (gtjg.max_abs_diff(j) > tol * scale)
    throw std::invalid_argument("GroupElement: form not preserved");
  if (std::fabs(m_.det() - 1.0) > tol * scale)
    throw std::invalid_argument("GroupElement: determinant not 1");
  if (m_(d - 1, d - 1) <= 0.0)
    throw std::invalid_argument("GroupElement: wrong component (height reversed)");
}

GroupElement GroupElement::identity(int n) { return GroupElement(Mat::identity(n + 2)); }

ConeVector GroupElement::apply(const ConeVector& v) const {
  ConeVector out = make_cone_vector(m_.apply(v.x));
  return out;
}

GroupElement GroupElement::inverse() const {
  Mat j = minkowski_gram(m_.dim);
  return GroupElement(j * (m_.transposed() * j));
}

GroupElement operator*(const GroupElement& l, const GroupElement& r) {
  return GroupElement(l.m_ * r.m_);
}

bool GroupElement::fixes_height(double tol) const {
  int d = m_.dim;
  double scale = 1.0 + m_.max_abs() * m_.max_abs();
  for (int i = 0; i < d - 1; ++i)
    if (std::fabs(m_(d - 1, i)) > tol * scale || std::fabs(m_(i, d - 1)) > tol * scale)
      return false;
  return std::fabs(m_(d - 1, d - 1) - 1.0) <= tol * scale;
}

bool GroupElement::is_identity(double tol) const {
  return m_.max_abs_diff(Mat::identity(m_.dim)) <= tol * (1.0 + m_.max_abs());
}

GroupElement make_g_t(int n, double t) {
  int d = n + 2;
  Mat m = Mat::identity(d);
  double ch = std::cosh(t), sh = std::sinh(t);
  m(d - 2, d - 2) = ch;
  m(d - 2, d - 1) = -sh;
  m(d - 1, d - 2) = -sh;
  m(d - 1, d - 1) = ch;
  return GroupElement(std::move(m));
}

GroupElement make_u_y(std::span<const double> y) {
  int n = static_cast<int>(y.size());
  int d = n + 2;
  double half = 0.0;
  for (double v : y) half += v * v;
  half *= 0.5;
  Mat m = Mat::identity(d);
  for (int i = 0; i < n; ++i) {
    m(i, d - 2) = -y[i];
    m(i, d - 1) = y[i];
    m(d - 2, i) = y[i];
    m(d - 1, i) = y[i];
  }
  m(d - 2, d - 2) = 1.0 - half;
  m(d - 2, d - 1) = half;
  m(d - 1, d - 2) = -half;
  m(d - 1, d - 1) = 1.0 + half;
  return GroupElement(std::move(m));
}

GroupElement embed_K(const Mat& rotation, double tol) {
  int dr = rotation.dim;
  Mat rtr = rotation.transposed() * rotation;
  if (rtr.max_abs_diff(Mat::identity(dr)) > tol * (1.0 + rotation.max_abs() * rotation.max_abs()))
    throw std::invalid_argument("embed_K: block is not orthogonal");
  if (std::fabs(rotation.det() - 1.0) > tol * 10.0)
    throw std::invalid_argument("embed_K: block is not special orthogonal");
  Mat m = Mat::identity(dr + 1);
  for (int i = 0; i < dr; ++i)
    for (int j = 0; j < dr; ++j) m(i, j) = rotation(i, j);
  return GroupElement(std::move(m));
}

IwasawaFactors iwasawa_decompose(const GroupElement& g, double tol) {
  int d = g.dim();
  int n = d - 2;
  const Mat& m = g.matrix();
  // Last column w = g e_{n+2}; by the factorization u_y g_t k e_{n+2} with
  // k e_{n+2} = e_{n+2}:  w_{n+2} - w_{n+1} = e^t  and  (w_1..w_n) = y e^t.
  double wlast = m(d - 1, d - 1), wprev = m(d - 2, d - 1);
  double diff = wlast - wprev;
  if (!(diff > 0.0))
    throw std::invalid_argument("iwasawa_decompose: last column outside the chart");
  double t = std::log(diff);
  Vec y(n);
  for (int i = 0; i < n; ++i) y[i] = m(i, d - 1) / diff;

  Vec neg_y(n);
  for (int i = 0; i < n; ++i) neg_y[i] = -y[i];
  GroupElement k = make_g_t(n, -t) * (make_u_y(neg_y) * g);
  if (!k.fixes_height(tol))
    throw std::invalid_argument("iwasawa_decompose: residual factor is not a rotation");
  IwasawaFactors f{std::move(y), t, std::move(k)};
  return f;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::string format_vec(std::span<const double> v) {
  std::string out = "(";
  char buf[32];
  for (size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ", ";
    out += buf;
  }
  out += ")";
  return out;
}

}  // namespace conecount
