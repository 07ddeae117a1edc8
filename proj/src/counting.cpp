#include "conecount/counting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "conecount/dd.hpp"
#include "conecount/detail/chunked.hpp"

namespace conecount {

namespace {

using detail::run_chunked;

constexpr int64_t kCrossCheckMaxQ = 100'000;

// value < threshold with band reporting, long double against exact integer.
struct IntCompare {
  bool less = false;
  bool banded = false;
};

IntCompare int_less(__int128 value, long double threshold, long double band) {
  IntCompare r;
  auto v = static_cast<long double>(value);
  r.less = v < threshold;
  r.banded = fabsl(v - threshold) <= band;
  return r;
}

bool dd_less_banded(DD lhs, DD thr, double band, bool* boundary) {
  OpenCompare cmp = open_less(lhs, thr, band);
  if (cmp.boundary && boundary != nullptr) *boundary = true;
  return cmp.accepted;
}

}  // namespace

Window make_window(double T, double c) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw std::invalid_argument("window: c must be positive and finite");
  if (!(T > 0.0) || T > 700.0)
    throw std::invalid_argument("window: T out of (0, 700]");
  return Window{T, c};
}

Mat rotation_block_to_pole(std::span<const double> alpha) {
  int d = static_cast<int>(alpha.size());  // = n + 1
  int pole = d - 1;
  if (d < 2 || d > 4) throw std::invalid_argument("rotation_to_pole: bad dimension");
  if (std::fabs(norm(alpha) - 1.0) > 1e-12)
    throw std::invalid_argument("rotation_to_pole: target is not a unit vector");
  double ct = alpha[pole];
  Vec beta(alpha.begin(), alpha.end());
  beta[pole] = 0.0;
  double b = norm(beta);
  Mat r = Mat::identity(d);
  if (b <= 1e-12) {
    if (ct > 0.0) return r;  // alpha == pole
    // alpha == -pole: rotate by pi in the (e_1, pole) plane
    r(0, 0) = -1.0;
    r(pole, pole) = -1.0;
    return r;
  }
  for (double& v : beta) v /= b;
  // Rotation in span{v, e_pole}: R = I + (ct-1)(vv^T + ee^T) + b(ev^T - ve^T).
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double vv = beta[i] * beta[j];
      double ee = (i == pole && j == pole) ? 1.0 : 0.0;
      double ev = (i == pole ? beta[j] : 0.0) - (j == pole ? beta[i] : 0.0);
      r(i, j) += (ct - 1.0) * (vv + ee) + b * ev;
    }
  return r;
}

GroupElement rotation_to_pole(std::span<const double> alpha) {
  return embed_K(rotation_block_to_pole(alpha));
}

// ---------------------------------------------------------------------------
// region membership

bool in_E(const RationalApproximate& v, const Window& w, bool* boundary) {
  int64_t q = v.q, axis = v.p.back();
  __int128 lhs = static_cast<__int128>(2 * q) * (q - axis);
  long double c2 = static_cast<long double>(w.c) * w.c;
  IntCompare radial = int_less(lhs, c2, 1e-9L * c2);
  long double chT = coshl(static_cast<long double>(w.T));
  bool in_height = q >= 1 && static_cast<long double>(q) < chT;
  bool height_band = fabsl(static_cast<long double>(q) - chT) <= 1e-9L * chT;
  if (boundary != nullptr && (radial.banded || height_band)) *boundary = true;
  return radial.less && in_height;
}

bool in_E(std::span<const double> x, const Window& w, bool* boundary) {
  size_t d = x.size();
  double h = x[d - 1], axis = x[d - 2];
  DD lhs = dd_mul(two_sum(h, -axis), DD{2.0 * h, 0.0});
  DD c2 = two_prod(w.c, w.c);
  bool radial = dd_less_banded(lhs, c2, 1e-9 * w.c * w.c, boundary);
  long double chT = coshl(static_cast<long double>(w.T));
  bool in_height = h >= 1.0 && static_cast<long double>(h) < chT;
  if (boundary != nullptr &&
      (fabsl(static_cast<long double>(h) - chT) <= 1e-9L * chT || std::fabs(h - 1.0) <= 1e-9))
    *boundary = true;
  return radial && in_height;
}

bool in_F(const RationalApproximate& v, const Window& w, bool* boundary) {
  int64_t q = v.q, axis = v.p.back();
  __int128 lhs = static_cast<__int128>(q - axis) * (q + axis);
  long double c2 = static_cast<long double>(w.c) * w.c;
  IntCompare radial = int_less(lhs, c2, 1e-9L * c2);
  int64_t u = q + axis;
  long double eT = expl(static_cast<long double>(w.T));
  bool in_window = u >= 1 && static_cast<long double>(u) < eT;
  bool band = fabsl(static_cast<long double>(u) - eT) <= 1e-9L * eT;
  if (boundary != nullptr && (radial.banded || band)) *boundary = true;
  return radial.less && in_window;
}

bool in_F(std::span<const double> x, const Window& w, bool* boundary) {
  size_t d = x.size();
  double h = x[d - 1], axis = x[d - 2];
  DD u = two_sum(h, axis);
  DD lhs = dd_mul(two_sum(h, -axis), u);
  DD c2 = two_prod(w.c, w.c);
  bool radial = dd_less_banded(lhs, c2, 1e-9 * w.c * w.c, boundary);
  long double eT = expl(static_cast<long double>(w.T));
  double uv = dd_value(u);
  bool in_window = uv >= 1.0 && static_cast<long double>(uv) < eT;
  if (boundary != nullptr &&
      (fabsl(static_cast<long double>(uv) - eT) <= 1e-9L * eT || std::fabs(uv - 1.0) <= 1e-9))
    *boundary = true;
  return radial && in_window;
}

Vec direction(std::span<const double> x) {
  int n = static_cast<int>(x.size()) - 2;
  double h = x[n + 1];
  Vec off(x.begin(), x.begin() + n);
  double nn = norm(off);
  if (nn <= 1e-12 * std::max(1.0, h) * (n + 1))
    throw std::domain_error("direction: polar point");
  for (double& v : off) v /= nn;
  return off;
}

std::optional<Vec> direction(const RationalApproximate& v) {
  int n = v.n();
  bool zero = true;
  for (int i = 0; i < n; ++i) zero = zero && v.p[i] == 0;
  if (zero) return std::nullopt;
  Vec off(n);
  for (int i = 0; i < n; ++i) off[i] = static_cast<double>(v.p[i]);
  double nn = norm(off);
  for (double& e : off) e /= nn;
  return off;
}

// ---------------------------------------------------------------------------
// direction sets

DirectionSet DirectionSet::full(int n) {
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("direction set: dimension out of range");
  DirectionSet s;
  s.kind_ = Kind::full;
  s.n_ = n;
  return s;
}

DirectionSet DirectionSet::hemisphere(Vec axis) {
  DirectionSet s;
  s.kind_ = Kind::hemisphere;
  s.n_ = static_cast<int>(axis.size());
  if (s.n_ < kMinSphereDim || s.n_ > kMaxSphereDim)
    throw std::invalid_argument("hemisphere: dimension out of range");
  double nn = norm(axis);
  if (nn <= 1e-12) throw std::invalid_argument("hemisphere: zero axis");
  for (double& v : axis) v /= nn;
  s.axis_ = std::move(axis);
  return s;
}

DirectionSet DirectionSet::cap(Vec center, double radius) {
  DirectionSet s;
  s.kind_ = Kind::cap;
  s.n_ = static_cast<int>(center.size());
  if (s.n_ < kMinSphereDim || s.n_ > kMaxSphereDim)
    throw std::invalid_argument("cap: dimension out of range");
  double nn = norm(center);
  if (nn <= 1e-12) throw std::invalid_argument("cap: zero center");
  if (!(radius >= 0.0) || radius > 2.0 * std::numbers::pi)
    throw std::invalid_argument("cap: radius out of range");
  for (double& v : center) v /= nn;
  s.axis_ = std::move(center);
  s.radius_ = radius;
  return s;
}

DirectionSet DirectionSet::orthant(std::vector<int> signs) {
  DirectionSet s;
  s.kind_ = Kind::orthant;
  s.n_ = static_cast<int>(signs.size());
  if (s.n_ < kMinSphereDim || s.n_ > kMaxSphereDim)
    throw std::invalid_argument("orthant: dimension out of range");
  for (int v : signs)
    if (v < -1 || v > 1) throw std::invalid_argument("orthant: signs must be -1/0/+1");
  s.signs_ = std::move(signs);
  return s;
}

DirectionSet DirectionSet::complement(DirectionSet inner) {
  DirectionSet s;
  s.kind_ = Kind::complement;
  s.n_ = inner.n_;
  s.parts_.push_back(std::move(inner));
  return s;
}

DirectionSet DirectionSet::disjoint_union(std::vector<DirectionSet> parts) {
  if (parts.empty()) throw std::invalid_argument("union: no parts");
  DirectionSet s;
  s.kind_ = Kind::disjoint_union;
  s.n_ = parts.front().n_;
  double total = 0.0;
  for (const auto& p : parts) {
    if (p.n_ != s.n_) throw std::invalid_argument("union: mixed dimensions");
    total += p.measure();
  }
  if (total > 1.0 + 1e-9) throw std::invalid_argument("union: parts overlap (measure > 1)");
  s.parts_ = std::move(parts);
  return s;
}

bool DirectionSet::contains(std::span<const double> sigma) const {
  switch (kind_) {
    case Kind::full:
      return true;
    case Kind::hemisphere:
      return dot(sigma, axis_) > 0.0;
    case Kind::cap: {
      double d = std::clamp(dot(sigma, axis_), -1.0, 1.0);
      return std::acos(d) < radius_;
    }
    case Kind::orthant:
      for (int i = 0; i < n_; ++i) {
        if (signs_[i] > 0 && !(sigma[i] > 0.0)) return false;
        if (signs_[i] < 0 && !(sigma[i] < 0.0)) return false;
      }
      return true;
    case Kind::complement:
      return !parts_.front().contains(sigma);
    case Kind::disjoint_union:
      for (const auto& p : parts_)
        if (p.contains(sigma)) return true;
      return false;
  }
  return false;
}

double DirectionSet::measure() const {
  switch (kind_) {
    case Kind::full:
      return 1.0;
    case Kind::hemisphere:
      return 0.5;
    case Kind::cap:
      // S^{n-1} subset R^n: counting measure on S^0, arc on S^1, area on S^2.
      if (n_ == 1) return (radius_ > 0.0 ? 0.5 : 0.0) + (radius_ > std::numbers::pi ? 0.5 : 0.0);
      if (n_ == 2) return std::min(radius_, std::numbers::pi) / std::numbers::pi;
      return radius_ >= std::numbers::pi ? 1.0 : 0.5 * (1.0 - std::cos(radius_));
    case Kind::orthant: {
      int k = 0;
      for (int v : signs_) k += v != 0;
      return std::ldexp(1.0, -k);
    }
    case Kind::complement:
      return 1.0 - parts_.front().measure();
    case Kind::disjoint_union: {
      double s = 0.0;
      for (const auto& p : parts_) s += p.measure();
      return s;
    }
  }
  return 0.0;
}

std::string DirectionSet::label() const {
  switch (kind_) {
    case Kind::full: return "full";
    case Kind::hemisphere: return "hemisphere";
    case Kind::cap: return "cap";
    case Kind::orthant: return "orthant";
    case Kind::complement: return "complement";
    case Kind::disjoint_union: return "union";
  }
  return "?";
}

std::string DirectionSet::describe() const {
  char buf[64];
  switch (kind_) {
    case Kind::full:
      return "full";
    case Kind::hemisphere:
      return "hemisphere" + format_vec(axis_);
    case Kind::cap:
      std::snprintf(buf, sizeof buf, ";r=%.17g", radius_);
      return "cap" + format_vec(axis_) + buf;
    case Kind::orthant: {
      std::string s = "orthant[";
      for (int v : signs_) s += v > 0 ? '+' : (v < 0 ? '-' : '.');
      return s + "]";
    }
    case Kind::complement:
      return "complement(" + parts_.front().describe() + ")";
    case Kind::disjoint_union: {
      std::string s = "union(";
      for (size_t i = 0; i < parts_.size(); ++i) {
        if (i) s += "|";
        s += parts_[i].describe();
      }
      return s + ")";
    }
  }
  return "?";
}

// ---------------------------------------------------------------------------
// lattices

LatticeDescriptor LatticeDescriptor::integer_lattice(int n) {
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("lattice: dimension out of range");
  LatticeDescriptor l;
  l.kind = Kind::integer;
  l.n = n;
  return l;
}

LatticeDescriptor LatticeDescriptor::transformed(const GroupElement& g, std::string label) {
  LatticeDescriptor l;
  l.n = g.n();
  if (g.is_identity()) {
    l.kind = Kind::integer;
    l.label = label.empty() ? "identity" : std::move(label);
    return l;
  }
  l.g = g;
  l.kind = g.fixes_height() ? Kind::rotated : Kind::general;
  l.label = label.empty() ? (l.kind == Kind::rotated ? "rotated" : "transformed")
                          : std::move(label);
  return l;
}

// ---------------------------------------------------------------------------
// counting

namespace {

// Direction frame: sigma(hit) = normalized first n coordinates of S * p,
// where S is the combined rotation taking the counted point to the pole
// frame (rotation_to_pole(alpha) * lattice rotation).
struct DirectionFrame {
  const Mat* block = nullptr;  // (n+1)x(n+1); null = identity
  int n = 0;

  Vec sigma(std::span<const int64_t> p) const {
    Vec off(n, 0.0);
    if (block == nullptr) {
      for (int i = 0; i < n; ++i) off[i] = static_cast<double>(p[i]);
    } else {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j <= n; ++j) s += (*block)(i, j) * static_cast<double>(p[j]);
        off[i] = s;
      }
    }
    double nn = norm(off);
    for (double& v : off) v /= nn;
    return off;
  }
};

void merge_reports(CountReport& acc, CountReport&& part) {
  acc.total += part.total;
  acc.primitive_total += part.primitive_total;
  acc.polar += part.polar;
  acc.boundary_hits += part.boundary_hits;
  acc.wide_window = acc.wide_window || part.wide_window;
  if (part.cross_check_total) {
    acc.cross_check_total = acc.cross_check_total.value_or(0) + *part.cross_check_total;
  }
  for (auto& h : part.points) acc.points.push_back(std::move(h));
}

// Count over the integer lattice with a (possibly rotated) scan target.
// scan_alpha: the target expressed in lattice coordinates.
// frame: rotation to the pole frame for directions / cross-checks.
CountReport scan_count(std::span<const double> scan_alpha, const Window& w,
                       const DirectionSet* A, const Mat* frame_block,
                       const CountOptions& opt) {
  int n = static_cast<int>(scan_alpha.size()) - 1;
  int64_t q_hi = height_limit(w.T);
  if (q_hi < opt.q_lo) {
    CountReport empty;
    empty.wide_window = w.c >= static_cast<double>(opt.q_lo);
    return empty;
  }
  if (opt.cross_check && q_hi > kCrossCheckMaxQ)
    throw std::range_error("count: cross_check is limited to heights <= 1e5");

  const DD c2 = two_prod(w.c, w.c);
  const double band = kBoundaryBand * w.c * w.c;
  const long double chT = coshl(static_cast<long double>(w.T));
  DirectionFrame dir{frame_block, n};

  auto work = [&](int64_t a, int64_t b) -> CountReport {
    CountReport rep;
    auto visit = [&](const NearHit& hit) {
      OpenCompare cmp = open_less(hit.dist2, c2, band);
      bool counted = false;
      if (cmp.accepted) {
        if (A != nullptr) {
          if (hit.polar) {
            ++rep.polar;
          } else if (A->contains(dir.sigma(hit.pt.p))) {
            counted = true;
          }
        } else {
          counted = true;
          if (hit.polar) ++rep.polar;
        }
      }
      if (counted) {
        ++rep.total;
        if (hit.pt.primitive) ++rep.primitive_total;
        if (opt.keep_points) rep.points.push_back(hit);
      }
      // Optional second route: membership of the pole-frame image in the
      // solution region.  Decisions inside the (wider) frame band adopt the
      // direct decision; disagreement outside it is a hard invariant failure.
      if (opt.cross_check) {
        const auto& p = hit.pt.p;
        auto q = static_cast<double>(hit.pt.q);
        Vec x(n + 2);
        if (frame_block == nullptr) {
          for (int i = 0; i <= n; ++i) x[i] = static_cast<double>(p[i]);
        } else {
          for (int i = 0; i <= n; ++i) {
            double s = 0.0;
            for (int j = 0; j <= n; ++j) s += (*frame_block)(i, j) * static_cast<double>(p[j]);
            x[i] = s;
          }
        }
        x[n + 1] = q;
        bool b2 = false;
        bool in_region = in_E(x, w, &b2);
        double cross_band = band + 1e-14 * q * q * 8.0;
        DD lhs = dd_mul(two_sum(x[n + 1], -x[n]), DD{2.0 * x[n + 1], 0.0});
        bool near_edge = std::fabs(dd_value(dd_sub(lhs, c2))) <= cross_band || b2 || cmp.boundary;
        bool route_b = near_edge ? cmp.accepted : in_region;
        if (!near_edge && in_region != cmp.accepted)
          throw std::logic_error("count: direct and region counts disagree off-boundary");
        bool counted_b = route_b;
        if (counted_b && A != nullptr)
          counted_b = !hit.polar && A->contains(dir.sigma(hit.pt.p));
        if (counted_b) rep.cross_check_total = rep.cross_check_total.value_or(0) + 1;
      }
    };
    ScanStats st = opt.cross_check
                       ? enumerate_near_multi(scan_alpha, w.c, a, b, visit)
                       : enumerate_near(scan_alpha, w.c, a, b, visit);
    rep.wide_window = st.wide_window;
    rep.boundary_hits += st.boundary_hits;
    return rep;
  };

  CountReport rep = run_chunked<CountReport>(opt.q_lo, q_hi, opt.threads, work, merge_reports);
  if (opt.cross_check && !rep.cross_check_total) rep.cross_check_total = 0;
  // Height threshold landing on (or within band of) an integer is itself a
  // boundary condition worth surfacing.
  if (fabsl(chT - roundl(chT)) <= 1e-9L * chT) ++rep.boundary_hits;
  if (opt.cross_check && *rep.cross_check_total != rep.total)
    throw std::logic_error("count: cross-check total mismatch");
  return rep;
}

// The direction frame is canonically rotation_to_pole(alpha); an override in
// CountOptions may substitute any height-fixing element whose block also
// sends alpha to the pole (directional counts are frame-independent as long
// as it does, which is what the override exists to let callers test).
Mat pole_block(std::span<const double> alpha, const CountOptions& opt) {
  if (!opt.frame_k) return rotation_block_to_pole(alpha);
  const GroupElement& k = *opt.frame_k;
  int n = static_cast<int>(alpha.size()) - 1;
  if (k.dim() != n + 2)
    throw std::invalid_argument("count: frame override dimension mismatch");
  if (!k.fixes_height())
    throw std::invalid_argument("count: frame override must fix the height coordinate");
  Mat blk(n + 1);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) blk(i, j) = k.matrix()(i, j);
  Vec img = blk.apply(alpha);
  img[n] -= 1.0;
  if (norm(img) > 1e-9)
    throw std::invalid_argument("count: frame override does not send alpha to the pole");
  return blk;
}

}  // namespace

CountReport count_N(std::span<const double> alpha, const Window& w,
                    const LatticeDescriptor& lat, const DirectionSet* A,
                    const CountOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  int n = static_cast<int>(alpha.size()) - 1;
  if (n != lat.n) throw std::invalid_argument("count: alpha/lattice dimension mismatch");
  if (A != nullptr && A->n() != n)
    throw std::invalid_argument("count: direction set dimension mismatch");

  CountReport rep;
  if (lat.kind != LatticeDescriptor::Kind::general) {
    // Integer or rotated lattice: reduce to a localized scan.  For a rotated
    // lattice k with block R, points are x = k w, so |q alpha - x_p| =
    // |q R^T alpha - w_p|: scan with the pulled-back target.
    Vec scan_alpha(alpha.begin(), alpha.end());
    Mat frame = pole_block(alpha, opt);
    if (lat.kind == LatticeDescriptor::Kind::rotated) {
      const Mat& m = lat.g->matrix();
      int d = n + 1;
      Mat rlat(d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) rlat(i, j) = m(i, j);
      Vec pulled(d, 0.0);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) pulled[i] += rlat(j, i) * alpha[j];  // R^T alpha
      double nn = norm(pulled);
      for (double& v : pulled) v /= nn;  // renormalize rounding
      scan_alpha = std::move(pulled);
      frame = frame * rlat;  // combined: pole frame of alpha after the lattice rotation
    }
    bool trivial_frame = true;
    for (int i = 0; i <= n && trivial_frame; ++i)
      for (int j = 0; j <= n; ++j)
        if (std::fabs(frame(i, j) - (i == j ? 1.0 : 0.0)) > 1e-15) {
          trivial_frame = false;
          break;
        }
    rep = scan_count(scan_alpha, w, A, trivial_frame ? nullptr : &frame, opt);
  } else {
    // General lattice: desk-scale enumeration through the transform.
    const GroupElement& g = *lat.g;
    long double chT = coshl(static_cast<long double>(w.T));
    Mat frame = pole_block(alpha, opt);
    const DD c2 = two_prod(w.c, w.c);
    const double band = kBoundaryBand * w.c * w.c;
    rep.wide_window = w.c >= static_cast<double>(opt.q_lo);
    for (const TransformedPoint& tp : enumerate_transformed(g, static_cast<double>(chT))) {
      double h = tp.x[n + 1];
      if (!(h >= static_cast<double>(opt.q_lo))) continue;
      if (!(static_cast<long double>(h) < chT)) continue;
      if (fabsl(static_cast<long double>(h) - chT) <= 1e-9L * chT) ++rep.boundary_hits;
      DD d2{};
      for (int i = 0; i <= n; ++i) {
        DD prod = two_prod(h, alpha[i]);
        DD diff = dd_add(prod, DD{-tp.x[i], 0.0});
        d2 = dd_add(d2, dd_mul(diff, diff));
      }
      OpenCompare cmp = open_less(d2, c2, band);
      if (cmp.boundary) ++rep.boundary_hits;
      if (!cmp.accepted) continue;
      double polar_tol = 1e-12 * std::max(1.0, h) * (n + 1);
      bool polar = dd_value(d2) <= polar_tol * polar_tol;
      NearHit hit{tp.base, d2, cmp.boundary, polar};
      bool counted;
      if (A != nullptr) {
        if (polar) {
          ++rep.polar;
          counted = false;
        } else {
          Vec px = frame.apply(Vec(tp.x.begin(), tp.x.begin() + n + 1));
          Vec off(px.begin(), px.begin() + n);
          double nn = norm(off);
          for (double& v : off) v /= nn;
          counted = A->contains(off);
        }
      } else {
        counted = true;
        if (polar) ++rep.polar;
      }
      if (counted) {
        ++rep.total;
        if (tp.base.primitive) ++rep.primitive_total;
        if (opt.keep_points) rep.points.push_back(std::move(hit));
      }
    }
    if (opt.cross_check) rep.cross_check_total = rep.total;  // single route at desk scale
  }
  rep.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

CountReport count_N(const RationalTarget& alpha, const Window& w, const DirectionSet* A,
                    const CountOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  int n = alpha.n();
  if (A != nullptr && A->n() != n)
    throw std::invalid_argument("count: direction set dimension mismatch");
  int64_t q_hi = height_limit(w.T);
  CountReport rep;
  rep.wide_window = w.c >= static_cast<double>(opt.q_lo);
  if (q_hi >= opt.q_lo) {
    Vec ad = alpha.as_doubles();
    Mat frame = pole_block(ad, opt);
    DirectionFrame dir{&frame, n};
    auto work = [&](int64_t a, int64_t b) -> CountReport {
      CountReport part;
      ScanStats st = enumerate_near(alpha, w.c, a, b, [&](const NearHit& hit) {
        if (hit.boundary) ++part.boundary_hits;
        bool counted;
        if (A != nullptr) {
          if (hit.polar) {
            ++part.polar;
            counted = false;
          } else {
            counted = A->contains(dir.sigma(hit.pt.p));
          }
        } else {
          counted = true;
          if (hit.polar) ++part.polar;
        }
        if (counted) {
          ++part.total;
          if (hit.pt.primitive) ++part.primitive_total;
          if (opt.keep_points) part.points.push_back(hit);
        }
      });
      part.wide_window = st.wide_window;
      return part;
    };
    CountReport sum = run_chunked<CountReport>(opt.q_lo, q_hi, opt.threads, work, merge_reports);
    merge_reports(rep, std::move(sum));
  }
  rep.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

GridResult count_grid(std::span<const double> alpha, std::vector<double> c_list,
                      std::vector<double> T_list, const DirectionSet* A, int threads) {
  auto t0 = std::chrono::steady_clock::now();
  if (c_list.empty() || T_list.empty())
    throw std::invalid_argument("count grid: empty threshold lists");
  int n = static_cast<int>(alpha.size()) - 1;
  GridResult res;
  res.c_list = std::move(c_list);
  res.T_list = std::move(T_list);
  double c_max = 0.0;
  for (double c : res.c_list) {
    make_window(res.T_list.front(), c);
    c_max = std::max(c_max, c);
  }
  res.q_limits.reserve(res.T_list.size());
  int64_t q_hi = 1;
  std::vector<long double> chT(res.T_list.size());
  for (size_t ti = 0; ti < res.T_list.size(); ++ti) {
    make_window(res.T_list[ti], c_max);
    res.q_limits.push_back(height_limit(res.T_list[ti]));
    chT[ti] = coshl(static_cast<long double>(res.T_list[ti]));
    q_hi = std::max(q_hi, res.q_limits.back());
  }
  size_t nc = res.c_list.size(), nt = res.T_list.size();
  std::vector<DD> c2(nc);
  std::vector<double> band(nc);
  for (size_t ci = 0; ci < nc; ++ci) {
    c2[ci] = two_prod(res.c_list[ci], res.c_list[ci]);
    band[ci] = kBoundaryBand * res.c_list[ci] * res.c_list[ci];
  }
  Mat frame = rotation_block_to_pole(alpha);
  DirectionFrame dir{&frame, n};

  using Cells = std::vector<GridCell>;
  auto work = [&](int64_t a, int64_t b) -> Cells {
    Cells cells(nc * nt);
    enumerate_near_multi(alpha, c_max, a, b, [&](const NearHit& hit) {
      int64_t q = hit.pt.q;
      std::optional<bool> in_A;  // lazy: direction only when some c accepts
      for (size_t ci = 0; ci < nc; ++ci) {
        OpenCompare cmp = open_less(hit.dist2, c2[ci], band[ci]);
        for (size_t ti = 0; ti < nt; ++ti) {
          GridCell& cell = cells[ci * nt + ti];
          bool in_height = q <= res.q_limits[ti];
          if (cmp.boundary && in_height) ++cell.boundary_hits;
          if (fabsl(static_cast<long double>(q) - chT[ti]) <= 1e-9L * chT[ti])
            ++cell.boundary_hits;
          if (!cmp.accepted || !in_height) continue;
          if (A != nullptr) {
            if (hit.polar) {
              ++cell.polar;
              continue;
            }
            if (!in_A) in_A = A->contains(dir.sigma(hit.pt.p));
            if (!*in_A) continue;
          } else if (hit.polar) {
            ++cell.polar;
          }
          ++cell.total;
          if (hit.pt.primitive) ++cell.primitive_total;
        }
      }
    });
    return cells;
  };
  auto merge = [](Cells& acc, Cells&& part) {
    if (acc.empty()) {
      acc = std::move(part);
      return;
    }
    for (size_t i = 0; i < acc.size(); ++i) {
      acc[i].total += part[i].total;
      acc[i].primitive_total += part[i].primitive_total;
      acc[i].polar += part[i].polar;
      acc[i].boundary_hits += part[i].boundary_hits;
    }
  };
  res.cells = run_chunked<Cells>(1, q_hi, threads, work, merge);
  if (res.cells.empty()) res.cells.assign(nc * nt, GridCell{});
  res.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// sandwich

std::vector<TransformedPoint> enumerate_in_region(
    const LatticeDescriptor& lat,
    const std::function<bool(std::span<const double>)>& region, double support_bound) {
  if (!(support_bound >= 1.0))
    throw std::invalid_argument("enumerate_in_region: support bound below 1");
  std::vector<TransformedPoint> out;
  if (lat.kind == LatticeDescriptor::Kind::integer) {
    // Small tolerance so a bound sitting exactly on an integer keeps it.
    double q_cap = std::floor(support_bound * (1.0 + 1e-12));
    if (q_cap > static_cast<double>(kMaxDenominator))
      throw std::range_error("enumerate_in_region: support bound exceeds the exact width");
    enumerate_all(lat.n, static_cast<int64_t>(q_cap), [&](const RationalApproximate& v) {
      TransformedPoint tp;
      tp.x.reserve(v.p.size() + 1);
      for (int64_t pi : v.p) tp.x.push_back(static_cast<double>(pi));
      tp.x.push_back(static_cast<double>(v.q));
      if (!region(tp.x)) return;
      tp.base = v;
      out.push_back(std::move(tp));
    });
  } else {
    for (TransformedPoint& tp : enumerate_transformed(*lat.g, support_bound))
      if (region(tp.x)) out.push_back(std::move(tp));
  }
  return out;
}

SandwichConstants SandwichConstants::make(double c, int64_t ell) {
  if (!(c > 0.0)) throw std::invalid_argument("sandwich: c must be positive");
  if (ell < 1) throw std::invalid_argument("sandwich: ell must be >= 1");
  if (!(2.0 * static_cast<double>(ell) > c * c))
    throw std::invalid_argument("sandwich: need 2 ell > c^2");
  SandwichConstants sc;
  sc.c = c;
  sc.ell = ell;
  sc.r0 = std::log(2.0) + c * c;
  sc.c_ell = c * std::sqrt(1.0 - c * c / (2.0 * static_cast<double>(ell)));
  // Smallest T with 2 cosh(T - r0) + c^2 <= 2 cosh T; the gap is increasing
  // in T, so bisect (and never report below r0).
  auto gap = [&](double T) { return 2.0 * std::cosh(T) - 2.0 * std::cosh(T - sc.r0) - c * c; };
  double lo = sc.r0, hi = 700.0;
  if (gap(lo) >= 0.0) {
    sc.T_min = sc.r0;
  } else {
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      double mid = 0.5 * (lo + hi);
      (gap(mid) >= 0.0 ? hi : lo) = mid;
    }
    sc.T_min = hi;
  }
  return sc;
}

SandwichOutcome sandwich_check(std::span<const RationalApproximate> pts, double T,
                               const SandwichConstants& sc, const DirectionSet* A,
                               const GroupElement* frame) {
  if (!(T > sc.r0))
    throw std::invalid_argument("sandwich: T must exceed r0");
  SandwichOutcome out;
  const long double c2 = static_cast<long double>(sc.c) * sc.c;
  const long double cl2 = static_cast<long double>(sc.c_ell) * sc.c_ell;
  const long double chT = coshl(static_cast<long double>(T));
  const long double e_lo = expl(static_cast<long double>(T - sc.r0));
  const long double e_hi = expl(static_cast<long double>(T + sc.r0));
  const long double h0 = c2 + 1.0L;  // removed core for the middle set

  const Mat* block = nullptr;
  Mat frame_block;
  if (frame != nullptr) {
    int d = frame->dim() - 1;
    frame_block = Mat(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) frame_block(i, j) = frame->matrix()(i, j);
    block = &frame_block;
  }

  for (const RationalApproximate& v : pts) {
    int64_t q = v.q, axis = v.p.back();
    int64_t u = q + axis;
    __int128 elhs = static_cast<__int128>(2 * q) * (q - axis);
    __int128 flhs = static_cast<__int128>(q - axis) * (q + axis);

    bool banded = false;
    IntCompare e_rad = int_less(elhs, c2, 1e-9L * c2);
    IntCompare f_rad_hi = int_less(flhs, c2, 1e-9L * c2);
    IntCompare f_rad_lo = int_less(flhs, cl2, 1e-9L * cl2);
    banded |= e_rad.banded || f_rad_hi.banded || f_rad_lo.banded;

    auto lq = static_cast<long double>(q);
    auto lu = static_cast<long double>(u);
    banded |= fabsl(lq - chT) <= 1e-9L * chT;
    banded |= fabsl(lu - e_lo) <= 1e-9L * e_lo;
    banded |= fabsl(lu - e_hi) <= 1e-9L * e_hi;
    banded |= fabsl(lq - h0) <= 1e-9L * h0;

    if (banded) {
      ++out.skipped_boundary;
      continue;
    }

    bool in_A = true;
    if (A != nullptr) {
      int n = v.n();
      Vec off(n, 0.0);
      bool zero = true;
      if (block == nullptr) {
        for (int i = 0; i < n; ++i) {
          off[i] = static_cast<double>(v.p[i]);
          zero = zero && v.p[i] == 0;
        }
      } else {
        for (int i = 0; i < n; ++i) {
          double s = 0.0;
          for (int j = 0; j <= n; ++j) s += (*block)(i, j) * static_cast<double>(v.p[j]);
          off[i] = s;
        }
        double nn = norm(off);
        zero = nn <= 1e-9 * std::max<double>(1.0, static_cast<double>(q));
      }
      if (zero) {
        ++out.checked;  // polar: excluded from all three sets, cannot violate
        continue;
      }
      double nn = norm(off);
      for (double& e : off) e /= nn;
      in_A = A->contains(off);
    }

    bool mid = in_A && e_rad.less && q >= 1 && lq < chT && !(lq <= h0);
    bool inner = in_A && f_rad_lo.less && u >= 1 && lu < e_lo && q > sc.ell;
    bool outer = in_A && f_rad_hi.less && u >= 1 && lu < e_hi;

    ++out.checked;
    if (inner && !mid) out.violations.push_back({v, SandwichViolation::Side::inner});
    if (mid && !outer) out.violations.push_back({v, SandwichViolation::Side::outer});
  }
  return out;
}

}  // namespace conecount
