#include "conecount/rational_points.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "conecount/cone_core.hpp"

namespace conecount {

namespace {

// Squares mod 64 / 63 / 65.  A non-residue in any of the three rejects;
// combined false-positive rate is about 1.5%, so the exact isqrt runs rarely.
constexpr uint64_t kSquareMask64 = [] {
  uint64_t m = 0;
  for (int k = 0; k < 64; ++k) m |= uint64_t{1} << ((k * k) & 63);
  return m;
}();

constexpr std::array<bool, 63> kSquareMod63 = [] {
  std::array<bool, 63> t{};
  for (int k = 0; k < 63; ++k) t[(k * k) % 63] = true;
  return t;
}();

constexpr std::array<bool, 65> kSquareMod65 = [] {
  std::array<bool, 65> t{};
  for (int k = 0; k < 65; ++k) t[(k * k) % 65] = true;
  return t;
}();

// ceil / floor to int64 without libm calls (hot path).
inline int64_t ceil_i64(double x) {
  auto v = static_cast<int64_t>(x);
  if (static_cast<double>(v) < x) ++v;
  return v;
}
inline int64_t floor_i64(double x) {
  auto v = static_cast<int64_t>(x);
  if (static_cast<double>(v) > x) --v;
  return v;
}

inline int64_t gcd_chain(std::span<const int64_t> p, int64_t q) {
  int64_t g = q < 0 ? -q : q;
  for (int64_t v : p) g = std::gcd(g, v);
  return g;
}

}  // namespace

bool is_primitive(std::span<const int64_t> p, int64_t q) {
  return gcd_chain(p, q) == 1;
}

bool on_cone(const RationalApproximate& v) {
  if (v.q < 0) return false;
  __int128 s = 0;
  for (int64_t c : v.p) s += static_cast<__int128>(c) * c;
  return s == static_cast<__int128>(v.q) * v.q;
}

std::vector<double> RationalTarget::as_doubles() const {
  std::vector<double> a(num.size());
  for (size_t i = 0; i < num.size(); ++i)
    a[i] = static_cast<double>(num[i]) / static_cast<double>(den);
  return a;
}

RationalTarget make_rational_target(std::vector<int64_t> num, int64_t den) {
  int n = static_cast<int>(num.size()) - 1;
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("rational target: dimension out of range");
  if (den <= 0 || den > 1'000'000)
    throw std::invalid_argument("rational target: denominator out of range");
  __int128 s = 0;
  for (int64_t v : num) {
    if (std::llabs(v) > den) throw std::invalid_argument("rational target: |num_i| > den");
    s += static_cast<__int128>(v) * v;
  }
  if (s != static_cast<__int128>(den) * den)
    throw std::invalid_argument("rational target: not a unit vector");
  RationalTarget t;
  t.num = std::move(num);
  t.den = den;
  return t;
}

uint64_t isqrt_u64(uint64_t v) {
  if (v == 0) return 0;
  auto r = static_cast<uint64_t>(std::sqrt(static_cast<double>(v)));
  while (r > 0 && r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

bool maybe_square(uint64_t v) {
  if (!((kSquareMask64 >> (v & 63)) & 1)) return false;
  if (!kSquareMod63[v % 63]) return false;
  return kSquareMod65[v % 65];
}

int64_t height_limit(double T) {
  long double ct = coshl(static_cast<long double>(T));
  if (ct >= 9.0e18L) return INT64_MAX;
  auto qh = static_cast<int64_t>(floorl(ct));
  while (static_cast<long double>(qh) >= ct) --qh;
  return qh;
}

namespace {

// The scan core is written once per free-coordinate count via if constexpr.
// FREE = n (free coordinates), the last coordinate is solved exactly.
template <int FREE>
ScanStats scan_core(const double* alpha, double c, int64_t q_lo, int64_t q_hi,
                    bool visit_box, const RationalTarget* exact,
                    const NearVisitor& visit) {
  ScanStats stats;
  stats.wide_window = c >= static_cast<double>(q_lo);
  const DD c2 = two_prod(c, c);
  const double band = kBoundaryBand * c * c;

  // Exact-mode threshold: X = sum (q num_i - p_i den)^2 < c^2 den^2.
  DD c2den2{};
  double band_exact = 0.0;
  if (exact != nullptr) {
    double den2 = static_cast<double>(exact->den) * static_cast<double>(exact->den);
    c2den2 = dd_mul(c2, DD{den2, 0.0});
    band_exact = band * den2;
  }

  auto emit = [&](const int64_t* p, int64_t q, double qd) {
    NearHit hit;
    bool accepted;
    if (exact == nullptr) {
      DD d2{};
      for (int i = 0; i <= FREE; ++i) {
        DD prod = two_prod(qd, alpha[i]);
        DD diff = dd_add(prod, DD{-static_cast<double>(p[i]), 0.0});
        d2 = dd_add(d2, dd_mul(diff, diff));
      }
      OpenCompare cmp = open_less(d2, c2, band);
      double polar_tol = 1e-12 * std::max(1.0, qd) * (FREE + 1);
      hit.dist2 = d2;
      hit.boundary = cmp.boundary;
      hit.polar = dd_value(d2) <= polar_tol * polar_tol;
      accepted = cmp.accepted;
    } else {
      __int128 x = 0;
      for (int i = 0; i <= FREE; ++i) {
        int64_t diff = q * exact->num[i] - p[i] * exact->den;
        x += static_cast<__int128>(diff) * diff;
      }
      // X exact; as double-double for the threshold comparison.
      auto xhi = static_cast<double>(x);
      auto xlo = static_cast<double>(x - static_cast<__int128>(xhi));
      DD xdd = two_sum(xhi, xlo);
      OpenCompare cmp = open_less(xdd, c2den2, band_exact);
      double den2 = static_cast<double>(exact->den) * static_cast<double>(exact->den);
      hit.dist2 = dd_mul(xdd, DD{1.0 / den2, 0.0});
      hit.boundary = cmp.boundary;
      hit.polar = (x == 0);
      accepted = cmp.accepted;
    }
    if (hit.boundary) ++stats.boundary_hits;
    if (!visit_box && !accepted) return;
    hit.pt.p.assign(p, p + FREE + 1);
    hit.pt.q = q;
    hit.pt.primitive = gcd_chain(hit.pt.p, q) == 1;
    ++stats.hits;
    visit(hit);
  };

  for (int64_t q = q_lo; q <= q_hi; ++q) {
    const auto qd = static_cast<double>(q);
    const double w = c + 1e-9 + 1e-15 * qd;
    const int64_t qq = q * q;
    double a[FREE + 1];
    for (int i = 0; i <= FREE; ++i) a[i] = alpha[i] * qd;

    // Solve the last coordinate from the free ones: p_last^2 = q^2 - |p'|^2.
    auto solve_last = [&](const int64_t* pfree, int64_t rem) {
      auto urem = static_cast<uint64_t>(rem);
      if (!maybe_square(urem)) return;
      uint64_t s = isqrt_u64(urem);
      if (s * s != urem) return;
      auto sd = static_cast<double>(s);
      int64_t p[FREE + 1];
      for (int i = 0; i < FREE; ++i) p[i] = pfree[i];
      if (std::fabs(a[FREE] + sd) <= w) {
        p[FREE] = -static_cast<int64_t>(s);
        emit(p, q, qd);
      }
      if (s != 0 && std::fabs(a[FREE] - sd) <= w) {
        p[FREE] = static_cast<int64_t>(s);
        emit(p, q, qd);
      }
    };

    int64_t pfree[FREE];
    const int64_t lo0 = ceil_i64(a[0] - w), hi0 = floor_i64(a[0] + w);
    for (int64_t p0 = lo0; p0 <= hi0; ++p0) {
      int64_t rem0 = qq - p0 * p0;
      if (rem0 < 0) continue;
      pfree[0] = p0;
      if constexpr (FREE == 1) {
        solve_last(pfree, rem0);
      } else {
        const int64_t lo1 = ceil_i64(a[1] - w), hi1 = floor_i64(a[1] + w);
        for (int64_t p1 = lo1; p1 <= hi1; ++p1) {
          int64_t rem1 = rem0 - p1 * p1;
          if (rem1 < 0) continue;
          pfree[1] = p1;
          if constexpr (FREE == 2) {
            solve_last(pfree, rem1);
          } else {
            const int64_t lo2 = ceil_i64(a[2] - w), hi2 = floor_i64(a[2] + w);
            for (int64_t p2 = lo2; p2 <= hi2; ++p2) {
              int64_t rem2 = rem1 - p2 * p2;
              if (rem2 < 0) continue;
              pfree[2] = p2;
              solve_last(pfree, rem2);
            }
          }
        }
      }
    }
  }
  return stats;
}

ScanStats scan_dispatch(std::span<const double> alpha, double c, int64_t q_lo,
                        int64_t q_hi, bool visit_box, const RationalTarget* exact,
                        const NearVisitor& visit) {
  int n = static_cast<int>(alpha.size()) - 1;
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("enumerate_near: dimension out of range");
  if (!(c > 0.0)) throw std::invalid_argument("enumerate_near: c must be positive");
  double nrm2 = 0.0;
  for (double v : alpha) nrm2 += v * v;
  if (std::fabs(std::sqrt(nrm2) - 1.0) > 1e-12)
    throw std::invalid_argument("enumerate_near: target is not a unit vector");
  if (q_lo < 1 || q_lo > q_hi)
    throw std::invalid_argument("enumerate_near: bad denominator range");
  if (q_hi > kMaxDenominator)
    throw std::range_error("enumerate_near: q_hi exceeds the exact-width cap");
  switch (n) {
    case 1: return scan_core<1>(alpha.data(), c, q_lo, q_hi, visit_box, exact, visit);
    case 2: return scan_core<2>(alpha.data(), c, q_lo, q_hi, visit_box, exact, visit);
    default: return scan_core<3>(alpha.data(), c, q_lo, q_hi, visit_box, exact, visit);
  }
}

}  // namespace

ScanStats enumerate_near(std::span<const double> alpha, double c, int64_t q_lo,
                         int64_t q_hi, const NearVisitor& visit) {
  return scan_dispatch(alpha, c, q_lo, q_hi, /*visit_box=*/false, nullptr, visit);
}

ScanStats enumerate_near(const RationalTarget& alpha, double c, int64_t q_lo,
                         int64_t q_hi, const NearVisitor& visit) {
  std::vector<double> ad = alpha.as_doubles();
  return scan_dispatch(ad, c, q_lo, q_hi, /*visit_box=*/false, &alpha, visit);
}

ScanStats enumerate_near_multi(std::span<const double> alpha, double c_max,
                               int64_t q_lo, int64_t q_hi, const NearVisitor& visit) {
  return scan_dispatch(alpha, c_max, q_lo, q_hi, /*visit_box=*/true, nullptr, visit);
}

void enumerate_all(int n, int64_t q_max, const PointVisitor& visit) {
  if (n < kMinSphereDim || n > kMaxSphereDim)
    throw std::invalid_argument("enumerate_all: dimension out of range");
  if (q_max > kMaxDenominator)
    throw std::range_error("enumerate_all: q_max exceeds the exact-width cap");
  RationalApproximate v;
  v.p.resize(n + 1);

  // Recurse over coordinates; the last one is solved as an exact square root.
  auto descend = [&](auto&& self, int level, int64_t rem) -> void {
    if (level == n) {
      auto s = static_cast<int64_t>(isqrt_u64(static_cast<uint64_t>(rem)));
      if (s * s != rem) return;
      v.p[level] = -s;
      v.primitive = gcd_chain(v.p, v.q) == 1;
      visit(v);
      if (s != 0) {
        v.p[level] = s;
        v.primitive = gcd_chain(v.p, v.q) == 1;
        visit(v);
      }
      return;
    }
    auto s = static_cast<int64_t>(isqrt_u64(static_cast<uint64_t>(rem)));
    for (int64_t pi = -s; pi <= s; ++pi) {
      v.p[level] = pi;
      self(self, level + 1, rem - pi * pi);
    }
  };

  for (int64_t q = 1; q <= q_max; ++q) {
    v.q = q;
    descend(descend, 0, q * q);
  }
}

std::vector<RationalApproximate> collect_all(int n, int64_t q_max) {
  std::vector<RationalApproximate> out;
  enumerate_all(n, q_max, [&](const RationalApproximate& v) { out.push_back(v); });
  return out;
}

void dump_points(std::ostream& out, std::span<const RationalApproximate> pts) {
  for (const RationalApproximate& v : pts) {
    out << v.q;
    for (int64_t pi : v.p) out << ',' << pi;
    out << ',' << (v.primitive ? 1 : 0) << '\n';
  }
}

std::vector<TransformedPoint> enumerate_transformed(const GroupElement& g,
                                                    double height_bound) {
  if (!(height_bound >= 1.0))
    throw std::invalid_argument("enumerate_transformed: height bound below 1");
  const GroupElement ginv = g.inverse();
  double frob = 0.0;
  for (double e : ginv.matrix().a) frob += e * e;
  // On the cone |x|^2 = 2 height^2, and |g^{-1}x| bounds every integer
  // coordinate, so q <= |g^{-1}|_F * sqrt(2) * height_bound.
  double support = std::sqrt(frob) * std::sqrt(2.0) * height_bound;
  if (support > static_cast<double>(kMaxDenominator))
    throw std::range_error("enumerate_transformed: support bound exceeds the exact-width cap");
  auto q_max = static_cast<int64_t>(std::ceil(support));
  int n = g.n();

  std::vector<TransformedPoint> out;
  double cutoff = height_bound * (1.0 + 1e-12) + 1e-9;
  enumerate_all(n, q_max, [&](const RationalApproximate& v) {
    std::vector<double> xin(n + 2);
    for (int i = 0; i <= n; ++i) xin[i] = static_cast<double>(v.p[i]);
    xin[n + 1] = static_cast<double>(v.q);
    Vec x = g.apply(xin);
    if (x[n + 1] <= cutoff) out.push_back(TransformedPoint{std::move(x), v});
  });
  return out;
}

}  // namespace conecount
