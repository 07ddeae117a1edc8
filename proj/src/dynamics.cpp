#include "conecount/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "conecount/dd.hpp"
#include "conecount/detail/chunked.hpp"

namespace conecount {

namespace {

// One lattice point seen by a shell scan, reduced to what the flow needs.
struct ShellPoint {
  double u = 0.0;        // bracket (exact integer value for integer lattices)
  bool radial_ok = false;  // radial < c^2
  bool banded = false;     // radial decision within the guard band
  bool dir_ok = true;      // direction lies in A (polar points fail when A given)
};

// Scan every lattice point that can meet {radial < c^2, u >= 1, u < u_hi}.
// Two branches: points on the negative-axis side with bracket >= 1 force
// q < c^2 (exhaustive), the rest cluster within sqrt(2) c of the positive
// pole ray (localized box scan).  Completeness holds for u >= 1, which is
// all the flow windows use.
template <typename Fn>
void scan_shell(const LatticeDescriptor& lat, double c, double u_hi, const DirectionSet* A,
                int threads, Fn&& fn) {
  if (!(c > 0.0) || !(u_hi > 1.0)) throw std::invalid_argument("shell scan: bad parameters");
  int n = lat.n;
  const DD c2 = two_prod(c, c);
  const double band = kBoundaryBand * c * c;

  if (lat.kind == LatticeDescriptor::Kind::general) {
    const GroupElement& g = *lat.g;
    double h_max = 0.5 * (u_hi + c * c) + 1.0;
    for (const TransformedPoint& tp : enumerate_transformed(g, h_max)) {
      double h = tp.x[n + 1], axis = tp.x[n];
      DD u = two_sum(h, axis);
      DD radial = dd_mul(two_sum(h, -axis), u);
      OpenCompare cmp = open_less(radial, c2, band);
      ShellPoint sp;
      sp.u = dd_value(u);
      sp.radial_ok = cmp.accepted;
      sp.banded = cmp.boundary;
      if (A != nullptr) {
        double off2 = 0.0;
        for (int i = 0; i < n; ++i) off2 += tp.x[i] * tp.x[i];
        double ptol = 1e-12 * std::max(1.0, h) * (n + 1);
        if (off2 <= ptol * ptol) {
          sp.dir_ok = false;  // polar
        } else {
          Vec sigma(tp.x.begin(), tp.x.begin() + n);
          double nn = std::sqrt(off2);
          for (double& e : sigma) e /= nn;
          sp.dir_ok = A->contains(sigma);
        }
      }
      fn(sp);
    }
    return;
  }

  // Pole target in lattice coordinates: e_{n+1} for the integer lattice,
  // the last row of the rotation block for a rotated one.
  Vec beta(n + 1, 0.0);
  beta[n] = 1.0;
  const Mat* block = nullptr;
  Mat rot;
  if (lat.kind == LatticeDescriptor::Kind::rotated) {
    const Mat& m = lat.g->matrix();
    rot = Mat(n + 1);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) rot(i, j) = m(i, j);
    block = &rot;
    for (int j = 0; j <= n; ++j) beta[j] = rot(n, j);
    double nn = norm(beta);
    for (double& e : beta) e /= nn;
  }

  auto eval = [&](const RationalApproximate& pt) {
    auto qd = static_cast<double>(pt.q);
    ShellPoint sp;
    if (block == nullptr) {
      int64_t axis = pt.p.back();
      int64_t u = pt.q + axis;
      __int128 radial = static_cast<__int128>(pt.q - axis) * (pt.q + axis);
      auto rl = static_cast<long double>(radial);
      auto cl = static_cast<long double>(c) * c;
      sp.u = static_cast<double>(u);
      sp.radial_ok = rl < cl;
      sp.banded = std::fabs(rl - cl) <= 1e-9L * cl;
      if (A != nullptr) {
        bool zero = true;
        for (int i = 0; i < n; ++i) zero = zero && pt.p[i] == 0;
        if (zero) {
          sp.dir_ok = false;
        } else {
          Vec sigma(n);
          for (int i = 0; i < n; ++i) sigma[i] = static_cast<double>(pt.p[i]);
          double nn = norm(sigma);
          for (double& e : sigma) e /= nn;
          sp.dir_ok = A->contains(sigma);
        }
      }
    } else {
      DD s{};
      for (int j = 0; j <= n; ++j)
        s = dd_add(s, two_prod(beta[j], static_cast<double>(pt.p[j])));
      DD radial = dd_sub(two_prod(qd, qd), dd_mul(s, s));
      OpenCompare cmp = open_less(radial, c2, band);
      sp.u = qd + dd_value(s);
      sp.radial_ok = cmp.accepted;
      sp.banded = cmp.boundary;
      if (A != nullptr) {
        double ptol = 1e-12 * qd * (n + 1);
        if (dd_value(radial) <= ptol * ptol) {  // |offset|^2 == radial on the cone
          sp.dir_ok = false;
        } else {
          Vec x(n + 1, 0.0);
          for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) x[i] += (*block)(i, j) * static_cast<double>(pt.p[j]);
          Vec sigma(x.begin(), x.begin() + n);
          double nn = norm(sigma);
          for (double& e : sigma) e /= nn;
          sp.dir_ok = A->contains(sigma);
        }
      }
    }
    fn(sp);
  };

  // Negative-side branch: u >= 1 and axis <= 0 force radial >= q.
  auto q_ex = static_cast<int64_t>(std::ceil(c * c)) + 1;
  auto q_max = static_cast<int64_t>(0.5 * (u_hi + c * c)) + 2;
  if (q_max > kMaxDenominator)
    throw std::range_error("shell scan: bracket window exceeds the exact-width cap");
  enumerate_all(n, std::min(q_ex, q_max), eval);

  if (q_max > q_ex) {
    // Positive pole cluster: every remaining point with u >= 1 lies within
    // sqrt(2) c of q beta (radial < c^2 and u > 2q - c^2 bound the distance).
    double c_box = std::sqrt(2.0) * c + 1e-6;
    (void)threads;
    enumerate_near_multi(beta, c_box, q_ex + 1, q_max,
                         [&](const NearHit& hit) { eval(hit.pt); });
  }
}

bool near_rel(double v, double t, double rel = 1e-9) {
  return std::fabs(v - t) <= rel * std::max(1.0, std::fabs(t));
}

}  // namespace

BandCount count_F_band(const LatticeDescriptor& lat, double c, double u_lo, double u_hi,
                       const DirectionSet* A, int threads) {
  if (!(u_lo >= 1.0 - 1e-12) || !(u_hi > u_lo))
    throw std::invalid_argument("count_F_band: bracket window must sit in [1, inf)");
  BandCount out;
  scan_shell(lat, c, u_hi, A, threads, [&](const ShellPoint& sp) {
    if (sp.banded || near_rel(sp.u, u_lo) || near_rel(sp.u, u_hi)) ++out.boundary_hits;
    if (sp.radial_ok && sp.dir_ok && sp.u >= u_lo && sp.u < u_hi) ++out.total;
  });
  return out;
}

BandCount siegel_count(const LatticeDescriptor& lat, double r, double c,
                       const DirectionSet* A, int threads) {
  if (!(r > 0.0)) throw std::invalid_argument("siegel_count: r must be positive");
  return count_F_band(lat, c, 1.0, std::exp(r), A, threads);
}

double exact_orbit_integral(const OrbitConfig& cfg) {
  if (!(cfg.r > 0.0) || !(cfg.w.T > cfg.r))
    throw std::invalid_argument("orbit: need 0 < r < T");
  make_window(cfg.w.T, cfg.w.c);
  double T = cfg.w.T, r = cfg.r;
  double u_hi = std::exp(T + r) * (1.0 + 1e-12) + 1.0;
  const DirectionSet* A = cfg.A ? &*cfg.A : nullptr;
  double sum = 0.0;
  scan_shell(cfg.lattice, cfg.w.c, u_hi, A, cfg.threads, [&](const ShellPoint& sp) {
    if (!sp.radial_ok || !sp.dir_ok || sp.u < 1.0) return;
    double lu = std::log(sp.u);
    double contrib = std::min(T, lu) - std::max(0.0, lu - r);
    if (contrib > 0.0) sum += contrib;
  });
  return sum;
}

OrbitChainReport orbit_chain_check(const OrbitConfig& cfg) {
  if (!(cfg.r > 0.0) || !(cfg.w.T > cfg.r))
    throw std::invalid_argument("orbit: need 0 < r < T");
  make_window(cfg.w.T, cfg.w.c);
  const double T = cfg.w.T, r = cfg.r;
  const double e_r = std::exp(r), e_T = std::exp(T), e_Tr = std::exp(T + r);
  const DirectionSet* A = cfg.A ? &*cfg.A : nullptr;

  OrbitChainReport rep;
  scan_shell(cfg.lattice, cfg.w.c, e_Tr * (1.0 + 1e-12) + 1.0, A, cfg.threads,
             [&](const ShellPoint& sp) {
               if (sp.banded || near_rel(sp.u, 1.0) || near_rel(sp.u, e_r) ||
                   near_rel(sp.u, e_T) || near_rel(sp.u, e_Tr))
                 ++rep.boundary_hits;
               if (!sp.radial_ok || !sp.dir_ok || sp.u < 1.0) return;
               if (sp.u < e_r) ++rep.count_F_r;
               if (sp.u < e_T) ++rep.count_F_T;
               if (sp.u >= e_r && sp.u < e_T) ++rep.count_shell_diff;
               if (sp.u < e_Tr) ++rep.count_F_T_plus_r;
               double lu = std::log(sp.u);
               double base = std::max(0.0, lu - r);
               rep.integral_T += std::max(0.0, std::min(T, lu) - base);
               rep.integral_T_minus_r += std::max(0.0, std::min(T - r, lu) - base);
             });

  double mid = rep.integral_T / r;
  double mid_lo = rep.integral_T_minus_r / r;
  double slack = 1e-7 * (1.0 + std::fabs(mid));
  rep.chain_flow_ok = static_cast<double>(rep.count_shell_diff) <= mid + slack &&
                      mid <= static_cast<double>(rep.count_F_T_plus_r) + slack;
  rep.chain_count_ok =
      mid_lo <= static_cast<double>(rep.count_F_T) + slack &&
      static_cast<double>(rep.count_F_T) <= mid + static_cast<double>(rep.count_F_r) + slack;
  return rep;
}

double birkhoff_slope(const OrbitConfig& cfg) {
  return exact_orbit_integral(cfg) / (cfg.r * cfg.w.T);
}

double quadrature_orbit_integral(const OrbitConfig& cfg, int64_t steps) {
  if (steps < 1) throw std::invalid_argument("orbit quadrature: need steps >= 1");
  if (!(cfg.r > 0.0) || !(cfg.w.T > cfg.r))
    throw std::invalid_argument("orbit: need 0 < r < T");
  const double T = cfg.w.T, r = cfg.r;
  double u_hi = std::exp(T + r) * (1.0 + 1e-12) + 1.0;
  const DirectionSet* A = cfg.A ? &*cfg.A : nullptr;
  // Collect log-brackets of qualifying points once; the shell count at flow
  // time t is #{ lu : t <= lu < t + r }, evaluated by binary search.
  std::vector<double> lus;
  scan_shell(cfg.lattice, cfg.w.c, u_hi, A, cfg.threads, [&](const ShellPoint& sp) {
    if (sp.radial_ok && sp.dir_ok && sp.u >= 1.0) lus.push_back(std::log(sp.u));
  });
  std::sort(lus.begin(), lus.end());
  double dt = T / static_cast<double>(steps);
  double sum = 0.0;
  for (int64_t k = 0; k < steps; ++k) {
    double t = (static_cast<double>(k) + 0.5) * dt;
    auto lo = std::lower_bound(lus.begin(), lus.end(), t);
    auto hi = std::lower_bound(lus.begin(), lus.end(), t + r);
    sum += static_cast<double>(hi - lo);
  }
  return sum * dt;
}

}  // namespace conecount
