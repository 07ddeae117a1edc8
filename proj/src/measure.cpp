#include "conecount/measure.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "conecount/sampling.hpp"

namespace conecount {

namespace {

// Mean and standard error of an accumulated weighted sample.
struct Accumulator {
  double sum = 0.0, sum2 = 0.0;
  int64_t count = 0;

  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++count;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  double se() const {
    if (count < 2) return 0.0;
    auto nd = static_cast<double>(count);
    double var = (sum2 - sum * sum / nd) / (nd - 1.0);
    return std::sqrt(std::max(0.0, var) / nd);
  }
};

// Build the ambient vector (offset, axis, height) from chart data.
Vec lift_from_u(const Vec& offset, double u) {
  double s2 = dot(offset, offset);
  Vec x(offset.size() + 2);
  std::copy(offset.begin(), offset.end(), x.begin());
  double over = s2 / u;
  x[offset.size()] = 0.5 * (u - over);      // axis
  x[offset.size() + 1] = 0.5 * (u + over);  // height
  return x;
}

}  // namespace

double unit_ball_volume(int n) {
  switch (n) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi / 3.0;
    default: throw std::invalid_argument("unit_ball_volume: dimension out of range");
  }
}

double eta(int n, double c, double kappa) {
  if (!(c > 0.0)) throw std::invalid_argument("eta: c must be positive");
  return kappa * unit_ball_volume(n) * std::pow(c, n);
}

VolumeResult volume_F(int n, const Window& w, const DirectionSet* A,
                      const MeasureConfig& cfg, bool monte_carlo) {
  make_window(w.T, w.c);
  if (A != nullptr && A->n() != n)
    throw std::invalid_argument("volume_F: direction set dimension mismatch");
  VolumeResult r;
  if (!monte_carlo) {
    double va = A != nullptr ? A->measure() : 1.0;
    r.value = cfg.kappa * unit_ball_volume(n) * std::pow(w.c, n) * w.T * va;
    r.method = "closed_form";
    return r;
  }

  // (offset, axis) chart with weight 1/height.  The axis coordinate is drawn
  // from a piecewise density (uniform below 1, ~1/axis above) so that the
  // 1/height weight stays O(1) over the whole window; plain uniform sampling
  // would put nearly all its mass where the integrand is negligible.
  std::mt19937_64 rng = substream(cfg.seed, "volume_F");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double a_lo = 0.5 * (1.0 - w.c * w.c) - 1.0;  // below any admissible axis value
  double a_hi = 0.5 * std::exp(w.T);            // above: u < e^T and axis < u/2
  if (a_hi <= 1.0) a_hi = 1.5;
  double z_flat = 1.0 - a_lo;
  double z_log = std::log(a_hi);
  double z = z_flat + z_log;
  double ball = unit_ball_volume(n) * std::pow(w.c, n);
  long double eT = expl(static_cast<long double>(w.T));

  Accumulator acc;
  for (int64_t i = 0; i < cfg.samples; ++i) {
    Vec off = random_in_ball(n, w.c, rng);
    double pick = uni(rng) * z;
    double axis, dens;  // sampling density of `axis`
    if (pick < z_flat) {
      axis = a_lo + pick;
      dens = 1.0 / z;
    } else {
      axis = std::exp(pick - z_flat);
      dens = 1.0 / (z * axis);
    }
    double h = std::sqrt(dot(off, off) + axis * axis);
    double u = h + axis;
    bool ok = u >= 1.0 && static_cast<long double>(u) < eT;
    if (ok && A != nullptr) {
      Vec sigma = off;
      double nn = norm(sigma);
      if (nn <= 1e-300) {
        ok = false;
      } else {
        for (double& e : sigma) e /= nn;
        ok = A->contains(sigma);
      }
    }
    acc.add(ok ? 1.0 / (h * dens) : 0.0);
  }
  r.value = cfg.kappa * ball * acc.mean();
  r.se = cfg.kappa * ball * acc.se();
  r.method = "axis_chart_mc";
  r.samples = cfg.samples;
  return r;
}

VolumeResult volume_E(int n, const Window& w, const DirectionSet* A,
                      const MeasureConfig& cfg) {
  make_window(w.T, w.c);
  if (A != nullptr && A->n() != n)
    throw std::invalid_argument("volume_E: direction set dimension mismatch");
  // The radial condition 2 height (height - axis) < c^2 becomes, in the
  // (offset, u) chart with s = |offset|,
  //     s^2 (s^2 + u^2) < c^2 u^2,
  // so offsets stay inside the c-ball and, per offset, the bracket ranges
  // over (s^2 / sqrt(c^2 - s^2), ~2 cosh T).  Sample the offset uniformly in
  // the ball and u log-uniform on that conditional interval, weighting each
  // sample by its log-length.
  std::mt19937_64 rng = substream(cfg.seed, "volume_E");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double ball = unit_ball_volume(n) * std::pow(w.c, n);
  double u_max = 2.0 * std::cosh(w.T);
  long double chT = coshl(static_cast<long double>(w.T));

  Accumulator acc;
  for (int64_t i = 0; i < cfg.samples; ++i) {
    Vec off = random_in_ball(n, w.c, rng);
    double s2 = dot(off, off);
    double u_min = s2 / std::sqrt(std::max(w.c * w.c - s2, 1e-300));
    if (!(u_min < u_max)) {
      acc.add(0.0);
      continue;
    }
    double span = std::log(u_max / u_min);
    double u = u_min * std::exp(uni(rng) * span);
    double h = 0.5 * (u + s2 / u);
    bool ok = h >= 1.0 && static_cast<long double>(h) < chT &&
              s2 * (s2 + u * u) < w.c * w.c * u * u;
    if (ok && A != nullptr) {
      Vec sigma = off;
      double nn = norm(sigma);
      if (nn <= 1e-300) {
        ok = false;
      } else {
        for (double& e : sigma) e /= nn;
        ok = A->contains(sigma);
      }
    }
    acc.add(ok ? span : 0.0);
  }
  VolumeResult r;
  r.value = cfg.kappa * ball * acc.mean();
  r.se = cfg.kappa * ball * acc.se();
  r.method = "cone_chart_mc";
  r.samples = cfg.samples;
  return r;
}

VolumeResult region_mass(int n, const ChartBox& box, const RegionPredicate& pred,
                         int64_t samples, uint64_t seed) {
  if (!(box.radius > 0.0) || !(box.u_lo > 0.0) || !(box.u_hi > box.u_lo))
    throw std::invalid_argument("region_mass: bad chart box");
  std::mt19937_64 rng = substream(seed, "region_mass");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double span = std::log(box.u_hi / box.u_lo);
  double scale = unit_ball_volume(n) * std::pow(box.radius, n) * span;
  Accumulator acc;
  for (int64_t i = 0; i < samples; ++i) {
    Vec off = random_in_ball(n, box.radius, rng);
    double u = box.u_lo * std::exp(uni(rng) * span);
    Vec x = lift_from_u(off, u);
    acc.add(pred(x) ? 1.0 : 0.0);
  }
  VolumeResult r;
  r.value = scale * acc.mean();
  r.se = scale * acc.se();
  r.method = "chart_mc";
  r.samples = samples;
  return r;
}

InvarianceReport invariance_test(int n, const GroupElement& g, const ChartBox& box,
                                 const RegionPredicate& region, int64_t samples,
                                 uint64_t seed) {
  if (g.n() != n) throw std::invalid_argument("invariance_test: dimension mismatch");
  if (!(box.radius > 0.0) || !(box.u_lo > 0.0) || !(box.u_hi > box.u_lo))
    throw std::invalid_argument("invariance_test: bad chart box");
  const int d = n + 2;
  const Mat& m = g.matrix();
  ChartBox ib = box;
  if (m.max_abs_diff(Mat::identity(d)) != 0.0) {
    // Bound the image chart.  Box points have heights in [a/2, H] with
    // H = (b + rho^2/a)/2 and Euclidean norm <= sqrt(2) H, so image heights
    // stay below |g|_F sqrt(2) H =: M (offsets below M, brackets below 2M).
    // The image bracket <r, x> with r = sum of the last two rows of g is
    // linear, hence bounded below over the box by L; L <= 0 means the image
    // chart is unbounded below in log u and the test refuses.
    const double a = box.u_lo, b = box.u_hi, rho = box.radius;
    const double H = 0.5 * (b + rho * rho / a);
    double frob = 0.0;
    for (double e : m.a) frob += e * e;
    const double M = std::sqrt(2.0 * frob) * H;
    double rt2 = 0.0;
    for (int j = 0; j < n; ++j) {
      double rj = m(d - 2, j) + m(d - 1, j);
      rt2 += rj * rj;
    }
    const double r_ax = m(d - 2, n) + m(d - 1, n);
    const double r_h = m(d - 2, d - 1) + m(d - 1, d - 1);
    const double dh = r_h - r_ax;
    const double L = -std::sqrt(rt2) * rho + std::min(r_ax * a, r_ax * b) +
                     std::min(dh * 0.5 * a, dh * H);
    if (!(L > 0.0))
      throw std::invalid_argument(
          "invariance_test: image chart unbounded below (no positive bracket bound)");
    ib = ChartBox{M * (1.0 + 1e-12), L * (1.0 - 1e-12), 2.0 * M * (1.0 + 1e-12)};
  }
  InvarianceReport rep;
  rep.image_box = ib;
  rep.direct = region_mass(n, box, region, samples, seed);
  const GroupElement ginv = g.inverse();
  rep.transported = region_mass(
      n, ib, [&](std::span<const double> x) { return region(ginv.apply(x)); }, samples, seed);
  const double tol = 3.0 * std::hypot(rep.direct.se, rep.transported.se);
  rep.pass = std::fabs(rep.direct.value - rep.transported.value) <= tol + 1e-12;
  return rep;
}

CalibrationResult calibrate_kappa(int n, int targets, const Window& w,
                                  const MeasureConfig& cfg) {
  if (targets < 5) throw std::invalid_argument("calibrate: need at least five targets");
  make_window(w.T, w.c);
  std::mt19937_64 rng = substream(cfg.seed, "calibrate");
  CalibrationResult res;
  res.n = n;
  res.c = w.c;
  res.T = w.T;
  res.seed = cfg.seed;
  double denom = unit_ball_volume(n) * std::pow(w.c, n) * w.T;
  LatticeDescriptor lat = LatticeDescriptor::integer_lattice(n);
  CountOptions opt;
  opt.threads = cfg.threads;
  double sum = 0.0;
  int64_t hits = 0;
  for (int i = 0; i < targets; ++i) {
    Vec alpha = random_unit_vector(n + 1, rng);
    CountReport rep = count_N(alpha, w, lat, nullptr, opt);
    hits += rep.total;
    double k = static_cast<double>(rep.total) / denom;
    res.per_target.push_back(k);
    sum += k;
  }
  if (hits == 0)
    throw std::runtime_error("calibrate: degenerate window, every target count is zero");
  res.kappa_hat = sum / static_cast<double>(targets);
  return res;
}

}  // namespace conecount
