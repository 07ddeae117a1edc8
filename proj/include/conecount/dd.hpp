#pragma once
// Minimal double-double arithmetic (error-free transformations via fma).
// Used to settle membership decisions near thresholds: a plain double
// distance-squared is accurate to ~1e-16 relative, which is not enough to
// make the two counting routes (direct inequality vs rotated-region test)
// agree on points within ~1e-9 of the boundary.  ~1e-30 relative is.

#include <cmath>

namespace conecount {

struct DD {
  double hi = 0.0;
  double lo = 0.0;
};

inline DD two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  double err = (a - (s - bb)) + (b - bb);
  return {s, err};
}

inline DD two_prod(double a, double b) {
  double p = a * b;
  double err = std::fma(a, b, -p);
  return {p, err};
}

inline DD dd_add(DD a, DD b) {
  DD s = two_sum(a.hi, b.hi);
  double lo = s.lo + a.lo + b.lo;
  DD r = two_sum(s.hi, lo);
  return r;
}

inline DD dd_sub(DD a, DD b) { return dd_add(a, {-b.hi, -b.lo}); }

inline DD dd_mul(DD a, DD b) {
  DD p = two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return two_sum(p.hi, p.lo);
}

inline double dd_value(DD a) { return a.hi + a.lo; }

inline bool dd_less(DD a, DD b) {
  if (a.hi != b.hi) return a.hi < b.hi;
  return a.lo < b.lo;
}

// Open comparison value < threshold with a reported boundary band:
// |value - threshold| <= band flags the decision as boundary-sensitive.
struct OpenCompare {
  bool accepted = false;
  bool boundary = false;
};

inline OpenCompare open_less(DD value, DD threshold, double band) {
  DD diff = dd_sub(value, threshold);
  OpenCompare r;
  r.accepted = diff.hi < 0.0 || (diff.hi == 0.0 && diff.lo < 0.0);
  r.boundary = std::fabs(dd_value(diff)) <= band;
  return r;
}

}  // namespace conecount
