#include "conecount/sampling.hpp"

#include <cmath>

namespace conecount {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 substream(uint64_t seed, std::string_view name) {
  uint64_t s = splitmix64(seed);
  for (unsigned char ch : name) s = splitmix64(s ^ ch);
  return std::mt19937_64(s);
}

Vec random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    Vec v(dim);
    double n2 = 0.0;
    for (double& e : v) {
      e = gauss(rng);
      n2 += e * e;
    }
    if (n2 < 1e-20) continue;
    double inv = 1.0 / std::sqrt(n2);
    for (double& e : v) e *= inv;
    // One more normalization pass keeps |v| = 1 to the last ulp.
    double m = norm(v);
    for (double& e : v) e /= m;
    return v;
  }
}

Vec random_in_ball(int dim, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (;;) {
    Vec v(dim);
    double n2 = 0.0;
    for (double& e : v) {
      e = uni(rng);
      n2 += e * e;
    }
    if (n2 >= 1.0) continue;
    for (double& e : v) e *= radius;
    return v;
  }
}

Mat random_rotation(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    Mat a(dim);
    for (double& e : a.a) e = gauss(rng);
    // Modified Gram-Schmidt on columns.
    bool degenerate = false;
    for (int j = 0; j < dim && !degenerate; ++j) {
      for (int k = 0; k < j; ++k) {
        double d = 0.0;
        for (int i = 0; i < dim; ++i) d += a(i, k) * a(i, j);
        for (int i = 0; i < dim; ++i) a(i, j) -= d * a(i, k);
      }
      double n2 = 0.0;
      for (int i = 0; i < dim; ++i) n2 += a(i, j) * a(i, j);
      if (n2 < 1e-12) {
        degenerate = true;
        break;
      }
      double inv = 1.0 / std::sqrt(n2);
      for (int i = 0; i < dim; ++i) a(i, j) *= inv;
    }
    if (degenerate) continue;
    if (a.det() < 0.0)
      for (int i = 0; i < dim; ++i) a(i, dim - 1) = -a(i, dim - 1);
    return a;
  }
}

}  // namespace conecount
