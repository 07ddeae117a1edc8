#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "conecount/cone_core.hpp"
#include "conecount/sampling.hpp"

using namespace conecount;

namespace {

// A modest random element u_y g_t k with bounded factors.
GroupElement random_element(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  int n = 1 + static_cast<int>(rng() % 3);
  Vec y(n);
  for (double& v : y) v = uni(rng);
  double t = 1.5 * uni(rng);
  return make_u_y(y) * make_g_t(n, t) * embed_K(random_rotation(n + 1, rng));
}

Vec random_cone_point(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vec x(n + 2);
  double h2 = 0.0;
  for (int i = 0; i <= n; ++i) {
    x[i] = 2.0 * uni(rng);
    h2 += x[i] * x[i];
  }
  x[n + 1] = std::sqrt(h2);
  return x;
}

}  // namespace

TEST_CASE("quadratic form on basic vectors") {
  CHECK(eval_Q(Vec{3, 4, 5}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(eval_Q(Vec{1, 0, 0}) == doctest::Approx(1.0));
  CHECK(eval_Q(Vec{0, 0, 1}) == doctest::Approx(-1.0));
  Mat j = minkowski_gram(3);
  CHECK(j(0, 0) == 1.0);
  CHECK(j(2, 2) == -1.0);
  CHECK(j(0, 1) == 0.0);
}

TEST_CASE("bracket of real and integer vectors") {
  CHECK(bracket(Vec{3, 4, 5}) == doctest::Approx(9.0));
  std::vector<long long> v{3, 4, 5};
  CHECK(bracket(std::span<const long long>(v)) == 9);
  CHECK(on_cone_exact(std::span<const long long>(v)));
  std::vector<long long> w{3, 4, 6};
  CHECK_FALSE(on_cone_exact(std::span<const long long>(w)));
}

TEST_CASE("cone vector validation") {
  ConeVector v = make_cone_vector(Vec{3, 4, 5});
  CHECK(v.n() == 1);
  CHECK(v.height() == 5.0);
  CHECK_THROWS_AS(make_cone_vector(Vec{1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(make_cone_vector(Vec{0, 0, -1}), std::invalid_argument);
}

TEST_CASE("flow elements scale the bracket") {
  GroupElement g = make_g_t(1, std::log(2.0));
  Vec x{0, 1, 1};  // bracket 2
  CHECK(bracket(x) == doctest::Approx(2.0));
  CHECK(bracket(g.apply(x)) == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng = substream(7, "flow");
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  for (int i = 0; i < 25; ++i) {
    int n = 1 + static_cast<int>(rng() % 3);
    double t = uni(rng);
    Vec p = random_cone_point(n, rng);
    CHECK(bracket(make_g_t(n, t).apply(p)) ==
          doctest::Approx(std::exp(-t) * bracket(p)).epsilon(1e-12));
  }
}

TEST_CASE("one-parameter group laws") {
  for (int n : {1, 2, 3}) {
    GroupElement a = make_g_t(n, 0.7), b = make_g_t(n, -1.3);
    CHECK((a * b).matrix().max_abs_diff(make_g_t(n, -0.6).matrix()) <= 1e-12);
    CHECK(make_g_t(n, 0.0).is_identity(1e-15));

    Vec y(n, 0.25), z(n);
    for (int i = 0; i < n; ++i) z[i] = -0.5 + 0.3 * i;
    Vec yz(n);
    for (int i = 0; i < n; ++i) yz[i] = y[i] + z[i];
    CHECK((make_u_y(y) * make_u_y(z)).matrix().max_abs_diff(make_u_y(yz).matrix()) <= 1e-12);
    CHECK(make_u_y(Vec(n, 0.0)).is_identity(1e-15));
  }
}

TEST_CASE("group element validation and inverse") {
  Mat bad = Mat::identity(3);
  bad(0, 1) = 0.5;  // not Q-orthogonal
  CHECK_THROWS_AS(GroupElement{bad}, std::invalid_argument);

  Mat flip = Mat::identity(3);
  flip(0, 0) = -1.0;  // det -1
  CHECK_THROWS_AS(GroupElement{flip}, std::invalid_argument);

  std::mt19937_64 rng = substream(11, "inverse");
  for (int i = 0; i < 20; ++i) {
    GroupElement g = random_element(rng);
    CHECK((g * g.inverse()).is_identity(1e-9));
    CHECK((g.inverse() * g).is_identity(1e-9));
  }
}

TEST_CASE("block rotations fix the height coordinate") {
  std::mt19937_64 rng = substream(13, "embed");
  for (int n : {1, 2, 3}) {
    GroupElement k = embed_K(random_rotation(n + 1, rng));
    CHECK(k.fixes_height());
    Vec x = random_cone_point(n, rng);
    Vec kx = k.apply(x);
    CHECK(kx[n + 1] == doctest::Approx(x[n + 1]).epsilon(1e-12));
  }
  Mat notrot(2);
  notrot(0, 0) = 2.0;
  notrot(1, 1) = 0.5;
  CHECK_THROWS_AS(embed_K(notrot), std::invalid_argument);
}

TEST_CASE("the form is preserved by seeded group elements") {
  std::mt19937_64 rng = substream(17, "preserve");
  for (int i = 0; i < 100; ++i) {
    GroupElement g = random_element(rng);
    Vec x = random_cone_point(g.n(), rng);
    Vec gx = g.apply(x);
    double scale = 1.0 + gx[g.n() + 1] * gx[g.n() + 1];
    CHECK(std::fabs(eval_Q(gx)) <= 1e-9 * scale);
    CHECK(gx[g.n() + 1] > 0.0);
  }
}

TEST_CASE("horospherical shears translate offsets and keep the gap") {
  // For x on the cone write s(x) = height - axis (the anti-bracket, which
  // the squared approximation distance equals 2 height s).  A shear u_y
  // keeps s fixed and translates the offset block by y s.
  std::mt19937_64 rng = substream(19, "shear");
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  for (int i = 0; i < 50; ++i) {
    int n = 1 + static_cast<int>(rng() % 3);
    Vec y(n);
    for (double& v : y) v = uni(rng);
    Vec x = random_cone_point(n, rng);
    Vec ux = make_u_y(y).apply(x);
    double s = x[n + 1] - x[n];
    double su = ux[n + 1] - ux[n];
    CHECK(su == doctest::Approx(s).epsilon(1e-11));
    for (int j = 0; j < n; ++j)
      CHECK(ux[j] == doctest::Approx(x[j] + y[j] * s).epsilon(1e-11));
  }
}

TEST_CASE("iwasawa factors reassemble and recover constructed parts") {
  std::mt19937_64 rng = substream(23, "iwasawa");
  for (int i = 0; i < 100; ++i) {
    GroupElement g = random_element(rng);
    IwasawaFactors f = iwasawa_decompose(g);
    GroupElement re = make_u_y(f.y) * make_g_t(g.n(), f.t) * f.k;
    CHECK(re.matrix().max_abs_diff(g.matrix()) <= 1e-9 * (1.0 + g.matrix().max_abs()));
    CHECK(f.k.fixes_height());
  }
  // Known factors round-trip through the decomposition.
  Vec y{0.4, -0.2};
  double t = 0.55;
  GroupElement k = embed_K(random_rotation(3, rng));
  IwasawaFactors f = iwasawa_decompose(make_u_y(y) * make_g_t(2, t) * k);
  CHECK(f.t == doctest::Approx(t).epsilon(1e-12));
  CHECK(f.y[0] == doctest::Approx(y[0]).epsilon(1e-10));
  CHECK(f.y[1] == doctest::Approx(y[1]).epsilon(1e-10));
  CHECK(f.k.matrix().max_abs_diff(k.matrix()) <= 1e-9);
}

TEST_CASE("euclidean helpers") {
  Vec a{3, 4}, b{1, 2};
  CHECK(dot(a, b) == doctest::Approx(11.0));
  CHECK(norm(a) == doctest::Approx(5.0));
  CHECK(format_vec(Vec{1, 2}).size() > 0);
  CHECK(Mat::identity(4).det() == doctest::Approx(1.0));
}
