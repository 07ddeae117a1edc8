#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "conecount/counting.hpp"
#include "conecount/dynamics.hpp"
#include "conecount/sampling.hpp"
#include "oracles.hpp"

using namespace conecount;

namespace {

// Brute-force count of |q alpha - p| < c, 1 <= q < cosh T on the integer
// cone, in long double.
int64_t oracle_count(int n, std::span<const double> alpha, double c, double T) {
  long double chT = std::cosh(static_cast<long double>(T));
  auto q_max = static_cast<int64_t>(chT);  // q < chT, q integer
  if (static_cast<long double>(q_max) >= chT) --q_max;
  if (q_max < 1) return 0;
  return static_cast<int64_t>(oracle::near_points(n, alpha, c, q_max).size());
}

Mat plane_rotation(int dim, int i, int j, double theta) {
  Mat r = Mat::identity(dim);
  r(i, i) = std::cos(theta);
  r(j, j) = std::cos(theta);
  r(i, j) = -std::sin(theta);
  r(j, i) = std::sin(theta);
  return r;
}

}  // namespace

TEST_CASE("window validation") {
  CHECK_THROWS_AS(make_window(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_window(-1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_window(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_window(800.0, 1.0), std::invalid_argument);
  Window w = make_window(2.0, 0.5);
  CHECK(w.T == 2.0);
  CHECK(w.c == 0.5);
}

TEST_CASE("rotation to the pole") {
  Vec a{1.0, 0.0};
  GroupElement k = rotation_to_pole(a);
  Vec img = k.apply(Vec{1.0, 0.0, 1.0});
  CHECK(img[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(img[1] == doctest::Approx(1.0));
  CHECK(img[2] == doctest::Approx(1.0));
  CHECK(k.fixes_height());

  std::mt19937_64 rng = substream(3, "pole");
  for (int i = 0; i < 30; ++i) {
    int n = 1 + static_cast<int>(rng() % 3);
    Vec alpha = random_unit_vector(n + 1, rng);
    Mat blk = rotation_block_to_pole(alpha);
    Vec img2 = blk.apply(alpha);
    for (int j = 0; j < n; ++j) CHECK(std::fabs(img2[j]) <= 1e-12);
    CHECK(img2[n] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(blk.det() == doctest::Approx(1.0).epsilon(1e-9));
  }
  // The pole itself needs no rotation.
  CHECK(rotation_to_pole(Vec{0.0, 0.0, 1.0}).is_identity(1e-12));
}

TEST_CASE("solution- and flow-region membership on 3-4-5") {
  RationalApproximate v;
  v.p = {3, 4};
  v.q = 5;
  CHECK(in_E(v, Window{std::acosh(6.0), 4.0}));         // 10 < 16, 5 < 6
  CHECK_FALSE(in_E(v, Window{std::acosh(6.0), 3.0}));   // 10 >= 9
  CHECK_FALSE(in_E(v, Window{std::acosh(4.5), 4.0}));   // 5 >= 4.5
  CHECK(in_F(v, Window{std::log(10.0), 4.0}));          // 9 < 16, u = 9 < 10
  bool boundary = false;
  CHECK_FALSE(in_F(v, Window{std::log(10.0), 3.0}, &boundary));  // 9 < 9 fails
  CHECK(boundary);  // ... and the tie is flagged
  CHECK_FALSE(in_F(v, Window{std::log(8.9), 4.0}));     // u = 9 not < 8.9
  // Real-vector overloads agree with the integer ones.
  Vec x{3, 4, 5};
  CHECK(in_E(x, Window{std::acosh(6.0), 4.0}));
  CHECK(in_F(x, Window{std::log(10.0), 4.0}));
}

TEST_CASE("direction of displacement") {
  Vec d = direction(Vec{-3, 4, 5});
  REQUIRE(d.size() == 1);
  CHECK(d[0] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(direction(Vec{0, 1, 1}), std::domain_error);

  RationalApproximate pole;
  pole.p = {0, 7};
  pole.q = 7;
  CHECK_FALSE(direction(pole).has_value());
  RationalApproximate v;
  v.p = {-3, 4};
  v.q = 5;
  auto dv = direction(v);
  REQUIRE(dv.has_value());
  CHECK((*dv)[0] == doctest::Approx(-1.0));
}

TEST_CASE("direction sets: closed-form measures and membership") {
  DirectionSet full1 = DirectionSet::full(1);
  CHECK(full1.measure() == 1.0);
  CHECK(full1.contains(Vec{1.0}));
  CHECK(full1.contains(Vec{-1.0}));

  DirectionSet plus = DirectionSet::hemisphere(Vec{1.0});
  CHECK(plus.measure() == doctest::Approx(0.5));
  CHECK(plus.contains(Vec{1.0}));
  CHECK_FALSE(plus.contains(Vec{-1.0}));

  DirectionSet quad = DirectionSet::orthant({1, 1});
  CHECK(quad.measure() == doctest::Approx(0.25));
  CHECK(quad.contains(Vec{0.6, 0.8}));
  CHECK_FALSE(quad.contains(Vec{-0.6, 0.8}));
  CHECK(DirectionSet::orthant({1, 0}).measure() == doctest::Approx(0.5));

  DirectionSet cap2 = DirectionSet::cap(Vec{1.0, 0.0}, 0.5);
  CHECK(cap2.measure() == doctest::Approx(0.5 / std::numbers::pi));
  DirectionSet cap3 = DirectionSet::cap(Vec{0.0, 0.0, 1.0}, 1.0);
  CHECK(cap3.measure() == doctest::Approx(0.5 * (1.0 - std::cos(1.0))));

  DirectionSet comp = DirectionSet::complement(DirectionSet::cap(Vec{1.0, 0.0}, 0.5));
  CHECK(comp.measure() == doctest::Approx(1.0 - 0.5 / std::numbers::pi));
  CHECK(comp.contains(Vec{-1.0, 0.0}));
  CHECK_FALSE(comp.contains(Vec{1.0, 0.0}));

  DirectionSet both = DirectionSet::disjoint_union(
      {DirectionSet::orthant({1, 1}), DirectionSet::orthant({-1, 1})});
  CHECK(both.measure() == doctest::Approx(0.5));
  CHECK(both.label().size() > 0);
  CHECK(both.describe().size() > both.label().size());

  // Monte Carlo cross-check of the closed-form measures.
  std::mt19937_64 rng(909);
  for (const DirectionSet* A : {&quad, &cap2, &comp}) {
    int64_t in = 0;
    const int64_t trials = 200000;
    for (int64_t i = 0; i < trials; ++i)
      in += A->contains(oracle::unit_vector(2, rng)) ? 1 : 0;
    double frac = static_cast<double>(in) / static_cast<double>(trials);
    double se = std::sqrt(A->measure() * (1 - A->measure()) / static_cast<double>(trials));
    CHECK(std::fabs(frac - A->measure()) <= 5.0 * se + 1e-6);
  }
  CHECK_THROWS_AS(DirectionSet::cap(Vec{1.0, 0.0}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(DirectionSet::orthant({2, 0}), std::invalid_argument);
}

TEST_CASE("counts at the pole target") {
  Vec alpha{0.0, 1.0};
  Window w{std::acosh(10.5), 0.5};
  LatticeDescriptor lat = LatticeDescriptor::integer_lattice(1);

  CountReport rep = count_N(alpha, w, lat);
  CHECK(rep.total == 10);
  CHECK(rep.polar == 10);
  CHECK(rep.primitive_total == 1);
  CHECK(rep.boundary_hits == 0);

  // With a direction condition every solution is polar, hence excluded.
  DirectionSet plus = DirectionSet::hemisphere(Vec{1.0});
  CountReport drep = count_N(alpha, w, lat, &plus);
  CHECK(drep.total == 0);
  CHECK(drep.polar == 10);

  // Empty height range.
  CountOptions opt;
  opt.q_lo = 2;
  CountReport erep = count_N(alpha, Window{0.5, 0.5}, lat, nullptr, opt);
  CHECK(erep.total == 0);
}

TEST_CASE("counts around an exact rational target") {
  RationalTarget t = make_rational_target({3, 4}, 5);
  CountReport rep = count_N(t, Window{std::acosh(10.5), 0.1});
  CHECK(rep.total == 2);  // (3,4;5) and (6,8;10)
  CHECK(rep.primitive_total == 1);
  CHECK(rep.polar == 2);
}

TEST_CASE("counts match brute force on seeded targets") {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> cdist(0.2, 1.5), Tdist(2.0, 5.0);
  LatticeDescriptor l1 = LatticeDescriptor::integer_lattice(1);
  LatticeDescriptor l2 = LatticeDescriptor::integer_lattice(2);
  for (int i = 0; i < 10; ++i) {
    int n = i % 2 == 0 ? 1 : 2;
    Vec alpha = oracle::unit_vector(n + 1, rng);
    double c = cdist(rng), T = Tdist(rng);
    CountReport rep = count_N(alpha, Window{T, c}, n == 1 ? l1 : l2);
    CHECK(rep.total == oracle_count(n, alpha, c, T));
  }
}

TEST_CASE("counts grow with the window") {
  std::mt19937_64 rng(77);
  Vec alpha = random_unit_vector(2, rng);
  LatticeDescriptor lat = LatticeDescriptor::integer_lattice(1);
  int64_t prev = -1;
  for (double T : {3.0, 4.0, 5.0, 6.0}) {
    int64_t tot = count_N(alpha, Window{T, 0.9}, lat).total;
    CHECK(tot >= prev);
    prev = tot;
  }
  prev = -1;
  for (double c : {0.3, 0.6, 1.0, 1.4}) {
    int64_t tot = count_N(alpha, Window{5.0, c}, lat).total;
    CHECK(tot >= prev);
    prev = tot;
  }
}

TEST_CASE("direct and rotated-region routes agree") {
  std::mt19937_64 rng = substream(5, "routes");
  std::uniform_real_distribution<double> cdist(0.3, 1.4), Tdist(3.0, 7.0);
  CountOptions opt;
  opt.cross_check = true;
  for (int i = 0; i < 10; ++i) {
    int n = i % 2 == 0 ? 1 : 2;
    Vec alpha = random_unit_vector(n + 1, rng);
    Window w{Tdist(rng), cdist(rng)};
    CountReport rep = count_N(alpha, w, LatticeDescriptor::integer_lattice(n), nullptr, opt);
    REQUIRE(rep.cross_check_total.has_value());
    CHECK(*rep.cross_check_total == rep.total);
  }
}

TEST_CASE("direction partition: set plus complement plus polar is everything") {
  std::mt19937_64 rng = substream(8, "partition");
  for (int i = 0; i < 6; ++i) {
    int n = i % 2 == 0 ? 1 : 2;
    Vec alpha = random_unit_vector(n + 1, rng);
    Window w{5.5, 1.2};
    LatticeDescriptor lat = LatticeDescriptor::integer_lattice(n);
    DirectionSet A = n == 1 ? DirectionSet::hemisphere(Vec{1.0})
                            : DirectionSet::cap(Vec{0.0, 1.0}, 0.9);
    DirectionSet Ac = DirectionSet::complement(A);
    CountReport all = count_N(alpha, w, lat);
    CountReport ra = count_N(alpha, w, lat, &A);
    CountReport rc = count_N(alpha, w, lat, &Ac);
    CHECK(ra.total + rc.total + ra.polar == all.total);
    CHECK(ra.polar == rc.polar);
  }
}

TEST_CASE("direction frame can be supplied explicitly") {
  std::mt19937_64 rng = substream(21, "frame");
  Vec alpha = random_unit_vector(3, rng);
  Window w{5.0, 1.3};
  LatticeDescriptor lat = LatticeDescriptor::integer_lattice(2);
  DirectionSet A = DirectionSet::hemisphere(Vec{1.0, 0.0});

  // The canonical frame, passed explicitly, changes nothing.
  CountOptions with_k;
  with_k.frame_k = rotation_to_pole(alpha);
  CountReport canon = count_N(alpha, w, lat, &A);
  CountReport same = count_N(alpha, w, lat, &A, with_k);
  CHECK(same.total == canon.total);
  CHECK(same.polar == canon.polar);

  // A different admissible frame rho k (rho fixes the pole) counts set A
  // exactly as the canonical frame counts the back-rotated set.
  double theta = 0.83;
  CountOptions with_rk;
  with_rk.frame_k = embed_K(plane_rotation(3, 0, 1, theta)) * rotation_to_pole(alpha);
  DirectionSet back = DirectionSet::hemisphere(
      Vec{std::cos(-theta) * 1.0 - std::sin(-theta) * 0.0,
          std::sin(-theta) * 1.0 + std::cos(-theta) * 0.0});
  CountReport rotated = count_N(alpha, w, lat, &A, with_rk);
  CountReport pulled = count_N(alpha, w, lat, &back);
  CHECK(rotated.total == pulled.total);

  // Invalid frames are rejected.
  CountOptions bad1;
  bad1.frame_k = make_g_t(2, 0.3);  // not height-fixing
  CHECK_THROWS_AS(count_N(alpha, w, lat, &A, bad1), std::invalid_argument);
  CountOptions bad2;
  bad2.frame_k = GroupElement::identity(2);  // does not send alpha to the pole
  CHECK_THROWS_AS(count_N(alpha, w, lat, &A, bad2), std::invalid_argument);
}

TEST_CASE("grid counting equals cell-by-cell counting") {
  std::mt19937_64 rng = substream(31, "grid");
  Vec alpha = random_unit_vector(2, rng);
  std::vector<double> cs{0.7, 1.3};
  std::vector<double> Ts{3.0, 5.0, 7.0};
  DirectionSet A = DirectionSet::hemisphere(Vec{-1.0});
  GridResult grid = count_grid(alpha, cs, Ts, &A);
  LatticeDescriptor lat = LatticeDescriptor::integer_lattice(1);
  for (size_t ci = 0; ci < cs.size(); ++ci)
    for (size_t ti = 0; ti < Ts.size(); ++ti) {
      CountReport one = count_N(alpha, Window{Ts[ti], cs[ci]}, lat, &A);
      const GridCell& cell = grid.cell(ci, ti);
      CHECK(cell.total == one.total);
      CHECK(cell.primitive_total == one.primitive_total);
      CHECK(cell.polar == one.polar);
    }
}

TEST_CASE("rotated and general lattices count like the brute force") {
  std::mt19937_64 rng = substream(37, "lattices");
  for (int i = 0; i < 4; ++i) {
    int n = i % 2 == 0 ? 1 : 2;
    Vec alpha = random_unit_vector(n + 1, rng);
    double c = 0.9, T = 3.5;
    GroupElement k = embed_K(random_rotation(n + 1, rng));
    LatticeDescriptor rot = LatticeDescriptor::transformed(k, "seeded-rotation");
    CHECK(rot.kind == LatticeDescriptor::Kind::rotated);

    int64_t direct = 0;
    long double chT = std::cosh(static_cast<long double>(T));
    long double c2 = static_cast<long double>(c) * c;
    for (const auto& v : oracle::cone_points(n, static_cast<int64_t>(chT))) {
      Vec x(v.size());
      for (size_t j = 0; j < v.size(); ++j) x[j] = static_cast<double>(v[j]);
      Vec kx = k.apply(x);
      long double h = kx[n + 1];
      if (!(h >= 1.0L && h < chT)) continue;
      long double d2 = 0.0L;
      for (int j = 0; j <= n; ++j) {
        long double d = h * static_cast<long double>(alpha[j]) - static_cast<long double>(kx[j]);
        d2 += d * d;
      }
      if (d2 < c2) ++direct;
    }
    CHECK(count_N(alpha, Window{T, c}, rot).total == direct);
  }

  // A sheared (non-height-fixing) lattice through the same brute force.
  Vec y{0.35};
  GroupElement g = make_u_y(y) * make_g_t(1, 0.25);
  LatticeDescriptor gen = LatticeDescriptor::transformed(g);
  CHECK(gen.kind == LatticeDescriptor::Kind::general);
  Vec alpha = random_unit_vector(2, rng);
  double c = 1.1, T = 3.0;
  long double chT = std::cosh(static_cast<long double>(T));
  long double c2 = static_cast<long double>(c) * c;
  int64_t direct = 0;
  for (const auto& v : oracle::cone_points(1, 260)) {
    Vec x(v.size());
    for (size_t j = 0; j < v.size(); ++j) x[j] = static_cast<double>(v[j]);
    Vec gx = g.apply(x);
    long double h = gx[2];
    if (!(h >= 1.0L && h < chT)) continue;
    long double d2 = 0.0L;
    for (int j = 0; j <= 1; ++j) {
      long double d = h * static_cast<long double>(alpha[j]) - static_cast<long double>(gx[j]);
      d2 += d * d;
    }
    if (d2 < c2) ++direct;
  }
  CHECK(count_N(alpha, Window{T, c}, gen).total == direct);
}

TEST_CASE("sandwich constants") {
  SandwichConstants sc = SandwichConstants::make(1.0, 2);
  CHECK(sc.c_ell == doctest::Approx(0.8660254037844386).epsilon(1e-12));
  CHECK(sc.r0 == doctest::Approx(std::log(2.0) + 1.0));
  CHECK(sc.T_min >= sc.r0);
  CHECK_THROWS_AS(SandwichConstants::make(1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(SandwichConstants::make(3.0, 4), std::invalid_argument);  // 2*4 <= 9
}

TEST_CASE("bracket sandwich holds pointwise on enumerated points") {
  auto pts = collect_all(1, 500);
  SandwichConstants sc = SandwichConstants::make(1.0, 10);
  SandwichOutcome out = sandwich_check(pts, 6.0, sc);
  // Every point is either judged or set aside as a guard-band tie; ties are
  // rare (cusp height exactly at the cutoff and the like).
  CHECK(out.checked + out.skipped_boundary == static_cast<int64_t>(pts.size()));
  CHECK(out.skipped_boundary <= 10);
  CHECK(out.violations.empty());

  // Directional variant on a coarser set.
  auto pts2 = collect_all(2, 120);
  SandwichConstants sc2 = SandwichConstants::make(0.8, 4);
  DirectionSet A = DirectionSet::hemisphere(Vec{0.3, -0.95393920141694566});
  SandwichOutcome out2 = sandwich_check(pts2, 5.0, sc2, &A);
  CHECK(out2.violations.empty());
}

TEST_CASE("solution and flow windows agree up to a bounded exceptional set") {
  std::mt19937_64 rng = substream(41, "efgap");
  Vec alpha = random_unit_vector(2, rng);
  LatticeDescriptor frame =
      LatticeDescriptor::transformed(rotation_to_pole(alpha), "pole-frame");
  int64_t worst = 0;
  for (double T : {4.0, 5.0, 6.0, 7.0, 8.0}) {
    int64_t ecount = count_N(alpha, Window{T, 1.0}, LatticeDescriptor::integer_lattice(1)).total;
    BandCount f = count_F_band(frame, 1.0, 1.0, std::exp(T));
    worst = std::max<int64_t>(worst, std::llabs(ecount - f.total));
  }
  CHECK(worst <= 25);
}

TEST_CASE("region-restricted enumeration") {
  LatticeDescriptor ident = LatticeDescriptor::integer_lattice(1);
  auto in_ball = [](std::span<const double> x) { return x.back() <= 5.0; };
  auto got = enumerate_in_region(ident, in_ball, 5.0);
  std::set<oracle::IPoint> got_set;
  for (const auto& tp : got) {
    oracle::IPoint f(tp.base.p.begin(), tp.base.p.end());
    f.push_back(tp.base.q);
    got_set.insert(f);
  }
  auto all = oracle::cone_points(1, 5);
  CHECK(got_set == std::set<oracle::IPoint>(all.begin(), all.end()));

  // Transformed lattice: membership x in R equals base in g^{-1} R.
  GroupElement g = make_g_t(1, 0.3);
  auto region = [](std::span<const double> x) {
    return x.back() <= 8.0 && bracket(x) < 9.0;
  };
  auto via_lib = enumerate_in_region(LatticeDescriptor::transformed(g), region, 8.0);
  int64_t direct = 0;
  for (const auto& v : oracle::cone_points(1, 25)) {
    Vec x(v.size());
    for (size_t j = 0; j < v.size(); ++j) x[j] = static_cast<double>(v[j]);
    if (region(g.apply(x))) ++direct;
  }
  CHECK(static_cast<int64_t>(via_lib.size()) == direct);

  auto nothing = [](std::span<const double>) { return false; };
  CHECK(enumerate_in_region(ident, nothing, 50.0).empty());
  CHECK_THROWS_AS(enumerate_in_region(ident, in_ball, 0.5), std::invalid_argument);
}

TEST_CASE("lattice descriptor classification") {
  CHECK(LatticeDescriptor::transformed(GroupElement::identity(2)).kind ==
        LatticeDescriptor::Kind::integer);
  std::mt19937_64 rng = substream(43, "classify");
  CHECK(LatticeDescriptor::transformed(embed_K(random_rotation(3, rng))).kind ==
        LatticeDescriptor::Kind::rotated);
  CHECK(LatticeDescriptor::transformed(make_u_y(Vec{0.2, 0.1})).kind ==
        LatticeDescriptor::Kind::general);
}
