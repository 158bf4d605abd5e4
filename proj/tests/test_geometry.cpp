#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "sccv/errors.hpp"
#include "sccv/geometry.hpp"

using namespace sccv;

namespace {

Point pt(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

// Distance from y to the ellipse (a cos s, b sin s): dense angular scan followed
// by golden-section refinement of the best bracket.
double ellipse_distance_by_sampling(double a, double b, const Point& y, Point* foot) {
  const int n = 200000;
  auto dist2 = [&](double s) {
    const double dx = a * std::cos(s) - y[0], dy = b * std::sin(s) - y[1];
    return dx * dx + dy * dy;
  };
  int best = 0;
  double best_d = dist2(0.0);
  const double h = 2.0 * M_PI / n;
  for (int i = 1; i < n; ++i) {
    const double d = dist2(i * h);
    if (d < best_d) { best_d = d; best = i; }
  }
  double lo = (best - 1) * h, hi = (best + 1) * h;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    if (dist2(m1) < dist2(m2)) hi = m2; else lo = m1;
  }
  const double s = 0.5 * (lo + hi);
  if (foot) *foot = pt(a * std::cos(s), b * std::sin(s));
  return std::sqrt(dist2(s));
}

std::vector<Domain> sample_domains() {
  std::vector<Domain> out;
  out.push_back(Domain::ball(pt(0, 0), 1.0));
  out.push_back(Domain::ball(pt(0.3, -0.2), 0.7));
  out.push_back(Domain::ellipse(pt(0, 0), pt(2, 1)));
  out.push_back(Domain::ellipse(pt(0.5, 0.1), pt(1, 1.5)));
  Point c3 = Point::Zero(3);
  Vec ax3(3);
  ax3 << 1.5, 1.0, 0.8;
  out.push_back(Domain::ellipse(c3, ax3));
  out.push_back(Domain::smoothed_box(pt(0, 0), pt(1.0, 0.6), 0.25));
  Vec hw3(3);
  hw3 << 1.0, 0.8, 0.6;
  out.push_back(Domain::smoothed_box(c3, hw3, 0.3));
  Point c1(1);
  c1 << 0.2;
  Vec a1(1);
  a1 << 0.9;
  out.push_back(Domain::ball(c1, 0.9));
  return out;
}

// Uniform sample from the tube |b| < fraction * rho0, by rejection from an enlarged
// bounding box.
std::vector<Point> tube_points(const Domain& dom, int count, std::mt19937_64& rng,
                               double fraction = 0.95) {
  std::vector<Point> pts;
  Point lo = dom.lower().array() - dom.rho0();
  Point hi = dom.upper().array() + dom.rho0();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (static_cast<int>(pts.size()) < count) {
    Point x(dom.dim());
    for (int i = 0; i < dom.dim(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
    if (std::abs(dom.b(x)) < fraction * dom.rho0()) pts.push_back(x);
  }
  return pts;
}

// Points where the smoothed box switches between its flat and rounded pieces;
// b is only C^{1,1} across those surfaces.
bool near_box_seam(const Domain& dom, const Point& x, double margin) {
  const auto* box = std::get_if<SmoothedBox>(&dom.shape());
  if (!box) return false;
  for (int i = 0; i < dom.dim(); ++i) {
    const double q = std::abs(x[i] - box->center[i]) - (box->half_widths[i] - box->corner_radius);
    if (std::abs(q) < margin) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("signed distance examples") {
  auto ball = Domain::ball(pt(0, 0), 1.0);
  CHECK(signed_distance(ball, pt(2, 0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(signed_distance(ball, pt(0, 0)) == doctest::Approx(-1.0).epsilon(1e-15));

  auto ell = Domain::ellipse(pt(0, 0), pt(2, 1));
  CHECK(signed_distance(ell, pt(3, 0)) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("ellipse signed distance matches dense boundary sampling") {
  auto ell = Domain::ellipse(pt(0, 0), pt(2, 1));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 40; ++k) {
    Point y = pt(u(rng), 0.6 * u(rng));
    Point foot;
    const double d = ellipse_distance_by_sampling(2.0, 1.0, y, &foot);
    const double inside = (y[0] / 2) * (y[0] / 2) + y[1] * y[1] <= 1.0;
    const double b = signed_distance(ell, y);
    if (std::abs(b) < ell.rho0()) {
      CHECK(std::abs(b) == doctest::Approx(d).epsilon(1e-9));
      CHECK((project(ell, y) - foot).norm() < 1e-6);
    }
    CHECK((b <= 0) == static_cast<bool>(inside));
  }
}

TEST_CASE("distance examples") {
  auto ball = Domain::ball(pt(0, 0), 1.0);
  CHECK(distance(ball, pt(2, 0)) == doctest::Approx(1.0));
  CHECK(distance(ball, pt(0.5, 0)) == 0.0);
  CHECK(distance(ball, pt(1, 0)) == 0.0);
}

TEST_CASE("gradient and hessian examples") {
  auto ball = Domain::ball(pt(0, 0), 1.0);
  Vec g = grad_b(ball, pt(2, 0));
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.0));
  Mat H = hess_b(ball, pt(1, 0));
  CHECK(H(0, 0) == doctest::Approx(0.0));
  CHECK(H(0, 1) == doctest::Approx(0.0));
  CHECK(H(1, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(grad_b(ball, pt(0, 0)), Error);
  try {
    hess_b(ball, pt(0.0, 0.0));
    FAIL("expected OutsideTube");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutsideTube);
  }

  auto ell = Domain::ellipse(pt(0, 0), pt(2, 1));
  CHECK(ell.rho0() == doctest::Approx(0.5));
  Mat He = hess_b(ell, pt(2, 0));
  CHECK(He(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(He(0, 0)) < 1e-12);

  // Independent check: central differences of the projected signed distance.
  const double h = 1e-5;
  auto b = [&](double x, double y) { return signed_distance(ell, pt(x, y)); };
  const double fd_yy = (b(2, h) - 2 * b(2, 0) + b(2, -h)) / (h * h);
  CHECK(fd_yy == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("projection examples") {
  auto ball = Domain::ball(pt(0, 0), 1.0);
  CHECK((project(ball, pt(2, 0)) - pt(1, 0)).norm() < 1e-15);
  CHECK((project(ball, pt(0.5, 0)) - pt(1, 0)).norm() < 1e-15);
  auto ell = Domain::ellipse(pt(0, 0), pt(2, 1));
  CHECK((project(ell, pt(0, 3)) - pt(0, 1)).norm() < 1e-12);
  CHECK_THROWS_AS(project(ell, pt(0, 0.2)), Error);
  Point foot;
  ellipse_distance_by_sampling(2, 1, pt(0, 3), &foot);
  CHECK((foot - pt(0, 1)).norm() < 1e-6);
  // Inside on the minor axis, still in the tube.
  CHECK((project(ell, pt(0, 0.7)) - pt(0, 1)).norm() < 1e-12);
}

TEST_CASE("subdifferential case table") {
  auto ball = Domain::ball(pt(0, 0), 1.0);
  auto z = subdiff_distance(ball, pt(0, 0));
  CHECK(z.kind == SubdiffDescription::Kind::Zero);
  CHECK(z.direction.norm() == 0.0);
  auto g = subdiff_distance(ball, pt(1.5, 0));
  CHECK(g.kind == SubdiffDescription::Kind::Gradient);
  CHECK((g.direction - pt(1, 0)).norm() < 1e-15);
  auto s = subdiff_distance(ball, pt(1, 0));
  CHECK(s.kind == SubdiffDescription::Kind::Segment);
  CHECK((s.direction - pt(1, 0)).norm() < 1e-15);
  CHECK(s.lo == 0.0);
  CHECK(s.hi == 1.0);
  // Deep interior points are classified without touching derivatives.
  CHECK(subdiff_distance(ball, pt(0.0, 1e-3)).kind == SubdiffDescription::Kind::Zero);
}

TEST_CASE("tube invariants on random points") {
  std::mt19937_64 rng(42);
  for (const auto& dom : sample_domains()) {
    CAPTURE(dom.dim());
    CAPTURE(dom.rho0());
    auto pts = tube_points(dom, 10000, rng);
    double worst_unit = 0, worst_null = 0, worst_sym = 0, worst_proj = 0;
    for (const auto& x : pts) {
      Vec g = grad_b(dom, x);
      Mat H = hess_b(dom, x);
      worst_unit = std::max(worst_unit, std::abs(g.norm() - 1.0));
      worst_null = std::max(worst_null, (H * g).norm());
      worst_sym = std::max(worst_sym, (H - H.transpose()).norm());
      worst_proj = std::max(worst_proj, (x - project(dom, x) - signed_distance(dom, x) * g).norm());
    }
    CHECK(worst_unit < 1e-9);
    CHECK(worst_null < 1e-7);
    CHECK(worst_sym < 1e-12);
    CHECK(worst_proj < 1e-8);
  }
}

TEST_CASE("derivatives agree with central differences") {
  std::mt19937_64 rng(3);
  const double h = 1e-5;
  for (const auto& dom : sample_domains()) {
    // Third derivatives grow like 1/(rho0 + b)^2 near the inner tube edge, so
    // the O(h^2) comparison stays away from it.
    auto pts = tube_points(dom, 300, rng, 0.7);
    const int n = dom.dim();
    double worst_g = 0, worst_h = 0;
    int used = 0;
    for (const auto& x : pts) {
      if (near_box_seam(dom, x, 1e-3)) continue;
      ++used;
      Vec g = dom.grad(x);
      Mat H = dom.hess(x);
      for (int i = 0; i < n; ++i) {
        Point xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (dom.b(xp) - dom.b(xm)) / (2 * h);
        worst_g = std::max(worst_g, std::abs(fd - g[i]));
        Vec fdH = (dom.grad(xp) - dom.grad(xm)) / (2 * h);
        worst_h = std::max(worst_h, (fdH - H.col(i)).norm());
      }
    }
    CHECK(used > 100);
    CHECK(worst_g < 1e-8);
    CHECK(worst_h < 1e-5);
  }
}

TEST_CASE("boundary classification uses the relative tolerance") {
  auto ell = Domain::ellipse(pt(0, 0), pt(2, 1));
  CHECK(ell.tau_bdry() == doctest::Approx(4e-9));
  Point on = pt(0, 1 + 1e-9);
  CHECK(subdiff_distance(ell, on).kind == SubdiffDescription::Kind::Segment);
  Point off = pt(0, 1 + 1e-7);
  CHECK(subdiff_distance(ell, off).kind == SubdiffDescription::Kind::Gradient);
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS_AS(Domain::ball(pt(0, 0), -1.0), Error);
  CHECK_THROWS_AS(Domain::ellipse(pt(0, 0), pt(1, 0)), Error);
  CHECK_THROWS_AS(Domain::smoothed_box(pt(0, 0), pt(1, 0.1), 0.2), Error);
}

TEST_CASE("invariant report on every sample shape") {
  for (const auto& dom : sample_domains()) {
    const auto rep = geometry_invariants(dom, 2000, 9);
    CAPTURE(dom.dim());
    CHECK(rep.samples == 2000);
    CHECK(rep.fd_points > 500);
    CHECK(rep.subdiff_checked == 4000);
    CHECK(rep.passed());
  }
}
