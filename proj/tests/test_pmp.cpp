#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "problems.hpp"
#include "sccv/errors.hpp"
#include "sccv/pmp.hpp"

using namespace sccv;
using namespace testing_problems;

namespace {

struct Certified {
  ScheduleResult sched;
  Extremal ex;
  PmpReport rep;
};

Certified certify(const Problem& prob, const Domain& dom, const Point& x0, int N) {
  Certified c;
  c.sched = epsilon_schedule(prob, dom, x0, delta_choice(prob, dom).delta, N);
  c.ex = build_extremal(prob, dom, c.sched.gamma, c.sched.params);
  c.rep = check_extremal(prob, dom, c.ex);
  return c;
}

// Unconstrained Hamiltonian flow by RK4 with small steps, used to measure
// d^2/dt^2 b(x(t)) by differences.
Point free_flow(const Hamiltonian& ham, double t, Point x, Vec p, double span, int steps) {
  const double h = span / steps;
  auto f = [&](double s, const Vec& xx, const Vec& pp, Vec& dx, Vec& dp) {
    const auto d = ham.derivs(s, xx, pp, false);
    dx = -d.DpH;
    dp = d.DxH;
  };
  Vec a1, b1, a2, b2, a3, b3, a4, b4;
  for (int i = 0; i < steps; ++i) {
    const double s = t + i * h;
    f(s, x, p, a1, b1);
    f(s + 0.5 * h, x + 0.5 * h * a1, p + 0.5 * h * b1, a2, b2);
    f(s + 0.5 * h, x + 0.5 * h * a2, p + 0.5 * h * b2, a3, b3);
    f(s + h, x + h * a3, p + h * b3, a4, b4);
    x += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
    p += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
  }
  return x;
}

}  // namespace

TEST_CASE("adjoint recovery examples") {
  Trajectory g = Trajectory::constant(0, 1, 16, v2(0, 0));
  for (int k = 0; k <= 16; ++k) g.knots[k] = v2(g.time(k), 0);
  const Problem kin = make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0);
  for (const auto& p : recover_adjoint(kin, g)) CHECK((p - v2(-1, 0)).norm() <= 1e-12);

  Mat A(2, 2);
  A << 2.0, 0.5, 0.5, 1.0;
  const Problem quad = make_problem(
      std::make_shared<QuadraticLagrangian>(A, 0.0, Vec::Zero(2), Vec::Zero(2), std::vector<Potential>{}),
      QuadraticTerminal::zero(2), 3.0, 0.0);
  for (int k = 0; k <= 16; ++k) g.knots[k] = v2(g.time(k), -0.5 * g.time(k) * g.time(k));
  const auto p = recover_adjoint(quad, g);
  for (int k = 0; k <= 16; ++k) CHECK((p[k] + A * g.knot_velocity(k)).norm() <= 1e-12);
  CHECK(duality_residual(quad, g, p) < 1e-10);
  // Quadratic arcs have exact centered and one-sided derivatives.
  for (int k = 0; k <= 16; ++k) CHECK((g.knot_velocity(k) - v2(1, -g.time(k))).norm() <= 1e-12);
}

TEST_CASE("feedback multiplier examples") {
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  const Hamiltonian ham(make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0));
  CHECK(feedback_lambda(ham, ball, 0.0, v2(1, 0), v2(0, -1)) == doctest::Approx(-1.0));
  CHECK(feedback_lambda(ham, ball, 0.0, v2(1, 0), v2(-1, 0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(feedback_lambda(ham, ball, 0.0, v2(1, 0), v2(2, 3)) == doctest::Approx(-9.0));
  CHECK_THROWS_AS(feedback_lambda(ham, ball, 0.0, v2(2.5, 0), v2(0, 1)), Error);
  CHECK_THROWS_AS(feedback_lambda(ham, ball, 0.0, v2(0, 0), v2(0, 1)), Error);
}

TEST_CASE("feedback multiplier cancels the second derivative of b along the free flow") {
  // Along the unconstrained flow b'' = -Lambda theta at a boundary point, for
  // time-dependent, non-separable data on a curved boundary.
  const Domain dom = Domain::ellipse(v2(0.1, 0), v2(1.6, 0.9));
  const Problem prob = rich_problem();
  const Hamiltonian ham(prob);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const double th = 3.0 * U(rng);
    const Point x = v2(0.1 + 1.6 * std::cos(th), 0.9 * std::sin(th));
    const Vec p = v2(1.5 * U(rng), 1.5 * U(rng));
    const double t = 0.5 + 0.3 * U(rng);
    const double tau = 1e-3;
    const Point xp = free_flow(ham, t, x, p, tau, 20);
    const Point xm = free_flow(ham, t, x, p, -tau, 20);
    const double b2 = (dom.b(xp) - 2.0 * dom.b(x) + dom.b(xm)) / (tau * tau);
    const auto d = ham.derivs(t, x, p);
    const Vec nb = dom.grad(x);
    const double theta = nb.dot(d.DppH * nb);
    CHECK(theta >= 1.0 / prob.mu - 1e-12);
    const double L = feedback_lambda(ham, dom, t, x, p);
    CHECK(L * theta == doctest::Approx(-b2).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("theta stays above 1/mu in the tube") {
  const Domain dom = ellipse_domain();
  Problem prob = rich_problem();
  // s(x) A0 reaches about 2.6 on this tube, so mu = 3 is the honest constant.
  prob.mu = 3.0;
  const auto arep = check_assumptions(prob, dom);
  REQUIRE(arep.find("f2_lower")->pass);
  REQUIRE(arep.find("f2_upper")->pass);
  const Hamiltonian ham(prob);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Point x = sample_region(dom, 0.9 * dom.rho0(), rng);
    if (std::abs(dom.b(x)) >= 0.9 * dom.rho0()) continue;
    const auto d = ham.derivs(0.3, x, v2(U(rng), U(rng)), false);
    const Vec nb = dom.grad(x);
    CHECK(nb.dot(d.DppH * nb) >= 1.0 / prob.mu - 1e-12);
  }
}

TEST_CASE("interior extremal has no multiplier and small residuals") {
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  const Problem prob = interior_problem();
  const auto c = certify(prob, ball, v2(0, 0), 256);
  for (double l : c.ex.lam) CHECK(l == 0.0);
  CHECK(c.ex.nu == 0.0);
  CHECK(c.rep.state_residual < 1e-6);
  CHECK(c.rep.adjoint_residual < 1e-6);
  CHECK(c.rep.transversality < 1e-6);
  CHECK(c.rep.contact_knots == 0);
  CHECK(c.rep.passed());
  const auto mr = multiplier_from_residual(prob, ball, c.sched.gamma, c.ex.p);
  CHECK(mr.max_lam == 0.0);
}

TEST_CASE("sliding freely along a circle is rejected") {
  // A straight chord beats the arc, so the multiplier needed to follow the
  // circle is negative.
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  const Problem prob = make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0);
  Trajectory g = Trajectory::constant(0, 1, 64, v2(1, 0));
  for (int k = 0; k <= 64; ++k) g.knots[k] = v2(std::cos(g.time(k)), std::sin(g.time(k)));
  const auto p = recover_adjoint(prob, g);
  try {
    multiplier_from_residual(prob, ball, g, p);
    FAIL("expected NegativeMultiplier");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeMultiplier);
  }
}

TEST_CASE("wall pull extremal satisfies the maximum principle") {
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  const Problem prob = wall_problem();
  const auto c = certify(prob, ball, v2(0, 0), 1024);
  for (const auto& ch : c.rep.checks) {
    INFO(ch.name << " value " << ch.value << " bound " << ch.bound);
    CHECK(ch.pass);
  }
  CHECK(c.rep.contact_knots > 100);
  // Resting at (1, 0) needs lam = 3 and the arc has p = 0 there.
  CHECK(c.rep.min_lam == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(c.rep.r_variation < 1e-6 * (1.0 + std::abs(c.ex.r.front())));
  CHECK(c.ex.r.front() == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(c.ex.nu >= 0.0);
  CHECK(c.ex.nu <= std::max(1.0, 2.0 * prob.mu * c.ex.N_sup));
  // Adjoint stays Lipschitz with the rest-point acceleration as constant.
  const auto pdot = adjoint_derivative(c.sched.gamma, c.ex.p);
  for (const auto& d : pdot) CHECK(d.norm() <= 3.0 + 1e-6);
}

TEST_CASE("terminal contact under an outward terminal pull") {
  // Optimal arc runs straight to (1, 0) with unit speed: p(T) = (-1, 0),
  // Dg = (-2, 0), so nu = 1.
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  const Problem prob =
      make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::linear(v2(-2, 0)), 1.0, 2.0);
  const auto c = certify(prob, ball, v2(0, 0), 256);
  CHECK(c.ex.nu == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(c.ex.nu <= std::max(1.0, 2.0 * prob.mu * c.ex.N_sup));
  CHECK(c.rep.transversality < 1e-6);
  CHECK(c.sched.report.cost == doctest::Approx(-1.5).epsilon(1e-6));
}

TEST_CASE("curved contact arc: residuals converge at second order") {
  const Domain dom = ellipse_domain();
  const Problem prob = ellipse_problem();
  std::vector<double> res, agree, d2;
  for (int N : {256, 512, 1024}) {
    const auto c = certify(prob, dom, v2(1.2, 0), N);
    CHECK(c.rep.contact_knots > N / 8);
    CHECK(c.rep.adjoint_residual < 1e-3);
    CHECK(c.rep.transversality < 1e-6);
    CHECK(c.rep.find("multiplier_sign")->pass);
    CHECK(c.rep.find("speed_bound")->pass);
    CHECK(c.rep.find("adjoint_bound")->pass);
    CHECK(c.rep.find("nu_bound")->pass);
    res.push_back(c.rep.adjoint_residual);
    agree.push_back(c.rep.lambda_agreement);
    d2.push_back(c.rep.max_second_difference);
  }
  for (int i = 1; i < 3; ++i) {
    CHECK(std::log2(res[i - 1] / res[i]) >= 1.8);
    CHECK(agree[i] <= agree[i - 1]);
    // Second differences stay bounded independently of the grid.
    CHECK(d2[i] <= 1.1 * d2[0]);
  }
  CHECK(agree.back() <= 1e-3);
}

TEST_CASE("shooting") {
  const Domain ball = Domain::ball(v2(0, 0), 1.0);
  SUBCASE("interior straight line") {
    const Hamiltonian ham(make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0));
    const auto s = shoot(ham, ball, v2(0, 0), v2(-0.5, 0), true, 50);
    for (int k = 0; k <= 50; ++k) CHECK((s.gamma.knots[k] - v2(0.5 * s.gamma.time(k), 0)).norm() <= 1e-12);
    CHECK(s.feedback_steps == 0);
  }
  SUBCASE("sliding along the unit circle for a quarter period") {
    const Hamiltonian ham(make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0,
                                       std::numbers::pi / 2));
    const auto s = shoot(ham, ball, v2(1, 0), v2(0, -1), true, 2000);
    double worst = 0.0;
    for (const auto& x : s.gamma.knots) worst = std::max(worst, std::abs(x.norm() - 1.0));
    CHECK(worst < 1e-5);
    CHECK((s.gamma.knots.back() - v2(0, 1)).norm() < 1e-3);
    // Without the feedback the arc leaves along the tangent.
    const auto free = shoot(ham, ball, v2(1, 0), v2(0, -1), false, 2000);
    CHECK(free.gamma.knots.back().norm() == doctest::Approx(std::hypot(1.0, std::numbers::pi / 2)));
  }
  SUBCASE("round trip from a certified wall-pull extremal") {
    const Problem prob = wall_problem();
    const auto c = certify(prob, ball, v2(0, 0), 1024);
    const double h = c.sched.gamma.dt();
    const auto s = shoot(Hamiltonian(prob), ball, v2(0, 0), c.ex.p[0], true, 1024, 0.0, h * h);
    double err = 0.0;
    for (int k = 0; k <= 1024; ++k) err = std::max(err, (s.gamma.knots[k] - c.sched.gamma.knots[k]).norm());
    CHECK(err <= 1e-3);
    CHECK(s.feedback_steps > 100);
  }
  SUBCASE("round trip on the ellipse") {
    const Domain dom = ellipse_domain();
    const Problem prob = ellipse_problem();
    const auto c = certify(prob, dom, v2(1.2, 0), 1024);
    const double h = c.sched.gamma.dt();
    const auto s = shoot(Hamiltonian(prob), dom, v2(1.2, 0), c.ex.p[0], true, 1024, 0.0, h * h);
    double err = 0.0;
    for (int k = 0; k <= 1024; ++k) err = std::max(err, (s.gamma.knots[k] - c.sched.gamma.knots[k]).norm());
    CHECK(err <= 1e-3);
  }
}
