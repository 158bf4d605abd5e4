#pragma once

#include <memory>
#include <vector>

#include "sccv/geometry.hpp"
#include "sccv/mfg.hpp"
#include "sccv/model.hpp"

namespace testing_problems {

using namespace sccv;

inline Vec v2(double a, double b) {
  Vec p(2);
  p << a, b;
  return p;
}

inline Problem make_problem(std::shared_ptr<const Lagrangian> L, std::shared_ptr<const Terminal> g, double mu,
                            double M, double T = 1.0) {
  Problem p;
  p.lagrangian = std::move(L);
  p.terminal = std::move(g);
  p.horizon = T;
  p.mu = mu;
  p.M = M;
  return p;
}

inline std::shared_ptr<QuadraticLagrangian> kinetic_with_pull(Vec a) {
  return std::make_shared<QuadraticLagrangian>(Mat::Identity(2, 2), 0.0, Vec::Zero(2), Vec::Zero(2),
                                               std::vector<Potential>{LinearPotential{std::move(a)}});
}

// Running pull of strength 3 along e1 in the unit disk, from the origin.
inline Problem wall_problem() {
  return make_problem(kinetic_with_pull(v2(-3, 0)), QuadraticTerminal::zero(2), 1.0, 9.0);
}

// Terminal pull (0.5, 0), no running cost beyond kinetic energy.
inline Problem interior_problem() {
  return make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::linear(v2(-0.5, 0)), 1.0, 0.5);
}

// Ellipse with semi-axes (2, 1), pull of strength 3 along e2, start (1.2, 0):
// the arc slides along the curved boundary toward the top vertex.
inline Domain ellipse_domain() { return Domain::ellipse(v2(0, 0), v2(2, 1)); }
inline Problem ellipse_problem() {
  return make_problem(kinetic_with_pull(v2(0, -3)), QuadraticTerminal::zero(2), 1.0, 12.0);
}

// Non-separable, time-dependent data.
inline Problem rich_problem() {
  Mat A0(2, 2);
  A0 << 1.3, 0.2, 0.2, 0.9;
  auto L = std::make_shared<QuadraticLagrangian>(
      A0, 0.1, v2(0.3, -0.2), v2(-0.1, 0.4),
      std::vector<Potential>{GaussianPotential{v2(0.5, 0.2), 0.7, 0.6}, LinearPotential{v2(0.2, 0.1)}});
  Mat Q(2, 2);
  Q << 0.5, 0.1, 0.1, 0.3;
  Problem p = make_problem(L, std::make_shared<QuadraticTerminal>(Q, v2(-0.3, 0.2), 0.1), 2.0, 4.0);
  p.kappa = 1.0;
  return p;
}

// Crowd-aversion scenario: unit disk, kinetic running cost, Gaussian bump
// coupling of amplitude 1 and width 0.5, zero terminal cost, 8 atoms.
inline Problem crowd_problem() {
  return make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0);
}
inline DiscreteMeasure crowd_m0() {
  DiscreteMeasure m0;
  const double P[8][2] = {{0.54, 0.18}, {-0.36, 0.63}, {-0.72, -0.18}, {0.18, -0.72},
                          {0.09, 0.09}, {0.81, -0.45}, {-0.27, -0.54}, {0.45, 0.81}};
  const double W[8] = {0.2, 0.1, 0.15, 0.1, 0.15, 0.1, 0.1, 0.1};
  for (int i = 0; i < 8; ++i) {
    m0.points.push_back(v2(P[i][0], P[i][1]));
    m0.weights.push_back(W[i]);
  }
  return m0;
}

}  // namespace testing_problems
