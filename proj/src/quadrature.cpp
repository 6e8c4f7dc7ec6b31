#include "seqmon/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace seqmon {

GaussHermiteRule gauss_hermite_normal(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("quadrature needs at least one node");
  // Physicists' Hermite recurrence: zero diagonal, off-diagonal sqrt(k/2).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n > 1 ? n - 1 : 0);
  for (Eigen::Index k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * static_cast<double>(k));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Gauss-Hermite eigen-solve failed");

  GaussHermiteRule rule;
  rule.nodes = std::sqrt(2.0) * solver.eigenvalues();
  // w_i / sqrt(pi) is the squared first eigenvector component.
  rule.weights = solver.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

const GaussHermiteRule& default_quadrature() {
  static const GaussHermiteRule rule = gauss_hermite_normal(kDefaultQuadratureNodes);
  return rule;
}

}  // namespace seqmon
