#pragma once

#include <Eigen/Core>

namespace seqmon {

/// Gauss-Hermite rule rescaled for expectations under N(0,1):
/// E[g(m + Z)] ~= sum_i weights[i] * g(m + nodes[i]). Weights sum to 1.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// Golub-Welsch construction from the Hermite Jacobi matrix.
GaussHermiteRule gauss_hermite_normal(Eigen::Index n);

inline constexpr Eigen::Index kDefaultQuadratureNodes = 41;
/// Shared 41-node rule, built once.
const GaussHermiteRule& default_quadrature();

}  // namespace seqmon
