#include "crm/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "crm/error.hpp"

namespace crm {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix of
// the Hermite recurrence, weights sqrt(pi) times the squared first components.
GaussHermite::GaussHermite(std::size_t order) {
  require(order >= 1, ErrorKind::invalid_argument, "quadrature order must be >= 1");
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) {
    J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i) / 2.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  require(es.info() == Eigen::Success, ErrorKind::non_finite, "Gauss-Hermite eigensolve failed");
  nodes.resize(order);
  weights.resize(order);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    weights[static_cast<std::size_t>(i)] = std::sqrt(std::numbers::pi) * v0 * v0;
  }
}

double GaussHermite::expect(const std::function<double(double)>& h, double mean, double sd) const {
  require(sd > 0.0, ErrorKind::invalid_argument, "standard deviation must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    s += weights[i] * h(mean + std::numbers::sqrt2 * sd * nodes[i]);
  }
  return s / std::sqrt(std::numbers::pi);
}

}  // namespace crm
