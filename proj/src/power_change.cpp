#include "pvsa/power_change.hpp"

#include "pvsa/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace pvsa {

PowerChangeModel PowerChangeModel::zero(std::size_t nodes) {
  const auto dim = static_cast<Eigen::Index>(6 * nodes);
  return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
}

Vector3c PowerChangeModel::node_change(const Eigen::VectorXd& stacked, std::size_t node) {
  const PowerLayout layout{static_cast<std::size_t>(stacked.size()) / 6};
  Vector3c s;
  for (Phase p : kPhases) {
    s(static_cast<Eigen::Index>(index(p))) =
        Complex(stacked(static_cast<Eigen::Index>(layout.at(node, p, Component::active))),
                stacked(static_cast<Eigen::Index>(layout.at(node, p, Component::reactive))));
  }
  return s;
}

void PowerChangeModel::validate(std::size_t node_count) const {
  const auto dim = static_cast<Eigen::Index>(6 * node_count);
  if (mu.size() != dim || sigma.rows() != dim || sigma.cols() != dim)
    throw std::invalid_argument("power-change model dimension does not match the feeder");
  if (!mu.allFinite() || !sigma.allFinite()) throw std::invalid_argument("non-finite power-change model");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("covariance is not symmetric");
  if (!psd_cholesky(sigma)) throw std::invalid_argument("covariance is not positive semidefinite");
}

std::optional<Eigen::MatrixXd> psd_cholesky(const Eigen::MatrixXd& a, double rel_tol) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) return std::nullopt;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  const double dmax = n > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double tol = rel_tol * std::max(dmax, 1e-300);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (d < -tol) return std::nullopt;
    if (d <= tol) {
      // Zero pivot: the rest of the column must vanish too, or A is indefinite.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double r = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
        if (std::abs(r) > 10.0 * std::sqrt(tol * std::max(a(i, i), 0.0)) + tol) return std::nullopt;
      }
      continue;
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
  }
  return l;
}

GaussianSampler::GaussianSampler(const PowerChangeModel& model) : mean_(model.mu) {
  auto l = psd_cholesky(model.sigma);
  if (!l) throw std::invalid_argument("covariance is not positive semidefinite");
  factor_ = std::move(*l);
  for (Eigen::Index j = 0; j < factor_.cols(); ++j)
    if (factor_.col(j).cwiseAbs().maxCoeff() > 0.0) active_cols_.push_back(j);
}

Eigen::VectorXd GaussianSampler::draw(Rng& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  Eigen::VectorXd x = mean_;
  for (Eigen::Index j : active_cols_) x.noalias() += factor_.col(j) * z(j);
  return x;
}

}  // namespace pvsa
