#pragma once

#include "pvsa/network.hpp"

#include <Eigen/Dense>

#include <optional>

namespace pvsa {

class Rng;

enum class Component : std::uint8_t { active = 0, reactive = 1 };

/// Index layout of the stacked power-change vector. One block of 2n entries per injecting phase,
/// each block ordered [dP_1 .. dP_n, dQ_1 .. dQ_n] over feeder node indices.
struct PowerLayout {
  std::size_t nodes = 0;

  std::size_t size() const { return 6 * nodes; }
  std::size_t at(std::size_t node, Phase p, Component k) const {
    return index(p) * 2 * nodes + static_cast<std::size_t>(k) * nodes + node;
  }
};

/// Mean and covariance of the stacked power change, per unit, positive = more consumption.
struct PowerChangeModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  static PowerChangeModel zero(std::size_t nodes);

  PowerLayout layout() const { return {static_cast<std::size_t>(mu.size()) / 6}; }
  /// Complex change at one node, one entry per phase.
  static Vector3c node_change(const Eigen::VectorXd& stacked, std::size_t node);

  /// Throws std::invalid_argument unless dimensions match the feeder, sigma is symmetric and it
  /// admits a semidefinite Cholesky factor.
  void validate(std::size_t node_count) const;
};

/// Lower-triangular L with L L^T = A for symmetric positive semidefinite A. Pivots that fall
/// below `rel_tol` times the largest diagonal are treated as zero; a clearly negative pivot
/// means A is not PSD and yields nullopt.
std::optional<Eigen::MatrixXd> psd_cholesky(const Eigen::MatrixXd& a, double rel_tol = 1e-10);

/// Mean plus a fixed Cholesky factor; draws mu + L z with z from Rng::normal().
class GaussianSampler {
 public:
  explicit GaussianSampler(const PowerChangeModel& model);

  Eigen::VectorXd draw(Rng& rng) const;
  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd factor_;
  std::vector<Eigen::Index> active_cols_;
};

}  // namespace pvsa
