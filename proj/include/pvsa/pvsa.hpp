#pragma once

#include "pvsa/network.hpp"
#include "pvsa/power_change.hpp"

#include <Eigen/Dense>

#include <vector>

namespace pvsa {

/// Constant coefficient vectors mapping the stacked power change to the real and imaginary
/// voltage change at one (observation node, phase).
struct SensitivityVectors {
  NodeId observation;
  Phase phase = Phase::a;
  Eigen::VectorXd c_r;
  Eigen::VectorXd c_i;
};

struct GaussianDeltaV {
  Eigen::Vector2d mu1 = Eigen::Vector2d::Zero();     // means of dV^r, dV^i
  Eigen::Matrix2d sigma1 = Eigen::Matrix2d::Zero();  // covariance of (dV^r, dV^i)

  double covariance() const { return sigma1(0, 1); }
};

/// Form of the moment-matched non-centrality and degrees of freedom. `symmetric` treats the real
/// and imaginary parts alike; `paper_verbatim` uses sigma_r^4 mu_i^2 in the non-centrality
/// denominator and first-power variances in the degrees-of-freedom denominator.
enum class Variant { symmetric, paper_verbatim };

/// How the scaled chi-square approximation is evaluated: as a Rician (two degrees of freedom) or
/// with the fitted, generally non-integer, degrees of freedom v.
enum class CdfMode { rician, generalized };

struct RicianPrediction {
  double kappa = 0.0;   // sqrt(lambda w), Rician location
  double sigma = 0.0;   // sqrt(lambda), Rician scale
  double lambda = 0.0;  // weight of the scaled chi-square
  double w = 0.0;       // non-centrality of the unit-weight chi-square
  double v = 2.0;       // fitted degrees of freedom
  double mu_r = 0.0;
  double mu_i = 0.0;
  double var_r = 0.0;
  double var_i = 0.0;
  double cov_ri = 0.0;      // carried for diagnostics, not used by the fit
  bool point_mass = false;  // var_r = var_i = 0: |V^f| is deterministic and equal to kappa
};

struct VoltageLimits {
  double lower = 0.95;
  double upper = 1.05;
};

struct ViolationAssessment {
  NodeId node;
  Phase phase = Phase::a;
  double p_violation = 0.0;
  bool vulnerable = false;
  VoltageLimits limits;
};

struct AssessOptions {
  VoltageLimits limits;
  double threshold = 0.5;
  Variant variant = Variant::symmetric;
  CdfMode mode = CdfMode::rician;
  unsigned workers = 1;
};

SensitivityVectors build_c_vectors(const Feeder& feeder, const PhasorSet& state, NodeId observation, Phase phase);

GaussianDeltaV delta_v_distribution(const SensitivityVectors& sv, const PowerChangeModel& model);

RicianPrediction predicted_voltage_distribution(Complex v_present, const GaussianDeltaV& g,
                                                Variant variant = Variant::symmetric);

/// P(|V^f| <= x); absolute error below 1e-8 in the Rician mode.
double rician_cdf(const RicianPrediction& pred, double x, CdfMode mode = CdfMode::rician);

/// P(lower < |V^f| < upper). `upper` may be +infinity.
double rician_interval_probability(const RicianPrediction& pred, double lower, double upper,
                                   CdfMode mode = CdfMode::rician);

/// Inverse of rician_cdf by bracketing and bisection.
double rician_quantile(const RicianPrediction& pred, double p, CdfMode mode = CdfMode::rician);

struct RicianMoments {
  double mean = 0.0;
  double variance = 0.0;
};
RicianMoments rician_moments(const RicianPrediction& pred);

ViolationAssessment violation_probability(const RicianPrediction& pred, VoltageLimits limits = {},
                                          double threshold = 0.5, CdfMode mode = CdfMode::rician);

/// Prediction for every energized (node, phase) in Feeder::nodes() order.
std::vector<RicianPrediction> predict_network(const Feeder& feeder, const PhasorSet& state,
                                              const PowerChangeModel& model, Variant variant = Variant::symmetric,
                                              unsigned workers = 1);

/// One assessment per energized (node, phase), ordered by (NodeId, phase).
std::vector<ViolationAssessment> assess_network(const Feeder& feeder, const PhasorSet& state,
                                                const PowerChangeModel& model, const AssessOptions& options = {});

}  // namespace pvsa
