#include "pvsa/pvsa.hpp"

#include "pvsa/parallel.hpp"
#include "pvsa/sensitivity.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pvsa {

SensitivityVectors build_c_vectors(const Feeder& feeder, const PhasorSet& state, NodeId observation, Phase phase) {
  const std::size_t o = feeder.index_of(observation);
  const std::size_t n = feeder.node_count();
  if (state.size() != n) throw std::invalid_argument("phasor set does not match the feeder");
  const PowerLayout layout{n};
  SensitivityVectors sv{observation, phase, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size())),
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()))};
  const auto u = static_cast<Eigen::Index>(index(phase));
  const double zbase = feeder.base().impedance();

  for (std::size_t node = 0; node < n; ++node) {
    const Matrix3c& z = feeder.path_impedance(feeder.common_ancestor(o, node));
    for (Phase v : kPhases) {
      if (!feeder.node(node).phases.has(v)) continue;
      const Complex vn = state.at(node, v);
      const double mag = std::abs(vn);
      if (!(mag > 0.0))
        throw SingularVoltage("zero voltage at node " + std::to_string(feeder.node(node).id.value) + " phase " +
                              to_char(v));
      const Complex zuv = z(u, static_cast<Eigen::Index>(index(v))) / zbase;
      const double theta = std::arg(vn);
      const double along = (zuv.real() * std::cos(theta) - zuv.imag() * std::sin(theta)) / mag;
      const double across = (zuv.real() * std::sin(theta) + zuv.imag() * std::cos(theta)) / mag;
      const auto p_idx = static_cast<Eigen::Index>(layout.at(node, v, Component::active));
      const auto q_idx = static_cast<Eigen::Index>(layout.at(node, v, Component::reactive));
      sv.c_r(p_idx) = -along;
      sv.c_r(q_idx) = -across;
      sv.c_i(p_idx) = -across;
      sv.c_i(q_idx) = along;
    }
  }
  return sv;
}

GaussianDeltaV delta_v_distribution(const SensitivityVectors& sv, const PowerChangeModel& model) {
  const auto dim = sv.c_r.size();
  if (sv.c_i.size() != dim || model.mu.size() != dim || model.sigma.rows() != dim || model.sigma.cols() != dim)
    throw std::invalid_argument("sensitivity vectors and power-change model differ in dimension");
  GaussianDeltaV g;
  g.mu1 << sv.c_r.dot(model.mu), sv.c_i.dot(model.mu);
  const Eigen::VectorXd sr = model.sigma * sv.c_r;
  const Eigen::VectorXd si = model.sigma * sv.c_i;
  const double cov = 0.5 * (sv.c_r.dot(si) + sv.c_i.dot(sr));
  g.sigma1 << sv.c_r.dot(sr), cov, cov, sv.c_i.dot(si);
  return g;
}

RicianPrediction predicted_voltage_distribution(Complex v_present, const GaussianDeltaV& g, Variant variant) {
  RicianPrediction p;
  p.mu_r = v_present.real() + g.mu1(0);
  p.mu_i = v_present.imag() + g.mu1(1);
  p.var_r = std::max(g.sigma1(0, 0), 0.0);
  p.var_i = std::max(g.sigma1(1, 1), 0.0);
  p.cov_ri = g.sigma1(0, 1);
  if (!std::isfinite(p.mu_r) || !std::isfinite(p.mu_i) || !std::isfinite(p.var_r) || !std::isfinite(p.var_i))
    throw std::invalid_argument("non-finite voltage distribution");

  const double m_r2 = p.mu_r * p.mu_r;
  const double m_i2 = p.mu_i * p.mu_i;
  const double spread = std::sqrt(p.var_r + p.var_i);
  if (spread <= 1e-14 * std::max(1.0, std::sqrt(m_r2 + m_i2))) {
    p.point_mass = true;
    p.kappa = std::sqrt(m_r2 + m_i2);
    return p;
  }

  // Weights var_j and non-centralities delta_j^2 = mu_j^2 / var_j of the two chi-square terms,
  // written so that a vanishing variance on one axis stays finite.
  const double vr2 = p.var_r * p.var_r;
  const double vi2 = p.var_i * p.var_i;
  const double s1 = p.var_r + p.var_i + 2.0 * m_r2 + 2.0 * m_i2;
  const double s2 = vr2 + vi2 + 2.0 * p.var_r * m_r2 + 2.0 * p.var_i * m_i2;
  const double noncentral = m_r2 + m_i2;
  p.lambda = s2 / s1;
  if (variant == Variant::symmetric) {
    p.w = noncentral * s1 / s2;
    p.v = (p.var_r + p.var_i) * s1 / s2;
  } else {
    double cross = 0.0;  // var_r^2 delta_i^2
    if (m_i2 > 0.0 && p.var_r > 0.0)
      cross = p.var_i > 0.0 ? vr2 * m_i2 / p.var_i : std::numeric_limits<double>::infinity();
    p.w = noncentral * s1 / (vr2 + vi2 + 2.0 * p.var_r * m_r2 + 2.0 * cross);
    p.v = (p.var_r + p.var_i) * s1 / (p.var_r + p.var_i + 2.0 * p.var_r * m_r2 + 2.0 * p.var_i * m_i2);
  }
  p.kappa = std::sqrt(p.lambda * p.w);
  p.sigma = std::sqrt(p.lambda);
  return p;
}

namespace {

// Above this non-centrality the Poisson-mixture series needs too many terms; the Rician CDF is
// then integrated directly as a Gaussian mixture instead.
constexpr double kSeriesLimit = 1.0e4;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// P(|V| <= x) for V = (a + X, Y) in units of sigma, X and Y standard normal: condition on Y.
double rician_cdf_integral(double a, double s) {
  constexpr double kTail = 12.0;  // phi(12) ~ 1e-32
  // a + X <= |V| <= |a + X| + |Y| bounds both tails by Phi(-9) ~ 1e-19.
  if (s - a < -9.0) return 0.0;
  if (s - a > 9.0 + kTail) return 1.0;
  const double top = std::min(s, kTail);
  if (top <= 0.0) return 0.0;
  auto integrand = [a, s](double y) {
    const double h = std::sqrt(std::max(s * s - y * y, 0.0));
    const double inside = normal_cdf(h - a) - normal_cdf(-h - a);
    return std::exp(-0.5 * y * y) * inside;
  };
  double err = 0.0;
  const double area = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, top, 8, 1e-12, &err);
  return std::clamp(2.0 * area / std::sqrt(2.0 * std::numbers::pi), 0.0, 1.0);
}

double scaled_bessel_i(int order, double z) {
  // exp(-z) I_order(z)
  if (z < 500.0) return std::exp(-z) * boost::math::cyl_bessel_i(order, z);
  const double mu = 4.0 * order * order;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 12; ++k) {
    term *= -(mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * z);
    sum += term;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * z);
}

}  // namespace

double rician_cdf(const RicianPrediction& pred, double x, CdfMode mode) {
  if (std::isnan(x)) throw std::invalid_argument("rician_cdf at NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (pred.point_mass) return x >= pred.kappa ? 1.0 : 0.0;
  if (!(pred.lambda > 0.0)) throw std::invalid_argument("Rician scale must be positive");

  if (mode == CdfMode::generalized) {
    if (!(pred.v > 0.0) || !std::isfinite(pred.v)) throw std::domain_error("degrees of freedom must be positive");
    boost::math::non_central_chi_squared dist(pred.v, pred.w);
    return boost::math::cdf(dist, x * x / pred.lambda);
  }
  const double a = pred.kappa / pred.sigma;
  const double s = x / pred.sigma;
  if (a * a <= kSeriesLimit) {
    boost::math::non_central_chi_squared dist(2.0, a * a);
    return boost::math::cdf(dist, s * s);
  }
  return rician_cdf_integral(a, s);
}

double rician_interval_probability(const RicianPrediction& pred, double lower, double upper, CdfMode mode) {
  if (!(lower >= 0.0) || !(upper > lower)) throw std::invalid_argument("invalid interval");
  return std::clamp(rician_cdf(pred, upper, mode) - rician_cdf(pred, lower, mode), 0.0, 1.0);
}

double rician_quantile(const RicianPrediction& pred, double p, CdfMode mode) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  if (pred.point_mass) return pred.kappa;
  double lo = 0.0;
  double hi = pred.kappa + 10.0 * pred.sigma * std::max(1.0, std::sqrt(pred.v));
  while (rician_cdf(pred, hi, mode) < p) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rician_cdf(pred, mid, mode) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

RicianMoments rician_moments(const RicianPrediction& pred) {
  if (pred.point_mass) return {pred.kappa, 0.0};
  const double s2 = pred.sigma * pred.sigma;
  const double z = pred.kappa * pred.kappa / (4.0 * s2);
  const double laguerre = (1.0 + 2.0 * z) * scaled_bessel_i(0, z) + 2.0 * z * scaled_bessel_i(1, z);
  const double mean = pred.sigma * std::sqrt(std::numbers::pi / 2.0) * laguerre;
  return {mean, std::max(2.0 * s2 + pred.kappa * pred.kappa - mean * mean, 0.0)};
}

ViolationAssessment violation_probability(const RicianPrediction& pred, VoltageLimits limits, double threshold,
                                          CdfMode mode) {
  ViolationAssessment a;
  a.limits = limits;
  if (pred.point_mass) {
    a.p_violation = (pred.kappa > limits.lower && pred.kappa < limits.upper) ? 0.0 : 1.0;
  } else {
    a.p_violation = 1.0 - rician_interval_probability(pred, limits.lower, limits.upper, mode);
  }
  a.vulnerable = a.p_violation > threshold;
  return a;
}

std::vector<RicianPrediction> predict_network(const Feeder& feeder, const PhasorSet& state,
                                              const PowerChangeModel& model, Variant variant, unsigned workers) {
  model.validate(feeder.node_count());
  state.validate(feeder);
  std::vector<std::pair<std::size_t, Phase>> targets;
  for (std::size_t i = 0; i < feeder.node_count(); ++i)
    for (Phase p : kPhases)
      if (feeder.node(i).phases.has(p)) targets.emplace_back(i, p);

  const auto m = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd c(model.mu.size(), 2 * m);
  parallel_for(targets.size(), workers, [&](std::size_t k) {
    const auto [i, p] = targets[k];
    auto sv = build_c_vectors(feeder, state, feeder.node(i).id, p);
    c.col(2 * static_cast<Eigen::Index>(k)) = sv.c_r;
    c.col(2 * static_cast<Eigen::Index>(k) + 1) = sv.c_i;
  });
  const Eigen::MatrixXd sc = model.sigma * c;
  const Eigen::VectorXd means = c.transpose() * model.mu;

  std::vector<RicianPrediction> out(targets.size());
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto r = 2 * k, i = 2 * k + 1;
    GaussianDeltaV g;
    g.mu1 << means(r), means(i);
    const double cov = 0.5 * (c.col(r).dot(sc.col(i)) + c.col(i).dot(sc.col(r)));
    g.sigma1 << c.col(r).dot(sc.col(r)), cov, cov, c.col(i).dot(sc.col(i));
    const auto [node, p] = targets[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = predicted_voltage_distribution(state.at(node, p), g, variant);
  }
  return out;
}

std::vector<ViolationAssessment> assess_network(const Feeder& feeder, const PhasorSet& state,
                                                const PowerChangeModel& model, const AssessOptions& options) {
  const auto preds = predict_network(feeder, state, model, options.variant, options.workers);
  std::vector<ViolationAssessment> out;
  out.reserve(preds.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < feeder.node_count(); ++i) {
    for (Phase p : kPhases) {
      if (!feeder.node(i).phases.has(p)) continue;
      auto a = violation_probability(preds[k++], options.limits, options.threshold, options.mode);
      a.node = feeder.node(i).id;
      a.phase = p;
      out.push_back(a);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ViolationAssessment& x, const ViolationAssessment& y) {
    return std::pair(x.node, index(x.phase)) < std::pair(y.node, index(y.phase));
  });
  return out;
}

}  // namespace pvsa
