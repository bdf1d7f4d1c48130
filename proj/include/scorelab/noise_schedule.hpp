#pragma once

#include <span>
#include <string>
#include <vector>

#include "scorelab/common.hpp"

namespace scorelab {

/// Weighting function beta_t of the forward OU process
///   dX_t = -beta_t X_t dt + sqrt(2 beta_t) dB_t.
///
/// Kinds:
///   constant: beta_t = params[0]
///   linear:   beta_t = params[0] + params[1] * t
///   custom:   beta_t = params[0] + sum_{k>=1} params[k] * cos(k t)
///             (integral computed by adaptive quadrature)
class NoiseSchedule {
 public:
  enum class Kind { Constant, Linear, Custom };

  NoiseSchedule() : NoiseSchedule(Kind::Constant, {1.0}) {}
  NoiseSchedule(Kind kind, std::vector<double> params, double c2 = 0.0);

  static NoiseSchedule constant(double beta = 1.0) { return {Kind::Constant, {beta}}; }
  static NoiseSchedule linear(double a, double b) { return {Kind::Linear, {a, b}}; }

  Kind kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }
  /// Declared bound with 1/c2 <= beta_t <= c2. Zero means "derive on demand".
  double c2() const { return c2_; }
  std::string id() const;

  double beta(double t) const;
  /// int_0^t beta_s ds.
  double integrated_beta(double t) const;
  /// Mean decay m_t = exp(-int_0^t beta).
  double mean_decay(double t) const;
  /// sigma_t = sqrt(1 - m_t^2), computed without cancellation near t = 0.
  double sigma(double t) const;
  /// Smallest t with sigma_t = s, s in (0, 1).
  double time_for_sigma(double s) const;

  /// Max of max(beta, 1/beta) over a grid of [0, t_hi]; compare with c2().
  double observed_c2(double t_hi, std::size_t points = 1000) const;

  bool operator==(const NoiseSchedule&) const = default;

 private:
  Kind kind_;
  std::vector<double> params_;
  double c2_;
};

struct MeanSigma {
  double m;
  double sigma;
};

struct TimeWindow {
  double t_lo;
  double t_hi;
  TimeWindow(double lo, double hi);
};

MeanSigma m_sigma(const NoiseSchedule& schedule, double t);

/// m_t x0 + sigma_t z, z ~ N(0, I).
std::vector<double> forward_perturb(const NoiseSchedule& schedule, std::span<const double> x0,
                                    double t, Rng& rng);

/// grad_x log p_{t|0}(x | x0) = -(x - m_t x0) / sigma_t^2.
std::vector<double> conditional_score(const NoiseSchedule& schedule, std::span<const double> x,
                                      std::span<const double> x0, double t);

}  // namespace scorelab
