#include "scorelab/noise_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scorelab/quadrature.hpp"

namespace scorelab {

NoiseSchedule::NoiseSchedule(Kind kind, std::vector<double> params, double c2)
    : kind_(kind), params_(std::move(params)), c2_(c2) {
  const std::size_t need = kind_ == Kind::Linear ? 2 : 1;
  if (params_.size() < need) throw DomainError("NoiseSchedule: too few parameters");
  if (kind_ == Kind::Constant && params_.size() != 1)
    throw DomainError("NoiseSchedule: constant kind takes one parameter");
  if (kind_ == Kind::Linear && params_.size() != 2)
    throw DomainError("NoiseSchedule: linear kind takes two parameters");
  if (!(beta(0.0) > 0)) throw DomainError("NoiseSchedule: beta_0 must be positive");
  if (kind_ == Kind::Linear && params_[1] < 0)
    throw DomainError("NoiseSchedule: linear slope must be nonnegative");
  if (kind_ == Kind::Custom) {
    double amp = 0;
    for (std::size_t k = 1; k < params_.size(); ++k) amp += std::abs(params_[k]);
    if (params_[0] - amp <= 0)
      throw DomainError("NoiseSchedule: custom schedule is not bounded away from zero");
  }
}

std::string NoiseSchedule::id() const {
  std::ostringstream os;
  os << (kind_ == Kind::Constant ? "constant" : kind_ == Kind::Linear ? "linear" : "custom");
  os.precision(17);
  for (double p : params_) os << ':' << p;
  return os.str();
}

double NoiseSchedule::beta(double t) const {
  switch (kind_) {
    case Kind::Constant:
      return params_[0];
    case Kind::Linear:
      return params_[0] + params_[1] * t;
    case Kind::Custom: {
      double b = params_[0];
      for (std::size_t k = 1; k < params_.size(); ++k)
        b += params_[k] * std::cos(static_cast<double>(k) * t);
      return b;
    }
  }
  return 0.0;
}

double NoiseSchedule::integrated_beta(double t) const {
  if (t < 0) throw DomainError("NoiseSchedule: negative time");
  switch (kind_) {
    case Kind::Constant:
      return params_[0] * t;
    case Kind::Linear:
      return params_[0] * t + 0.5 * params_[1] * t * t;
    case Kind::Custom:
      if (t == 0) return 0.0;
      return adaptive_simpson([this](double s) { return beta(s); }, 0.0, t,
                              1e-13 * std::max(1.0, t));
  }
  return 0.0;
}

double NoiseSchedule::mean_decay(double t) const { return std::exp(-integrated_beta(t)); }

double NoiseSchedule::sigma(double t) const {
  return std::sqrt(-std::expm1(-2.0 * integrated_beta(t)));
}

double NoiseSchedule::time_for_sigma(double s) const {
  if (!(s > 0 && s < 1)) throw DomainError("time_for_sigma: sigma must lie in (0,1)");
  // Target integral B(t) = -log(1 - s^2)/2.
  const double target = -0.5 * std::log1p(-s * s);
  if (kind_ == Kind::Constant) return target / params_[0];
  if (kind_ == Kind::Linear) {
    const double a = params_[0], b = params_[1];
    if (b == 0) return target / a;
    return (-a + std::sqrt(a * a + 2.0 * b * target)) / b;
  }
  double lo = 0, hi = 1;
  while (integrated_beta(hi) < target) hi *= 2;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (integrated_beta(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double NoiseSchedule::observed_c2(double t_hi, std::size_t points) const {
  double c = 1.0;
  for (std::size_t i = 0; i <= points; ++i) {
    const double b = beta(t_hi * static_cast<double>(i) / static_cast<double>(points));
    c = std::max({c, b, 1.0 / b});
  }
  return c;
}

TimeWindow::TimeWindow(double lo, double hi) : t_lo(lo), t_hi(hi) {
  if (!(lo > 0 && hi > lo)) throw DomainError("TimeWindow: need 0 < t_lo < t_hi");
}

MeanSigma m_sigma(const NoiseSchedule& schedule, double t) {
  if (t < 0) throw DomainError("m_sigma: negative time");
  const double b = schedule.integrated_beta(t);
  return {std::exp(-b), std::sqrt(-std::expm1(-2.0 * b))};
}

std::vector<double> forward_perturb(const NoiseSchedule& schedule, std::span<const double> x0,
                                    double t, Rng& rng) {
  if (!(t > 0)) throw DomainError("forward_perturb: t must be positive");
  const auto [m, s] = m_sigma(schedule, t);
  std::normal_distribution<double> normal;
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = m * x0[i] + s * normal(rng);
  return out;
}

std::vector<double> conditional_score(const NoiseSchedule& schedule, std::span<const double> x,
                                      std::span<const double> x0, double t) {
  if (!(t > 0)) throw DomainError("conditional_score: singular at t = 0");
  const auto [m, s] = m_sigma(schedule, t);
  const double inv = 1.0 / (s * s);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - m * x0[i]) * inv;
  return out;
}

}  // namespace scorelab
