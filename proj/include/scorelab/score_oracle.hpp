#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/interaction_density.hpp"
#include "scorelab/noise_schedule.hpp"

namespace scorelab {

/// Axis-aligned Gaussian mixture component (auxiliary oracle family).
struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> sd;  // per-coordinate standard deviation
};

struct OracleQuadSpec {
  std::size_t nodes_per_axis = 64;
  /// Gaussian kernel window half-width in units of sigma_t / m_t.
  double radius_sd = 10.0;
};

/// Ground-truth diffused density p_t and score grad log p_t.
class DiffusedOracle {
 public:
  enum class Method { ClosedFormUniform, ClosedFormGaussianMixture, Quadrature };

  /// Uniform p0 on [-1, 1]^d.
  static DiffusedOracle uniform(std::size_t d, NoiseSchedule schedule);
  static DiffusedOracle gaussian_mixture(std::vector<MixtureComponent> mixture,
                                         NoiseSchedule schedule);
  /// Quadrature over the cube; d <= 3, or any d when every clique is a singleton.
  static DiffusedOracle quadrature(InteractionDensity density, NoiseSchedule schedule,
                                   OracleQuadSpec spec = {});

  Method method() const { return method_; }
  std::size_t dim() const { return d_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  double density(std::span<const double> x, double t) const;
  double log_density(std::span<const double> x, double t) const;
  /// Throws RegionError where p_t(x) is below the evaluation floor.
  void score(std::span<const double> x, double t, std::span<double> out) const;
  std::vector<double> score(std::span<const double> x, double t) const;
  ScoreFn score_fn() const;

  /// p0 itself (t = 0).
  double initial_density(std::span<const double> x) const;
  /// Draws from p0.
  Matrix sample_initial(std::size_t n, std::uint64_t seed) const;

  static constexpr double kDensityFloor = 1e-280;

 private:
  DiffusedOracle(Method method, std::size_t d, NoiseSchedule schedule)
      : method_(method), d_(d), schedule_(std::move(schedule)) {}

  // log p_t and, optionally, grad log p_t.
  double evaluate(std::span<const double> x, double t, std::span<double> grad) const;
  double evaluate_uniform(std::span<const double> x, double t, std::span<double> grad) const;
  double evaluate_mixture(std::span<const double> x, double t, std::span<double> grad) const;
  double evaluate_quadrature(std::span<const double> x, double t, std::span<double> grad) const;

  Method method_;
  std::size_t d_;
  NoiseSchedule schedule_;
  std::vector<MixtureComponent> mixture_;
  std::optional<InteractionDensity> density_;
  OracleQuadSpec quad_;
  bool separable_ = false;
  // Separable case: per-coordinate log factor and 1-D normalizer.
  std::vector<int> axis_component_;
  std::vector<double> axis_log_z_;
};

struct ErrorEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of [ int ||s(x,t) - s_t(x)||^2 p_t(x) dx ]^{1/2} with
/// x = m_t X0 + sigma_t Z, X0 ~ p0. Standard error via the delta method.
ErrorEstimate score_l2_error(const ScoreFn& candidate, const DiffusedOracle& oracle, double t,
                             std::size_t mc_n, Rng& rng);

}  // namespace scorelab
