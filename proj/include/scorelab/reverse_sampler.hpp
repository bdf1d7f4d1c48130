#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/noise_schedule.hpp"
#include "scorelab/score_matching.hpp"

namespace scorelab {

enum class GridKind { Uniform, Geometric };

struct SamplerConfig {
  std::size_t steps = 500;
  GridKind grid = GridKind::Geometric;
  /// Geometric grid in forward time: t_k + offset is geometric. offset = 0
  /// gives pure geometric spacing; large offsets approach the uniform grid.
  double geometric_offset = 0.0;
  TimeWindow window{1e-3, 5.0};
  std::size_t chains = 10000;
  std::uint64_t seed = 1;
  /// Number of leading chains whose full trajectories are kept.
  std::size_t record_chains = 0;

  std::string describe() const;
};

struct BlowUpError : NumericError {
  BlowUpError(const std::string& what, std::size_t step) : NumericError(what), step(step) {}
  std::size_t step;
};

/// Forward times T_hi = t_0 > t_1 > ... > t_steps = T_lo visited by the sampler.
std::vector<double> forward_time_grid(const SamplerConfig& config);

struct SampleResult {
  Matrix terminal;            // chains x d, states at forward time T_lo
  std::vector<double> times;  // forward times, size steps + 1
  /// record_chains x ((steps + 1) * d), row-major per chain.
  Matrix trajectories;
};

/// Euler-Maruyama for dY = beta(Y + 2 s(Y, t)) dtau + sqrt(2 beta) dB with
/// forward time t = T_hi - tau, drift frozen at the left end of each step,
/// Y_0 ~ N(0, I). Throws BlowUpError on a non-finite state.
SampleResult reverse_sample(const ScoreFn& score, std::size_t d, const NoiseSchedule& schedule,
                            const SamplerConfig& config);

SampleResult reverse_sample_piecewise(const PiecewiseScore& score, std::size_t d,
                                      const NoiseSchedule& schedule, const SamplerConfig& config);

/// Interval index used at each evaluation time of the sampler (all steps
/// except the terminal time).
std::vector<std::size_t> dispatch_audit(const PiecewiseScore& score, const SamplerConfig& config);

/// Fraction of rows with some coordinate outside [-bound, bound].
double fraction_outside(const Matrix& samples, double bound = 1.5);

/// Copy with every coordinate clipped to [-1, 1].
Matrix clip_to_cube(const Matrix& samples);

}  // namespace scorelab
