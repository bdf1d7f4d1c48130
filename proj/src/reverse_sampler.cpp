#include "scorelab/reverse_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scorelab {
namespace {

constexpr std::size_t kChunk = 1024;

}  // namespace

std::string SamplerConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "steps=" << steps << ";grid=" << (grid == GridKind::Uniform ? "uniform" : "geometric")
     << ";offset=" << geometric_offset << ";t_lo=" << window.t_lo << ";t_hi=" << window.t_hi
     << ";chains=" << chains << ";seed=" << seed;
  return os.str();
}

std::vector<double> forward_time_grid(const SamplerConfig& config) {
  if (config.steps == 0) throw DomainError("sampler: steps must be >= 1");
  if (config.geometric_offset < 0) throw DomainError("sampler: geometric offset must be >= 0");
  const double lo = config.window.t_lo, hi = config.window.t_hi;
  const std::size_t n = config.steps;
  std::vector<double> t(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(n);
    if (config.grid == GridKind::Uniform) {
      t[k] = hi - (hi - lo) * u;
    } else {
      const double c = config.geometric_offset;
      t[k] = (hi + c) * std::pow((lo + c) / (hi + c), u) - c;
    }
  }
  t.front() = hi;
  t.back() = lo;
  return t;
}

SampleResult reverse_sample(const ScoreFn& score, std::size_t d, const NoiseSchedule& schedule,
                            const SamplerConfig& config) {
  if (d == 0) throw DomainError("sampler: dimension must be positive");
  SampleResult result;
  result.times = forward_time_grid(config);
  const auto& times = result.times;
  const std::size_t steps = config.steps;
  const std::size_t recorded = std::min(config.record_chains, config.chains);
  result.terminal = Matrix(config.chains, d);
  result.trajectories = Matrix(recorded, (steps + 1) * d);

  std::vector<double> beta(steps), h(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    beta[k] = schedule.beta(times[k]);
    h[k] = times[k] - times[k + 1];
  }

  const std::size_t chunks = (config.chains + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng = make_stream(config.seed, c);
    std::normal_distribution<double> normal;
    const std::size_t lo = c * kChunk, hi = std::min(config.chains, lo + kChunk);
    const std::size_t m = hi - lo;
    std::vector<double> y(m * d), s(d);
    for (auto& v : y) v = normal(rng);
    auto record = [&](std::size_t k) {
      for (std::size_t i = lo; i < std::min(hi, recorded); ++i)
        std::copy_n(y.begin() + (i - lo) * d, d, result.trajectories.row(i).begin() + k * d);
    };
    record(0);
    for (std::size_t k = 0; k < steps; ++k) {
      const double noise = std::sqrt(2.0 * beta[k] * h[k]);
      for (std::size_t i = 0; i < m; ++i) {
        std::span<double> yi(y.data() + i * d, d);
        score(yi, times[k], s);
        for (std::size_t l = 0; l < d; ++l) {
          yi[l] += beta[k] * (yi[l] + 2.0 * s[l]) * h[k] + noise * normal(rng);
          if (!std::isfinite(yi[l]))
            throw BlowUpError("sampler: non-finite state at step " + std::to_string(k + 1),
                              k + 1);
        }
      }
      record(k + 1);
    }
    std::copy(y.begin(), y.end(), result.terminal.data.begin() + lo * d);
  });
  return result;
}

SampleResult reverse_sample_piecewise(const PiecewiseScore& score, std::size_t d,
                                      const NoiseSchedule& schedule, const SamplerConfig& config) {
  const double slack = 1e-12 * score.boundaries().back();
  if (config.window.t_lo < score.boundaries().front() - slack ||
      config.window.t_hi > score.boundaries().back() + slack)
    throw DomainError("sampler: window exceeds the piecewise estimator's range");
  return reverse_sample(score.score_fn(), d, schedule, config);
}

std::vector<std::size_t> dispatch_audit(const PiecewiseScore& score, const SamplerConfig& config) {
  const auto times = forward_time_grid(config);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) out.push_back(score.interval_of(times[k]));
  return out;
}

double fraction_outside(const Matrix& samples, double bound) {
  if (samples.rows == 0) return 0.0;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto r = samples.row(i);
    if (std::any_of(r.begin(), r.end(), [&](double v) { return std::abs(v) > bound; })) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(samples.rows);
}

Matrix clip_to_cube(const Matrix& samples) {
  Matrix out = samples;
  for (auto& v : out.data) v = std::clamp(v, -1.0, 1.0);
  return out;
}

}  // namespace scorelab
