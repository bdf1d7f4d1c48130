#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/noise_schedule.hpp"
#include "scorelab/relu_net.hpp"
#include "scorelab/score_oracle.hpp"

namespace scorelab {

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Learning rate decays geometrically to learning_rate * final_ratio.
  double final_ratio = 0.1;
};

struct TrainPlan {
  std::size_t width = 32;
  std::size_t depth = 2;
  double trunc_b = 10.0;
  TimeWindow window{1e-3, 5.0};
  std::size_t mc_time_draws = 1;  // (t, z) draws per data point per step
  std::size_t batch_size = 256;
  AdamParams adam;
  std::size_t steps = 1000;
  std::size_t eval_every = 250;
  double val_fraction = 0.1;
  std::size_t val_draws = 4;           // fixed (t, z) draws per validation point
  std::size_t val_max_points = 16384;  // cap on validation regression pairs
  std::uint64_t seed = 1;
};

struct McSpec {
  std::size_t time_draws = 1;
  bool stratified = true;
};

/// Monte Carlo estimate of the denoising score-matching loss
///   (1/n) sum_i E_{t ~ U(window), X_t ~ p_{t|0}(.|X0_i)} ||s(X_t,t) - grad log p_{t|0}||^2.
ErrorEstimate sm_loss(const ScoreFn& score, const NoiseSchedule& schedule, const Matrix& data,
                      const TimeWindow& window, const McSpec& mc, Rng& rng);

struct TrainLogRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ScoreNetwork net;
  std::vector<TrainLogRow> log;
  std::vector<double> step_losses;
  std::size_t best_step = 0;
  double best_val_loss = 0.0;
};

/// Adam on fresh (t, z) draws each step, keeping the snapshot with the
/// lowest held-out loss. Throws TrainingError on a non-finite loss.
TrainResult train(const TrainPlan& plan, const NoiseSchedule& schedule, const Matrix& data);

/// Weak training-monotonicity flag: over the first half of the run, means
/// of consecutive 10-step blocks never rise by more than 3 standard errors.
bool weakly_monotone(const std::vector<double>& step_losses, std::size_t block = 10);

struct IntervalShape {
  std::size_t width = 0;
  std::size_t depth = 0;
  double trunc_b = 10.0;
};

/// Boundaries t_0 = T_lo < t_1 < ... < t_P = T_hi with per-interval network shapes.
struct TimeGrid {
  std::vector<double> boundaries;
  std::vector<IntervalShape> shapes;
  std::size_t intervals() const { return shapes.size(); }
};

struct PiecewiseScaling {
  double wl_scale = 1.0;      // W_j L_j = wl_scale * t_j^{-d/4}
  std::size_t depth = 2;
  std::size_t min_width = 2;
  std::size_t max_width = 256;
  double trunc_b = 10.0;
};

/// Dyadic grid: P = floor(log2(T_hi/T_lo)) + 1, t_1 = n^{-2 d*/(d (2 beta + d*))},
/// t_{j+1} = min(2 t_j, T_hi). t_1 is clamped into (T_lo, T_hi], the last
/// boundary is forced to T_hi and zero-length intervals are dropped.
TimeGrid make_time_grid(std::size_t n, std::size_t d, std::size_t d_star, double beta,
                        const TimeWindow& window, const PiecewiseScaling& scaling);

/// Single-interval grid [T_lo, T_hi].
TimeGrid single_interval_grid(const TimeWindow& window, const IntervalShape& shape);

/// Score estimator dispatching on t: interval j owns [t_j, t_{j+1}); the
/// final boundary belongs to the last interval.
class PiecewiseScore {
 public:
  PiecewiseScore(std::vector<double> boundaries, std::vector<ScoreNetwork> nets);

  std::size_t interval_of(double t) const;
  const std::vector<double>& boundaries() const { return boundaries_; }
  const std::vector<ScoreNetwork>& nets() const { return nets_; }
  void evaluate(std::span<const double> x, double t, std::span<double> out) const;
  ScoreFn score_fn() const;

 private:
  std::vector<double> boundaries_;
  std::vector<ScoreNetwork> nets_;
};

struct PiecewiseTrainResult {
  PiecewiseScore score;
  std::vector<TrainResult> runs;
};

/// Trains one network per interval. Interval 0 uses plan.seed unchanged,
/// so a single-interval grid reproduces train() exactly.
PiecewiseTrainResult train_piecewise(const TimeGrid& grid, const TrainPlan& plan,
                                     const NoiseSchedule& schedule, const Matrix& data);

}  // namespace scorelab
