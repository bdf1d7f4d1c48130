#include "scorelab/score_matching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace scorelab {
namespace {

// Draws t in the window (stratified over `count` draws) and fills the
// regression pair x = m x0 + sigma z, target = -(x - m x0)/sigma^2.
struct PairSampler {
  const NoiseSchedule& schedule;
  TimeWindow window;
  std::size_t d;

  void fill(std::span<const double> x0, double t, Rng& rng, std::span<double> x,
            std::span<double> target) const {
    const auto [m, s] = m_sigma(schedule, t);
    std::normal_distribution<double> normal;
    const double inv = 1.0 / (s * s);
    for (std::size_t l = 0; l < d; ++l) {
      x[l] = m * x0[l] + s * normal(rng);
      target[l] = -(x[l] - m * x0[l]) * inv;
    }
  }

  double time(std::size_t stratum, std::size_t strata, Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = (static_cast<double>(stratum) + unit(rng)) / static_cast<double>(strata);
    return window.t_lo + (window.t_hi - window.t_lo) * u;
  }
};

double now_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

ErrorEstimate sm_loss(const ScoreFn& score, const NoiseSchedule& schedule, const Matrix& data,
                      const TimeWindow& window, const McSpec& mc, Rng& rng) {
  if (data.rows == 0) throw DomainError("sm_loss: empty data");
  const std::size_t d = data.cols;
  const std::size_t draws = std::max<std::size_t>(1, mc.time_draws);
  PairSampler sampler{schedule, window, d};
  std::vector<double> x(d), target(d), out(d);
  std::vector<double> per_point(data.rows, 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < draws; ++k) {
      const double t = mc.stratified ? sampler.time(k, draws, rng) : sampler.time(0, 1, rng);
      sampler.fill(data.row(i), t, rng, x, target);
      score(x, t, out);
      for (std::size_t l = 0; l < d; ++l) acc += (out[l] - target[l]) * (out[l] - target[l]);
    }
    per_point[i] = acc / static_cast<double>(draws);
  }
  const double n = static_cast<double>(data.rows);
  const double mean = std::accumulate(per_point.begin(), per_point.end(), 0.0) / n;
  double var = 0;
  for (double v : per_point) var += (v - mean) * (v - mean);
  ErrorEstimate est;
  est.value = mean;
  est.std_error = data.rows > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
  return est;
}

TrainResult train(const TrainPlan& plan, const NoiseSchedule& schedule, const Matrix& data) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t d = data.cols;
  if (data.rows < 2) throw DomainError("train: need at least two data points");
  if (plan.batch_size == 0) throw DomainError("train: batch size must be positive");

  TrainResult result;
  result.net = init_network(plan.width, plan.depth, d + 1, d, plan.trunc_b,
                            mix_seed(plan.seed, 0), schedule);
  if (plan.steps == 0) return result;

  // Train/validation split.
  Rng split_rng = make_stream(plan.seed, 1);
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(plan.val_fraction * static_cast<double>(data.rows));
  n_val = std::clamp<std::size_t>(n_val, 1, data.rows - 1);
  std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));

  PairSampler sampler{schedule, plan.window, d};

  // Fixed validation pairs.
  const std::size_t val_draws = std::max<std::size_t>(1, plan.val_draws);
  const std::size_t val_pairs = std::min(plan.val_max_points, n_val * val_draws);
  std::vector<double> vx(val_pairs * d), vt(val_pairs), vy(val_pairs * d);
  {
    Rng vrng = make_stream(plan.seed, 2);
    for (std::size_t k = 0; k < val_pairs; ++k) {
      const std::size_t i = val_idx[k % n_val];
      vt[k] = sampler.time(k % val_pairs, val_pairs, vrng);
      sampler.fill(data.row(i), vt[k], vrng, std::span(vx).subspan(k * d, d),
                   std::span(vy).subspan(k * d, d));
    }
  }
  const TrainingBatch val_batch{vx, vt, vy};

  ScoreNetwork net = result.net;
  ScoreNetwork best = net;
  double best_val = batch_loss(net, val_batch);
  std::size_t best_step = 0;
  result.log.push_back({0, std::nan(""), best_val, now_ms(start)});

  const std::size_t p = net.parameter_count();
  std::vector<double> m1(p, 0.0), m2(p, 0.0);
  const std::size_t draws = std::max<std::size_t>(1, plan.mc_time_draws);
  const std::size_t batch_points = plan.batch_size;
  const std::size_t pairs = batch_points * draws;
  std::vector<double> bx(pairs * d), bt(pairs), by(pairs * d);
  Rng rng = make_stream(plan.seed, 3);
  std::size_t cursor = train_idx.size();
  double window_loss = 0;
  std::size_t window_count = 0;
  result.step_losses.reserve(plan.steps);

  for (std::size_t step = 1; step <= plan.steps; ++step) {
    for (std::size_t b = 0; b < batch_points; ++b) {
      if (cursor >= train_idx.size()) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        cursor = 0;
      }
      const std::size_t i = train_idx[cursor++];
      for (std::size_t k = 0; k < draws; ++k) {
        const std::size_t slot = b * draws + k;
        bt[slot] = sampler.time(slot, pairs, rng);
        sampler.fill(data.row(i), bt[slot], rng, std::span(bx).subspan(slot * d, d),
                     std::span(by).subspan(slot * d, d));
      }
    }
    const LossAndGradient lg = backward(net, TrainingBatch{bx, bt, by});
    if (!std::isfinite(lg.loss))
      throw TrainingError("train: non-finite loss at step " + std::to_string(step), step);
    result.step_losses.push_back(lg.loss);
    window_loss += lg.loss;
    ++window_count;

    const AdamParams& a = plan.adam;
    const double progress = static_cast<double>(step - 1) / static_cast<double>(plan.steps);
    const double lr = a.learning_rate * std::pow(a.final_ratio, progress);
    const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
    auto params = net.params();
    for (std::size_t k = 0; k < p; ++k) {
      const double g = lg.gradient.values[k];
      m1[k] = a.beta1 * m1[k] + (1.0 - a.beta1) * g;
      m2[k] = a.beta2 * m2[k] + (1.0 - a.beta2) * g * g;
      params[k] -= lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + a.epsilon);
    }
    if (!net.parameters_finite())
      throw TrainingError("train: non-finite parameters at step " + std::to_string(step), step);

    if (step % std::max<std::size_t>(1, plan.eval_every) == 0 || step == plan.steps) {
      const double val = batch_loss(net, val_batch);
      if (!std::isfinite(val))
        throw TrainingError("train: non-finite validation loss at step " + std::to_string(step),
                            step);
      result.log.push_back({step, window_loss / static_cast<double>(window_count), val,
                            now_ms(start)});
      window_loss = 0;
      window_count = 0;
      if (val < best_val) {
        best_val = val;
        best = net;
        best_step = step;
      }
    }
  }
  result.net = std::move(best);
  result.best_step = best_step;
  result.best_val_loss = best_val;
  return result;
}

bool weakly_monotone(const std::vector<double>& step_losses, std::size_t block) {
  const std::size_t half = step_losses.size() / 2;
  const std::size_t blocks = block ? half / block : 0;
  if (blocks < 2) return true;
  double prev_mean = 0, prev_se = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    double mean = 0, var = 0;
    for (std::size_t k = 0; k < block; ++k) mean += step_losses[b * block + k];
    mean /= static_cast<double>(block);
    for (std::size_t k = 0; k < block; ++k) {
      const double r = step_losses[b * block + k] - mean;
      var += r * r;
    }
    const double se = std::sqrt(var / static_cast<double>(block - 1) / static_cast<double>(block));
    if (b > 0 && mean > prev_mean + 3.0 * std::hypot(se, prev_se)) return false;
    prev_mean = mean;
    prev_se = se;
  }
  return true;
}

TimeGrid make_time_grid(std::size_t n, std::size_t d, std::size_t d_star, double beta,
                        const TimeWindow& window, const PiecewiseScaling& scaling) {
  if (n == 0 || d == 0 || d_star == 0) throw DomainError("make_time_grid: bad sizes");
  const double lo = window.t_lo, hi = window.t_hi;
  const auto p = static_cast<std::size_t>(std::floor(std::log2(hi / lo))) + 1;
  const double dd = static_cast<double>(d), ds = static_cast<double>(d_star);
  double t1 = std::pow(static_cast<double>(n), -2.0 * ds / (dd * (2.0 * beta + ds)));
  t1 = std::clamp(t1, std::nextafter(lo, hi), hi);
  std::vector<double> b{lo, t1};
  while (b.size() < p + 1 && b.back() < hi) b.push_back(std::min(2.0 * b.back(), hi));
  b.back() = hi;
  // Drop repeated boundaries.
  b.erase(std::unique(b.begin(), b.end()), b.end());
  TimeGrid grid;
  grid.boundaries = b;
  for (std::size_t j = 0; j + 1 < b.size(); ++j) {
    const double wl = scaling.wl_scale * std::pow(b[j + 1], -dd / 4.0);
    auto w = static_cast<std::size_t>(std::llround(wl / static_cast<double>(scaling.depth)));
    w = std::clamp(w, scaling.min_width, scaling.max_width);
    grid.shapes.push_back({w, scaling.depth, scaling.trunc_b});
  }
  return grid;
}

TimeGrid single_interval_grid(const TimeWindow& window, const IntervalShape& shape) {
  return TimeGrid{{window.t_lo, window.t_hi}, {shape}};
}

PiecewiseScore::PiecewiseScore(std::vector<double> boundaries, std::vector<ScoreNetwork> nets)
    : boundaries_(std::move(boundaries)), nets_(std::move(nets)) {
  if (nets_.empty() || boundaries_.size() != nets_.size() + 1)
    throw DomainError("PiecewiseScore: need P networks and P+1 boundaries");
  if (!std::is_sorted(boundaries_.begin(), boundaries_.end()) ||
      std::adjacent_find(boundaries_.begin(), boundaries_.end()) != boundaries_.end())
    throw DomainError("PiecewiseScore: boundaries must be strictly increasing");
}

std::size_t PiecewiseScore::interval_of(double t) const {
  const double lo = boundaries_.front(), hi = boundaries_.back();
  const double slack = 1e-12 * hi;
  if (t < lo - slack || t > hi + slack)
    throw DomainError("PiecewiseScore: t outside the trained window");
  const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  std::size_t j = it == boundaries_.begin() ? 0 : static_cast<std::size_t>(it - boundaries_.begin()) - 1;
  return std::min(j, nets_.size() - 1);
}

void PiecewiseScore::evaluate(std::span<const double> x, double t, std::span<double> out) const {
  nets_[interval_of(t)].forward(x, t, out);
}

ScoreFn PiecewiseScore::score_fn() const {
  return [self = *this](std::span<const double> x, double t, std::span<double> out) {
    self.evaluate(x, t, out);
  };
}

PiecewiseTrainResult train_piecewise(const TimeGrid& grid, const TrainPlan& plan,
                                     const NoiseSchedule& schedule, const Matrix& data) {
  if (grid.shapes.empty() || grid.boundaries.size() != grid.shapes.size() + 1)
    throw DomainError("train_piecewise: malformed time grid");
  std::vector<TrainResult> runs(grid.intervals());
  // Intervals are independent; each owns its slot.
  parallel_for(grid.intervals(), [&](std::size_t j) {
    TrainPlan p = plan;
    p.width = grid.shapes[j].width;
    p.depth = grid.shapes[j].depth;
    p.trunc_b = grid.shapes[j].trunc_b;
    p.window = TimeWindow(grid.boundaries[j], grid.boundaries[j + 1]);
    p.seed = j == 0 ? plan.seed : mix_seed(plan.seed, 1000 + j);
    runs[j] = train(p, schedule, data);
  });
  std::vector<ScoreNetwork> nets;
  for (const auto& r : runs) nets.push_back(r.net);
  return {PiecewiseScore(grid.boundaries, std::move(nets)), std::move(runs)};
}

}  // namespace scorelab
