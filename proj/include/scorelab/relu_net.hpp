#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/noise_schedule.hpp"

namespace scorelab {

/// Shape of one affine map T(x) = A x + b. Parameters live in the owning
/// network's flat array: A (out x in, row-major) followed by b.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;
  std::size_t weight_count() const { return in * out; }
  std::size_t size() const { return in * out + out; }
  bool operator==(const LayerShape&) const = default;
};

/// Truncated fully connected ReLU network (x, t) -> R^d.
///
/// `depth` hidden layers of `width` units: shapes (d+1 -> W), (W -> W) x (L-1),
/// (W -> d). The output passes coordinate-wise through
/// tau(z; rho) = sign(z) min(|z|, rho) with rho = B / sigma_t * sqrt(max(1, log(W L))).
class ScoreNetwork {
 public:
  ScoreNetwork() = default;
  ScoreNetwork(std::size_t dim, std::size_t width, std::size_t depth, double trunc_b,
               NoiseSchedule schedule);

  std::size_t dim() const { return dim_; }
  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  double trunc_b() const { return trunc_b_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const std::vector<LayerShape>& layers() const { return layers_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> weights(std::size_t layer);
  std::span<double> biases(std::size_t layer);

  /// Truncation threshold at time t.
  double threshold(double t) const;

  /// Untruncated network output.
  void raw_forward(std::span<const double> x, double t, std::span<double> out) const;
  /// Truncated output; throws NumericError on non-finite parameters.
  void forward(std::span<const double> x, double t, std::span<double> out) const;
  std::vector<double> forward(std::span<const double> x, double t) const;

  /// Copy of this network as a score field.
  ScoreFn score_fn() const;

  bool parameters_finite() const;

  bool operator==(const ScoreNetwork&) const = default;

 private:
  void forward_impl(std::span<const double> x, double t, std::span<double> out,
                    std::vector<double>& a, std::vector<double>& b) const;

  std::size_t dim_ = 0;
  std::size_t width_ = 0;
  std::size_t depth_ = 0;
  double trunc_b_ = 10.0;
  NoiseSchedule schedule_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

/// He-style initialization: weights N(0, 2 / fan_in), zero biases.
ScoreNetwork init_network(std::size_t width, std::size_t depth, std::size_t input_dim,
                          std::size_t output_dim, double trunc_b, std::uint64_t seed,
                          NoiseSchedule schedule = NoiseSchedule::constant(1.0));

/// Gradient of the mean squared loss, flat and aligned with ScoreNetwork::params().
struct Gradient {
  std::vector<double> values;
  std::size_t count = 0;  // samples accumulated
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

/// Batch of regression triples (x_i, t_i, target_i); xs and targets are
/// row-major batch x d.
struct TrainingBatch {
  std::span<const double> xs;
  std::span<const double> ts;
  std::span<const double> targets;
  std::size_t size() const { return ts.size(); }
};

/// loss = mean_i ||forward(x_i, t_i) - target_i||^2 and its exact gradient.
/// Truncation acts as identity where |z| < rho and as a constant outside;
/// ReLU'(0) = 0. Chunked reduction in fixed order, so results do not depend
/// on the worker count.
LossAndGradient backward(const ScoreNetwork& net, const TrainingBatch& batch);

/// Mean loss only.
double batch_loss(const ScoreNetwork& net, const TrainingBatch& batch);

}  // namespace scorelab
