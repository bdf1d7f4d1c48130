#include "scorelab/relu_net.hpp"

#include <algorithm>
#include <cmath>

namespace scorelab {
namespace {

constexpr std::size_t kChunk = 64;

// Per-thread scratch for one forward/backward pass.
struct Workspace {
  std::vector<std::vector<double>> pre;  // pre-activations per layer
  std::vector<std::vector<double>> act;  // layer inputs (act[0] = (x, t))
  std::vector<double> delta, next_delta;
};

}  // namespace

ScoreNetwork::ScoreNetwork(std::size_t dim, std::size_t width, std::size_t depth,
                           double trunc_b, NoiseSchedule schedule)
    : dim_(dim), width_(width), depth_(depth), trunc_b_(trunc_b),
      schedule_(std::move(schedule)) {
  if (dim_ == 0 || width_ == 0 || depth_ == 0)
    throw DomainError("ScoreNetwork: dim, width and depth must be positive");
  if (!(trunc_b_ >= 0)) throw DomainError("ScoreNetwork: truncation scale must be >= 0");
  std::size_t offset = 0;
  std::size_t in = dim_ + 1;
  for (std::size_t l = 0; l <= depth_; ++l) {
    const std::size_t out = l == depth_ ? dim_ : width_;
    layers_.push_back({in, out, offset});
    offset += layers_.back().size();
    in = out;
  }
  params_.assign(offset, 0.0);
}

std::span<double> ScoreNetwork::weights(std::size_t layer) {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.offset, s.weight_count()};
}

std::span<double> ScoreNetwork::biases(std::size_t layer) {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.offset + s.weight_count(), s.out};
}

double ScoreNetwork::threshold(double t) const {
  const double s = schedule_.sigma(t);
  // log(W L) is floored at 1 so tiny nets (W L < e) keep a usable range.
  return trunc_b_ / s * std::sqrt(std::max(1.0, std::log(static_cast<double>(width_ * depth_))));
}

bool ScoreNetwork::parameters_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

void ScoreNetwork::forward_impl(std::span<const double> x, double t, std::span<double> out,
                                std::vector<double>& a, std::vector<double>& b) const {
  a.assign(x.begin(), x.end());
  a.push_back(t);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerShape& s = layers_[l];
    const double* w = params_.data() + s.offset;
    const double* bias = w + s.weight_count();
    b.resize(s.out);
    const bool hidden = l + 1 < layers_.size();
    for (std::size_t r = 0; r < s.out; ++r) {
      double z = bias[r];
      const double* row = w + r * s.in;
      for (std::size_t c = 0; c < s.in; ++c) z += row[c] * a[c];
      b[r] = hidden ? std::max(z, 0.0) : z;
    }
    std::swap(a, b);
  }
  std::copy(a.begin(), a.end(), out.begin());
}

void ScoreNetwork::raw_forward(std::span<const double> x, double t, std::span<double> out) const {
  thread_local std::vector<double> a, b;
  forward_impl(x, t, out, a, b);
}

void ScoreNetwork::forward(std::span<const double> x, double t, std::span<double> out) const {
  raw_forward(x, t, out);
  const double rho = threshold(t);
  for (auto& v : out) {
    if (!std::isfinite(v)) throw NumericError("ScoreNetwork: non-finite output");
    v = std::clamp(v, -rho, rho);
  }
}

std::vector<double> ScoreNetwork::forward(std::span<const double> x, double t) const {
  std::vector<double> out(dim_);
  forward(x, t, out);
  return out;
}

ScoreFn ScoreNetwork::score_fn() const {
  if (!parameters_finite()) throw NumericError("ScoreNetwork: non-finite parameters");
  return [net = *this](std::span<const double> x, double t, std::span<double> out) {
    net.forward(x, t, out);
  };
}

ScoreNetwork init_network(std::size_t width, std::size_t depth, std::size_t input_dim,
                          std::size_t output_dim, double trunc_b, std::uint64_t seed,
                          NoiseSchedule schedule) {
  if (input_dim != output_dim + 1)
    throw DomainError("init_network: input_dim must equal output_dim + 1 (x and t)");
  ScoreNetwork net(output_dim, width, depth, trunc_b, std::move(schedule));
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(net.layers()[l].in)));
    for (auto& w : net.weights(l)) w = normal(rng);
  }
  return net;
}

namespace {

// Accumulates sum_i ||tau(f_i) - y_i||^2 and its gradient over [lo, hi).
double accumulate(const ScoreNetwork& net, const TrainingBatch& batch, std::size_t lo,
                  std::size_t hi, std::span<double> grad, Workspace& ws) {
  const auto& layers = net.layers();
  const auto params = net.params();
  const std::size_t d = net.dim();
  const std::size_t nl = layers.size();
  ws.pre.resize(nl);
  ws.act.resize(nl);
  double loss = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    ws.act[0].assign(batch.xs.begin() + i * d, batch.xs.begin() + (i + 1) * d);
    ws.act[0].push_back(batch.ts[i]);
    for (std::size_t l = 0; l < nl; ++l) {
      const LayerShape& s = layers[l];
      const double* w = params.data() + s.offset;
      const double* bias = w + s.weight_count();
      auto& z = ws.pre[l];
      z.resize(s.out);
      const auto& a = ws.act[l];
      for (std::size_t r = 0; r < s.out; ++r) {
        double acc = bias[r];
        const double* row = w + r * s.in;
        for (std::size_t c = 0; c < s.in; ++c) acc += row[c] * a[c];
        z[r] = acc;
      }
      if (l + 1 < nl) {
        auto& next = ws.act[l + 1];
        next.resize(s.out);
        for (std::size_t r = 0; r < s.out; ++r) next[r] = std::max(z[r], 0.0);
      }
    }
    const double rho = net.threshold(batch.ts[i]);
    const auto& f = ws.pre[nl - 1];
    ws.delta.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double y = batch.targets[i * d + k];
      const bool inside = std::abs(f[k]) < rho;
      const double out = inside ? f[k] : std::clamp(f[k], -rho, rho);
      const double r = out - y;
      loss += r * r;
      ws.delta[k] = inside ? 2.0 * r : 0.0;
    }
    for (std::size_t l = nl; l-- > 0;) {
      const LayerShape& s = layers[l];
      const double* w = params.data() + s.offset;
      double* gw = grad.data() + s.offset;
      double* gb = gw + s.weight_count();
      const auto& a = ws.act[l];
      for (std::size_t r = 0; r < s.out; ++r) {
        const double dr = ws.delta[r];
        if (dr == 0.0) continue;
        gb[r] += dr;
        double* grow = gw + r * s.in;
        for (std::size_t c = 0; c < s.in; ++c) grow[c] += dr * a[c];
      }
      if (l == 0) break;
      ws.next_delta.assign(s.in, 0.0);
      for (std::size_t r = 0; r < s.out; ++r) {
        const double dr = ws.delta[r];
        if (dr == 0.0) continue;
        const double* row = w + r * s.in;
        for (std::size_t c = 0; c < s.in; ++c) ws.next_delta[c] += row[c] * dr;
      }
      const auto& zprev = ws.pre[l - 1];
      for (std::size_t c = 0; c < s.in; ++c)
        if (!(zprev[c] > 0.0)) ws.next_delta[c] = 0.0;
      std::swap(ws.delta, ws.next_delta);
    }
  }
  return loss;
}

void check_batch(const ScoreNetwork& net, const TrainingBatch& batch) {
  if (batch.size() == 0) throw DomainError("backward: empty batch");
  if (batch.xs.size() != batch.size() * net.dim() ||
      batch.targets.size() != batch.size() * net.dim())
    throw DomainError("backward: batch shape mismatch");
}

}  // namespace

LossAndGradient backward(const ScoreNetwork& net, const TrainingBatch& batch) {
  check_batch(net, batch);
  const std::size_t n = batch.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const std::size_t p = net.parameter_count();
  std::vector<std::vector<double>> grads(chunks);
  std::vector<double> losses(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    thread_local Workspace ws;
    grads[c].assign(p, 0.0);
    losses[c] = accumulate(net, batch, c * kChunk, std::min(n, (c + 1) * kChunk), grads[c], ws);
  });
  LossAndGradient out;
  out.gradient.values.assign(p, 0.0);
  out.gradient.count = n;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t c = 0; c < chunks; ++c) {
    out.loss += losses[c];
    for (std::size_t k = 0; k < p; ++k) out.gradient.values[k] += grads[c][k];
  }
  out.loss *= inv;
  for (auto& g : out.gradient.values) g *= inv;
  return out;
}

double batch_loss(const ScoreNetwork& net, const TrainingBatch& batch) {
  check_batch(net, batch);
  const std::size_t d = net.dim();
  double total = 0;
  std::vector<double> out(d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    net.forward(batch.xs.subspan(i * d, d), batch.ts[i], out);
    for (std::size_t k = 0; k < d; ++k) {
      const double r = out[k] - batch.targets[i * d + k];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace scorelab
