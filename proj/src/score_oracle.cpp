#include "scorelab/score_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scorelab/quadrature.hpp"

namespace scorelab {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogFloor = std::log(DiffusedOracle::kDensityFloor);
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);

// Composite Gauss-Legendre over the part of [-1,1] where the kernel
// N(x; m y, sigma^2) is non-negligible; splits at 0 for Abs kinks.
QuadratureRule window_rule(double x, double m, double s, const OracleQuadSpec& spec) {
  const double c = x / m, r = spec.radius_sd * s / m;
  double lo = std::max(-1.0, c - r), hi = std::min(1.0, c + r);
  if (!(hi > lo)) {
    if (c > 0) {
      lo = std::max(-1.0, 1.0 - r);
      hi = 1.0;
    } else {
      lo = -1.0;
      hi = std::min(1.0, -1.0 + r);
    }
  }
  constexpr std::size_t kOrder = 16;
  const std::size_t panels = std::max<std::size_t>(1, spec.nodes_per_axis / kOrder);
  if (lo < 0 && hi > 0 && panels >= 2) {
    QuadratureRule left = composite_legendre(lo, 0.0, panels / 2, kOrder);
    QuadratureRule right = composite_legendre(0.0, hi, panels - panels / 2, kOrder);
    left.nodes.insert(left.nodes.end(), right.nodes.begin(), right.nodes.end());
    left.weights.insert(left.weights.end(), right.weights.begin(), right.weights.end());
    return left;
  }
  return composite_legendre(lo, hi, panels, kOrder);
}

// log of Phi(a) - Phi(b) for a > b, accurate in both tails.
double log_phi_diff(double a, double b) {
  const double r = 1.0 / std::sqrt(2.0);
  double diff;
  if (b >= 0)
    diff = 0.5 * (std::erfc(b * r) - std::erfc(a * r));
  else if (a <= 0)
    diff = 0.5 * (std::erfc(-a * r) - std::erfc(-b * r));
  else
    diff = 1.0 - 0.5 * std::erfc(a * r) - 0.5 * std::erfc(-b * r);
  return diff > 0 ? std::log(diff) : kNegInf;
}

}  // namespace

DiffusedOracle DiffusedOracle::uniform(std::size_t d, NoiseSchedule schedule) {
  if (d == 0) throw DomainError("DiffusedOracle: d must be positive");
  return DiffusedOracle(Method::ClosedFormUniform, d, std::move(schedule));
}

DiffusedOracle DiffusedOracle::gaussian_mixture(std::vector<MixtureComponent> mixture,
                                                NoiseSchedule schedule) {
  if (mixture.empty()) throw DomainError("DiffusedOracle: empty mixture");
  const std::size_t d = mixture.front().mean.size();
  double total = 0;
  for (const auto& c : mixture) {
    if (c.mean.size() != d || c.sd.size() != d)
      throw DomainError("DiffusedOracle: inconsistent mixture dimensions");
    if (!(c.weight > 0)) throw DomainError("DiffusedOracle: mixture weights must be positive");
    total += c.weight;
  }
  for (auto& c : mixture) c.weight /= total;
  DiffusedOracle o(Method::ClosedFormGaussianMixture, d, std::move(schedule));
  o.mixture_ = std::move(mixture);
  return o;
}

DiffusedOracle DiffusedOracle::quadrature(InteractionDensity density, NoiseSchedule schedule,
                                          OracleQuadSpec spec) {
  const std::size_t d = density.dim();
  bool separable = true;
  for (const auto& J : density.cliques().cliques()) separable = separable && J.size() == 1;
  if (!separable && d > 3)
    throw UnsupportedError("DiffusedOracle: quadrature needs d <= 3 for non-product densities");
  DiffusedOracle o(Method::Quadrature, d, std::move(schedule));
  o.quad_ = spec;
  o.separable_ = separable;
  if (separable) {
    o.axis_component_.assign(d, -1);
    o.axis_log_z_.assign(d, std::log(2.0));
    for (std::size_t c = 0; c < density.cliques().size(); ++c)
      o.axis_component_[density.cliques().cliques()[c][0]] = static_cast<int>(c);
    const QuadratureRule rule = composite_legendre(-1.0, 1.0, 8, 16);
    for (std::size_t l = 0; l < d; ++l) {
      if (o.axis_component_[l] < 0) continue;
      const auto& f = density.components()[o.axis_component_[l]];
      double z = 0;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double y = rule.nodes[k];
        z += rule.weights[k] * std::exp(f(std::span<const double>(&y, 1)));
      }
      o.axis_log_z_[l] = std::log(z);
    }
  }
  o.density_ = std::move(density);
  return o;
}

double DiffusedOracle::initial_density(std::span<const double> x) const {
  switch (method_) {
    case Method::ClosedFormUniform: {
      for (double v : x)
        if (!(v >= -1 && v <= 1)) return 0.0;
      return std::pow(0.5, static_cast<double>(d_));
    }
    case Method::ClosedFormGaussianMixture: {
      double p = 0;
      for (const auto& c : mixture_) {
        double q = c.weight;
        for (std::size_t l = 0; l < d_; ++l) q *= normal_pdf((x[l] - c.mean[l]) / c.sd[l]) / c.sd[l];
        p += q;
      }
      return p;
    }
    case Method::Quadrature:
      return density_->density(x);
  }
  return 0.0;
}

Matrix DiffusedOracle::sample_initial(std::size_t n, std::uint64_t seed) const {
  switch (method_) {
    case Method::ClosedFormUniform: {
      Matrix out(n, d_);
      Rng rng(seed);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      for (auto& v : out.data) v = unif(rng);
      return out;
    }
    case Method::ClosedFormGaussianMixture: {
      Matrix out(n, d_);
      Rng rng(seed);
      std::vector<double> w;
      for (const auto& c : mixture_) w.push_back(c.weight);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      std::normal_distribution<double> normal;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& c = mixture_[pick(rng)];
        for (std::size_t l = 0; l < d_; ++l) out(i, l) = c.mean[l] + c.sd[l] * normal(rng);
      }
      return out;
    }
    case Method::Quadrature:
      return sample(*density_, n, seed);
  }
  return {};
}

double DiffusedOracle::evaluate_uniform(std::span<const double> x, double t,
                                        std::span<double> grad) const {
  const auto [m, s] = m_sigma(schedule_, t);
  double logp = 0;
  for (std::size_t l = 0; l < d_; ++l) {
    const double a = (x[l] + m) / s, b = (x[l] - m) / s;
    const double ld = log_phi_diff(a, b);
    logp += ld - std::log(2.0 * m);
    if (!grad.empty()) {
      // (phi(a) - phi(b)) / (sigma (Phi(a) - Phi(b))), in log space per term.
      const double la = -0.5 * a * a - kLogSqrt2Pi - ld;
      const double lb = -0.5 * b * b - kLogSqrt2Pi - ld;
      grad[l] = (std::exp(la) - std::exp(lb)) / s;
    }
  }
  return logp;
}

double DiffusedOracle::evaluate_mixture(std::span<const double> x, double t,
                                        std::span<double> grad) const {
  const auto [m, s] = m_sigma(schedule_, t);
  std::vector<double> logw(mixture_.size());
  double mx = kNegInf;
  for (std::size_t k = 0; k < mixture_.size(); ++k) {
    const auto& c = mixture_[k];
    double lw = std::log(c.weight);
    for (std::size_t l = 0; l < d_; ++l) {
      const double v = m * m * c.sd[l] * c.sd[l] + s * s;
      const double r = x[l] - m * c.mean[l];
      lw += -0.5 * r * r / v - 0.5 * std::log(v) - kLogSqrt2Pi;
    }
    logw[k] = lw;
    mx = std::max(mx, lw);
  }
  double total = 0;
  for (double lw : logw) total += std::exp(lw - mx);
  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = 0; k < mixture_.size(); ++k) {
      const double r = std::exp(logw[k] - mx) / total;
      const auto& c = mixture_[k];
      for (std::size_t l = 0; l < d_; ++l) {
        const double v = m * m * c.sd[l] * c.sd[l] + s * s;
        grad[l] -= r * (x[l] - m * c.mean[l]) / v;
      }
    }
  }
  return mx + std::log(total);
}

double DiffusedOracle::evaluate_quadrature(std::span<const double> x, double t,
                                           std::span<double> grad) const {
  const auto [m, s] = m_sigma(schedule_, t);
  const double inv_s2 = 1.0 / (s * s);
  if (separable_) {
    double logp = 0;
    for (std::size_t l = 0; l < d_; ++l) {
      const QuadratureRule rule = window_rule(x[l], m, s, quad_);
      const int comp = axis_component_[l];
      std::vector<double> e(rule.size());
      double mx = kNegInf;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double y = rule.nodes[k];
        const double r = x[l] - m * y;
        e[k] = -0.5 * r * r * inv_s2;
        if (comp >= 0) e[k] += density_->components()[comp](std::span<const double>(&y, 1));
        mx = std::max(mx, e[k]);
      }
      double sum = 0, gsum = 0;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double w = rule.weights[k] * std::exp(e[k] - mx);
        sum += w;
        gsum += w * (-(x[l] - m * rule.nodes[k]) * inv_s2);
      }
      logp += std::log(sum) + mx - axis_log_z_[l] - std::log(s) - kLogSqrt2Pi;
      if (!grad.empty()) grad[l] = gsum / sum;
    }
    return logp;
  }

  std::vector<QuadratureRule> rules;
  rules.reserve(d_);
  for (std::size_t l = 0; l < d_; ++l) rules.push_back(window_rule(x[l], m, s, quad_));
  std::size_t total = 1;
  for (const auto& r : rules) total *= r.size();
  std::vector<double> e(total), w(total);
  std::vector<std::size_t> idx(d_, 0);
  std::vector<double> y(d_);
  double mx = kNegInf;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double wt = 1.0, ex = 0.0;
    for (std::size_t l = d_; l-- > 0;) {
      idx[l] = rem % rules[l].size();
      rem /= rules[l].size();
      y[l] = rules[l].nodes[idx[l]];
      wt *= rules[l].weights[idx[l]];
      const double r = x[l] - m * y[l];
      ex -= 0.5 * r * r * inv_s2;
    }
    ex += density_->log_unnormalized(y);
    e[flat] = ex;
    w[flat] = wt;
    mx = std::max(mx, ex);
  }
  double sum = 0;
  std::vector<double> gsum(d_, 0.0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    const double wt = w[flat] * std::exp(e[flat] - mx);
    sum += wt;
    if (!grad.empty()) {
      std::size_t rem = flat;
      for (std::size_t l = d_; l-- > 0;) {
        const std::size_t k = rem % rules[l].size();
        rem /= rules[l].size();
        gsum[l] += wt * (-(x[l] - m * rules[l].nodes[k]) * inv_s2);
      }
    }
  }
  if (!grad.empty())
    for (std::size_t l = 0; l < d_; ++l) grad[l] = gsum[l] / sum;
  return std::log(sum) + mx - density_->log_z() -
         static_cast<double>(d_) * (std::log(s) + kLogSqrt2Pi);
}

double DiffusedOracle::evaluate(std::span<const double> x, double t,
                                std::span<double> grad) const {
  if (x.size() != d_) throw DomainError("DiffusedOracle: dimension mismatch");
  if (!(t > 0)) throw DomainError("DiffusedOracle: t must be positive");
  switch (method_) {
    case Method::ClosedFormUniform:
      return evaluate_uniform(x, t, grad);
    case Method::ClosedFormGaussianMixture:
      return evaluate_mixture(x, t, grad);
    case Method::Quadrature:
      return evaluate_quadrature(x, t, grad);
  }
  return kNegInf;
}

double DiffusedOracle::log_density(std::span<const double> x, double t) const {
  if (t == 0) return std::log(initial_density(x));
  return evaluate(x, t, {});
}

double DiffusedOracle::density(std::span<const double> x, double t) const {
  if (t == 0) return initial_density(x);
  return std::exp(evaluate(x, t, {}));
}

void DiffusedOracle::score(std::span<const double> x, double t, std::span<double> out) const {
  const double logp = evaluate(x, t, out);
  if (!(logp >= kLogFloor)) throw RegionError("DiffusedOracle: p_t(x) below evaluation floor");
  for (double v : out)
    if (!std::isfinite(v)) throw RegionError("DiffusedOracle: non-finite score");
}

std::vector<double> DiffusedOracle::score(std::span<const double> x, double t) const {
  std::vector<double> out(d_);
  score(x, t, out);
  return out;
}

ScoreFn DiffusedOracle::score_fn() const {
  return [self = *this](std::span<const double> x, double t, std::span<double> out) {
    self.score(x, t, out);
  };
}

ErrorEstimate score_l2_error(const ScoreFn& candidate, const DiffusedOracle& oracle, double t,
                             std::size_t mc_n, Rng& rng) {
  if (mc_n < 2) throw DomainError("score_l2_error: need mc_n >= 2");
  const std::size_t d = oracle.dim();
  const Matrix x0 = oracle.sample_initial(mc_n, rng());
  const auto [m, s] = m_sigma(oracle.schedule(), t);
  std::normal_distribution<double> normal;
  std::vector<double> x(d), a(d), b(d);
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < mc_n; ++i) {
    for (std::size_t l = 0; l < d; ++l) x[l] = m * x0(i, l) + s * normal(rng);
    candidate(x, t, a);
    oracle.score(x, t, b);
    double e = 0;
    for (std::size_t l = 0; l < d; ++l) e += (a[l] - b[l]) * (a[l] - b[l]);
    sum += e;
    sum2 += e * e;
  }
  const double n = static_cast<double>(mc_n);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 / n - mean * mean) * n / (n - 1));
  ErrorEstimate out;
  out.value = std::sqrt(mean);
  out.std_error = mean > 0 ? std::sqrt(var / n) / (2.0 * out.value) : 0.0;
  return out;
}

}  // namespace scorelab
