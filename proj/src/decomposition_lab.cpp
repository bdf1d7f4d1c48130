#include "scorelab/decomposition_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "scorelab/quadrature.hpp"

namespace scorelab {
namespace {

constexpr double kWindow = 10.0;  // Gaussian window half-width in standard deviations

std::vector<std::size_t> members(Subset a, std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k)
    if (a >> k & 1u) out.push_back(k);
  return out;
}

std::vector<std::size_t> active_coordinates(const ProductDensitySpec& spec, Subset a) {
  std::vector<std::size_t> coords;
  for (std::size_t k : members(a, spec.size())) {
    coords.push_back(spec.pairs()[k].first);
    coords.push_back(spec.pairs()[k].second);
  }
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

// sum over the tensor grid of `rule` on the active coordinates of
// weight * fn(y); inactive coordinates of y stay 0.
double tensor_integrate(std::size_t d, const std::vector<std::size_t>& active,
                        const QuadratureRule& rule,
                        const std::function<double(std::span<const double>)>& fn) {
  std::vector<double> y(d, 0.0);
  if (active.empty()) return fn(y);
  const std::size_t q = rule.size();
  std::size_t total = 1;
  for (std::size_t k = 0; k < active.size(); ++k) total *= q;
  double acc = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t r = flat;
    double w = 1.0;
    for (std::size_t c : active) {
      const std::size_t j = r % q;
      r /= q;
      y[c] = rule.nodes[j];
      w *= rule.weights[j];
    }
    acc += w * fn(y);
  }
  return acc;
}

std::size_t panels_for(std::size_t active) {
  return active <= 2 ? 8 : active == 3 ? 4 : 2;
}

void check_region(std::span<const double> x, double m, std::size_t d) {
  if (x.size() != d) throw DomainError("decomposition: point has wrong dimension");
  for (double v : x)
    if (std::abs(v) > m * (1.0 + 1e-12))
      throw DomainError("decomposition: x outside the region [-m_t, m_t]^d");
}

double abs_moment(int p) {
  return std::pow(2.0, p / 2.0) * std::tgamma((p + 1) / 2.0) / std::sqrt(M_PI);
}

template <class F>
double max_over(const std::vector<ProbeRow>& rows, F f) {
  double out = 0;
  for (const auto& r : rows) out = std::max(out, f(r));
  return out;
}

}  // namespace

ProductDensitySpec::ProductDensitySpec(std::string name, std::size_t d,
                                       std::vector<IndexPair> pairs,
                                       std::vector<SmoothComponent> components)
    : name_(std::move(name)), d_(d), pairs_(std::move(pairs)), components_(std::move(components)) {
  if (d_ == 0) throw DomainError("ProductDensitySpec: d must be positive");
  if (pairs_.size() != components_.size())
    throw DomainError("ProductDensitySpec: one component per pair");
  if (pairs_.size() > 16) throw UnsupportedError("ProductDensitySpec: at most 16 pairs");
  for (auto& [i, j] : pairs_) {
    if (i > j) std::swap(i, j);
    if (j >= d_) throw DomainError("ProductDensitySpec: pair index out of range");
  }
  for (std::size_t a = 0; a < pairs_.size(); ++a)
    for (std::size_t b = a + 1; b < pairs_.size(); ++b)
      if (pairs_[a] == pairs_[b]) throw DomainError("ProductDensitySpec: duplicate pair");
  for (const auto& c : components_)
    if (c.arity() != 2) throw DomainError("ProductDensitySpec: components take two arguments");
}

double ProductDensitySpec::factor(std::size_t k, std::span<const double> z) const {
  const double u[2] = {z[pairs_[k].first], z[pairs_[k].second]};
  return components_[k](u);
}

std::pair<double, double> ProductDensitySpec::gradient(std::size_t k,
                                                       std::span<const double> z) const {
  const double u[2] = {z[pairs_[k].first], z[pairs_[k].second]};
  return {components_[k].partial(u, 0), components_[k].partial(u, 1)};
}

std::pair<double, double> ProductDensitySpec::lipschitz(std::size_t k) const {
  const auto b = components_[k].partial_sup_bounds();
  return {b[0], b[1]};
}

double ProductDensitySpec::min_on_cube() const {
  double lo = INFINITY;
  for (const auto& c : components_)
    for (int a = 0; a <= 32; ++a)
      for (int b = 0; b <= 32; ++b) {
        const double u[2] = {-1.0 + a / 16.0, -1.0 + b / 16.0};
        lo = std::min(lo, c(u));
      }
  return lo;
}

double ProductDensitySpec::product(std::span<const double> z) const {
  double p = 1.0;
  for (std::size_t k = 0; k < size(); ++k) p *= factor(k, z);
  return p;
}

std::string subset_label(const ProductDensitySpec& spec, Subset a) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (std::size_t k : members(a, spec.size())) {
    if (!first) os << ' ';
    os << '(' << spec.pairs()[k].first << ',' << spec.pairs()[k].second << ')';
    first = false;
  }
  os << '}';
  return os.str();
}

double eval_G(Subset a, std::span<const double> x, double t, const ProductDensitySpec& spec,
              const NoiseSchedule& schedule) {
  const auto [m, sigma] = m_sigma(schedule, t);
  check_region(x, m, spec.dim());
  std::vector<double> z(x.begin(), x.end());
  for (auto& v : z) v /= m;
  double g = 1.0;
  for (std::size_t k : members(a, spec.size())) g *= spec.factor(k, z);
  return g;
}

namespace {

double delta_with(Subset a, std::span<const double> x, double t, const ProductDensitySpec& spec,
                  const NoiseSchedule& schedule, std::size_t nodes) {
  const auto [m, sigma] = m_sigma(schedule, t);
  check_region(x, m, spec.dim());
  const auto ks = members(a, spec.size());
  if (ks.empty()) return 1.0;
  const std::size_t d = spec.dim();
  std::vector<double> z0(x.begin(), x.end());
  for (auto& v : z0) v /= m;
  std::vector<double> base;
  for (std::size_t k : ks) base.push_back(spec.factor(k, z0));
  std::vector<double> z(d);
  return tensor_integrate(d, active_coordinates(spec, a), gauss_hermite_normal(nodes),
                          [&](std::span<const double> y) {
                            for (std::size_t l = 0; l < d; ++l) z[l] = (x[l] + sigma * y[l]) / m;
                            double p = 1.0;
                            for (std::size_t r = 0; r < ks.size(); ++r)
                              p *= spec.factor(ks[r], z) - base[r];
                            return p;
                          });
}

}  // namespace

double eval_Delta(Subset a, std::span<const double> x, double t, const ProductDensitySpec& spec,
                  const NoiseSchedule& schedule, const IntegrationSpec& integration) {
  const double v = delta_with(a, x, t, spec, schedule, integration.hermite_nodes);
  if (integration.check_nodes > 0) {
    const double w = delta_with(a, x, t, spec, schedule, integration.check_nodes);
    if (!(std::abs(v - w) <= integration.tol))
      throw NumericError("eval_Delta: Gauss-Hermite results disagree beyond tolerance");
  }
  return v;
}

double eval_p_tB(Subset b, std::span<const double> x, double t, const ProductDensitySpec& spec,
                 const NoiseSchedule& schedule) {
  const auto [m, sigma] = m_sigma(schedule, t);
  check_region(x, m, spec.dim());
  const auto ks = members(b, spec.size());
  if (ks.empty()) return 1.0;
  const std::size_t d = spec.dim();
  const auto active = active_coordinates(spec, b);
  const QuadratureRule rule = composite_legendre(-kWindow, kWindow, panels_for(active.size()), 16);
  std::vector<double> z(d);
  return tensor_integrate(d, active, rule, [&](std::span<const double> y) {
    double k = 1.0;
    for (std::size_t c : active) k *= normal_pdf(y[c]);
    for (std::size_t l = 0; l < d; ++l) z[l] = (x[l] + sigma * y[l]) / m;
    double p = 1.0;
    for (std::size_t r : ks) p *= spec.factor(r, z);
    return k * p;
  });
}

double direct_p_t(std::span<const double> x, double t, const ProductDensitySpec& spec,
                  const NoiseSchedule& schedule) {
  const auto [m, sigma] = m_sigma(schedule, t);
  const std::size_t d = spec.dim();
  if (x.size() != d) throw DomainError("direct_p_t: point has wrong dimension");
  if (d > 3) throw UnsupportedError("direct_p_t: d > 3 is not supported");
  // Integrate over y in the box where N(x; m y, sigma^2) is non-negligible.
  std::vector<QuadratureRule> rules;
  for (std::size_t l = 0; l < d; ++l)
    rules.push_back(composite_legendre((x[l] - kWindow * sigma) / m, (x[l] + kWindow * sigma) / m,
                                       panels_for(d), 16));
  const std::size_t q = rules[0].size();
  std::size_t total = 1;
  for (std::size_t l = 0; l < d; ++l) total *= q;
  std::vector<double> y(d);
  double acc = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t r = flat;
    double w = 1.0;
    for (std::size_t l = 0; l < d; ++l) {
      const std::size_t j = r % q;
      r /= q;
      y[l] = rules[l].nodes[j];
      w *= rules[l].weights[j] * normal_pdf((x[l] - m * y[l]) / sigma) / sigma;
    }
    acc += w * spec.product(y);
  }
  return acc;
}

double decomposition_sum(std::span<const double> x, double t, const ProductDensitySpec& spec,
                         const NoiseSchedule& schedule, const IntegrationSpec& integration) {
  const auto [m, sigma] = m_sigma(schedule, t);
  const Subset all = (1u << spec.size()) - 1;
  double acc = 0;
  for (Subset a = 0; a <= all; ++a) {
    const double delta = eval_Delta(a, x, t, spec, schedule, integration);
    acc += eval_G(all & ~a, x, t, spec, schedule) * delta;
  }
  return acc * std::pow(m, -static_cast<double>(spec.dim()));
}

double taylor_residual(const ProductDensitySpec& spec, std::size_t k,
                       std::span<const double> x_tilde, double sigma_tilde,
                       std::span<const double> y) {
  const std::size_t d = spec.dim();
  std::vector<double> z(d);
  for (std::size_t l = 0; l < d; ++l) z[l] = x_tilde[l] + sigma_tilde * y[l];
  const auto [i, j] = spec.pairs()[k];
  const auto [d1, d2] = spec.gradient(k, x_tilde);
  return (spec.factor(k, z) - spec.factor(k, x_tilde)) / sigma_tilde - y[i] * d1 - y[j] * d2;
}

double taylor_refactor_sum(Subset a, std::span<const double> x, double t,
                           const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                           const IntegrationSpec& integration) {
  const auto [m, sigma] = m_sigma(schedule, t);
  check_region(x, m, spec.dim());
  const auto ks = members(a, spec.size());
  if (ks.empty()) return 1.0;
  const std::size_t d = spec.dim();
  const double st = sigma / m;
  std::vector<double> xt(x.begin(), x.end());
  for (auto& v : xt) v /= m;
  std::vector<std::pair<double, double>> grads;
  for (std::size_t k : ks) grads.push_back(spec.gradient(k, xt));
  const auto active = active_coordinates(spec, a);
  const QuadratureRule& rule = gauss_hermite_normal(integration.hermite_nodes);

  // Each pair takes one role: 0 -> in C (Delta1), 1 -> in B \ C (y_j D2),
  // 2 -> in A \ B (y_i D1). The 3^{|A|} role vectors enumerate C <= B <= A.
  std::size_t combos = 1;
  for (std::size_t r = 0; r < ks.size(); ++r) combos *= 3;
  double acc = 0;
  std::vector<int> role(ks.size());
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rem = c;
    double coef = 1.0;
    for (std::size_t r = 0; r < ks.size(); ++r) {
      role[r] = static_cast<int>(rem % 3);
      rem /= 3;
      if (role[r] == 1) coef *= grads[r].second;
      if (role[r] == 2) coef *= grads[r].first;
    }
    if (coef == 0.0) continue;
    const double integral = tensor_integrate(d, active, rule, [&](std::span<const double> y) {
      double p = 1.0;
      for (std::size_t r = 0; r < ks.size(); ++r) {
        const auto [i, j] = spec.pairs()[ks[r]];
        if (role[r] == 0) p *= taylor_residual(spec, ks[r], xt, st, y);
        if (role[r] == 1) p *= y[j];
        if (role[r] == 2) p *= y[i];
      }
      return p;
    });
    acc += coef * integral;
  }
  return std::pow(st, static_cast<double>(ks.size())) * acc;
}

double delta_refactor_sum(Subset a, std::span<const double> x, double t,
                          const ProductDensitySpec& spec, const NoiseSchedule& schedule) {
  double acc = 0;
  // Enumerate B subset A via the standard submask walk.
  for (Subset b = a;; b = (b - 1) & a) {
    const double sign = subset_size(a & ~b) % 2 ? -1.0 : 1.0;
    acc += sign * eval_G(a & ~b, x, t, spec, schedule) * eval_p_tB(b, x, t, spec, schedule);
    if (b == 0) break;
  }
  return acc;
}

std::vector<double> default_sigmas() { return {0.001, 0.003, 0.01, 0.03, 0.1, 0.3}; }

std::vector<Probe> make_probes(std::size_t d, const std::vector<double>& fractions,
                               const std::vector<double>& sigmas, const NoiseSchedule& schedule) {
  if (fractions.empty()) throw DomainError("make_probes: no fractions");
  for (double f : fractions)
    if (std::abs(f) > 1.0) throw DomainError("make_probes: fractions must lie in [-1, 1]");
  std::vector<Probe> out;
  std::size_t total = 1;
  for (std::size_t l = 0; l < d; ++l) total *= fractions.size();
  for (double s : sigmas) {
    const double t = schedule.time_for_sigma(s);
    const double m = schedule.mean_decay(t);
    for (std::size_t flat = 0; flat < total; ++flat) {
      Probe p;
      p.sigma = s;
      p.t = t;
      std::size_t r = flat;
      for (std::size_t l = 0; l < d; ++l) {
        p.x.push_back(fractions[r % fractions.size()] * m);
        r /= fractions.size();
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

IdentityResult verify_identity(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                               const std::vector<Probe>& probes,
                               const IntegrationSpec& integration) {
  if (spec.dim() > 3 || spec.size() > 3)
    throw UnsupportedError("verify_identity: requires d <= 3 and |S| <= 3");
  IdentityResult result;
  result.probes = probes.size();
  result.rows.resize(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) {
    const Probe& p = probes[i];
    const double lhs = direct_p_t(p.x, p.t, spec, schedule);
    const double rhs = decomposition_sum(p.x, p.t, spec, schedule, integration);
    result.rows[i] = {"identity", spec.name(), subset_label(spec, (1u << spec.size()) - 1),
                      p.x, p.sigma, lhs, rhs, std::abs(rhs - lhs) / std::abs(lhs)};
  });
  result.max_relative_residual = max_over(result.rows, [](const ProbeRow& r) { return r.residual; });
  return result;
}

SmallnessResult verify_smallness(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                 Subset a, const std::vector<Probe>& probes,
                                 const IntegrationSpec& integration) {
  const auto ks = members(a, spec.size());
  if (ks.empty()) throw DomainError("verify_smallness: subset must be nonempty");
  const int size = static_cast<int>(ks.size());
  double lip = 1.0;
  for (std::size_t k : ks) {
    const auto [li, lj] = spec.lipschitz(k);
    lip *= li + lj;
  }
  const double moment = abs_moment(size);

  SmallnessResult result;
  result.subset = a;
  std::vector<double> moments(probes.size()), certs(probes.size());
  result.rows.resize(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) {
    const Probe& p = probes[i];
    const auto [m, sigma] = m_sigma(schedule, p.t);
    const double delta = eval_Delta(a, p.x, p.t, spec, schedule, integration);
    // int |prod Delta| K by the same rule.
    std::vector<double> z0(p.x), z(p.x.size());
    for (auto& v : z0) v /= m;
    // |.| puts kinks in the integrand; composite Gauss-Legendre handles them
    // far better than Gauss-Hermite.
    const auto active = active_coordinates(spec, a);
    const QuadratureRule rule =
        composite_legendre(-kWindow, kWindow, 2 * panels_for(active.size()), 16);
    const double am =
        tensor_integrate(spec.dim(), active, rule, [&](std::span<const double> y) {
          double k = 1.0;
          for (std::size_t c : active) k *= normal_pdf(y[c]);
          for (std::size_t l = 0; l < z.size(); ++l) z[l] = (p.x[l] + sigma * y[l]) / m;
          double prod = 1.0;
          for (std::size_t j : ks) prod *= spec.factor(j, z) - spec.factor(j, z0);
          return k * std::abs(prod);
        });
    const double scale = std::pow(sigma, size);
    moments[i] = am / scale;
    certs[i] = lip * moment / std::pow(m, size);
    result.rows[i] = {"smallness", spec.name(), subset_label(spec, a), p.x, p.sigma,
                      delta, am, std::abs(delta) / scale};
  });

  std::vector<double> sigmas;
  for (const auto& p : probes) sigmas.push_back(p.sigma);
  std::sort(sigmas.begin(), sigmas.end());
  sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());
  result.within_certificate = true;
  for (double s : sigmas) {
    SmallnessLevel level;
    level.sigma = s;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (probes[i].sigma != s) continue;
      level.max_abs_delta = std::max(level.max_abs_delta, std::abs(result.rows[i].lhs));
      level.max_ratio = std::max(level.max_ratio, result.rows[i].residual);
      level.max_abs_moment = std::max(level.max_abs_moment, moments[i]);
      result.certificate = std::max(result.certificate, certs[i]);
      result.max_moment_ratio = std::max(result.max_moment_ratio, moments[i] / certs[i]);
      if (moments[i] > certs[i] * (1.0 + 1e-3)) result.within_certificate = false;
    }
    result.fitted_constant = std::max(result.fitted_constant, level.max_ratio);
    result.levels.push_back(level);
  }
  std::vector<double> lx, ly;
  for (const auto& level : result.levels)
    if (level.sigma >= 1e-3 * (1 - 1e-9) && level.sigma <= 1e-1 * (1 + 1e-9) &&
        level.max_abs_delta > 0) {
      lx.push_back(std::log(level.sigma));
      ly.push_back(std::log(level.max_abs_delta));
    }
  if (lx.size() >= 2) {
    const LineFit fit = fit_line(lx, ly);
    result.slope = fit.slope;
    result.slope_se = fit.slope_se;
  }
  return result;
}

RefactorResult verify_delta_refactor(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                     Subset a, const std::vector<Probe>& probes,
                                     const IntegrationSpec& integration) {
  if (spec.dim() > 3 || spec.size() > 3)
    throw UnsupportedError("verify_delta_refactor: requires d <= 3 and |S| <= 3");
  RefactorResult result;
  result.rows.resize(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) {
    const Probe& p = probes[i];
    const double lhs = eval_Delta(a, p.x, p.t, spec, schedule, integration);
    const double rhs = delta_refactor_sum(a, p.x, p.t, spec, schedule);
    result.rows[i] = {"delta-refactor", spec.name(), subset_label(spec, a), p.x, p.sigma,
                      lhs, rhs, std::abs(lhs - rhs)};
  });
  result.max_residual = max_over(result.rows, [](const ProbeRow& r) { return r.residual; });
  return result;
}

RefactorResult verify_taylor_refactor(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                      Subset a, const std::vector<Probe>& probes,
                                      const IntegrationSpec& integration) {
  const auto ks = members(a, spec.size());
  if (ks.empty() || ks.size() > 2)
    throw UnsupportedError("verify_taylor_refactor: requires 1 <= |A| <= 2");
  if (spec.dim() < 2 || spec.dim() > 3)
    throw UnsupportedError("verify_taylor_refactor: requires d = 2 or 3");
  RefactorResult result;
  result.rows.resize(probes.size());
  std::vector<double> second(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) {
    const Probe& p = probes[i];
    const auto [m, sigma] = m_sigma(schedule, p.t);
    const double lhs = eval_Delta(a, p.x, p.t, spec, schedule, integration);
    const double rhs = taylor_refactor_sum(a, p.x, p.t, spec, schedule, integration);
    result.rows[i] = {"taylor-refactor", spec.name(), subset_label(spec, a), p.x, p.sigma,
                      lhs, rhs, std::abs(lhs - rhs)};
    std::vector<double> xt(p.x);
    for (auto& v : xt) v /= m;
    second[i] = std::abs(tensor_integrate(
        spec.dim(), active_coordinates(spec, a), gauss_hermite_normal(integration.hermite_nodes),
        [&](std::span<const double> y) {
          double prod = 1.0;
          for (std::size_t k : ks) prod *= taylor_residual(spec, k, xt, sigma / m, y);
          return prod;
        }));
  });
  result.max_residual = max_over(result.rows, [](const ProbeRow& r) { return r.residual; });
  std::vector<double> sigmas;
  for (const auto& p : probes) sigmas.push_back(p.sigma);
  std::sort(sigmas.begin(), sigmas.end());
  sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());
  for (double s : sigmas) {
    double worst = 0;
    for (std::size_t i = 0; i < probes.size(); ++i)
      if (probes[i].sigma == s) worst = std::max(worst, second[i]);
    result.residual_by_sigma.emplace_back(s, worst);
  }
  return result;
}

namespace {

Factor cosf(int k) { return {FactorKind::Cosine, k}; }
Factor mono(int p) { return {FactorKind::Monomial, p}; }
Factor absf() { return {FactorKind::Abs, 1}; }

SmoothComponent comp(std::vector<SeriesTerm> terms) { return SmoothComponent(2, std::move(terms)); }

}  // namespace

std::vector<ProductDensitySpec> shipped_specs() {
  std::vector<ProductDensitySpec> specs;
  const auto smooth = comp({{1.2, {mono(0), mono(0)}},
                            {0.3, {cosf(1), cosf(1)}},
                            {0.2, {cosf(2), mono(0)}},
                            {0.1, {mono(0), cosf(3)}}});
  const auto smooth_diag = comp({{1.0, {mono(0), mono(0)}}, {0.25, {cosf(1), cosf(2)}}});
  specs.emplace_back("constant", 2, std::vector<IndexPair>{{0, 1}},
                     std::vector<SmoothComponent>{comp({{2.0, {mono(0), mono(0)}}})});
  specs.emplace_back("smooth-pair", 2, std::vector<IndexPair>{{0, 1}},
                     std::vector<SmoothComponent>{smooth});
  specs.emplace_back("smooth-pair-diag", 2, std::vector<IndexPair>{{0, 1}, {1, 1}},
                     std::vector<SmoothComponent>{smooth, smooth_diag});
  specs.emplace_back("bilinear", 2, std::vector<IndexPair>{{0, 1}},
                     std::vector<SmoothComponent>{comp({{1.0, {mono(0), mono(0)}},
                                                        {0.1, {mono(1), mono(1)}}})});
  specs.emplace_back("smooth-chain3", 3, std::vector<IndexPair>{{0, 1}, {1, 2}},
                     std::vector<SmoothComponent>{smooth, smooth_diag});
  specs.emplace_back("linear", 2, std::vector<IndexPair>{{0, 1}},
                     std::vector<SmoothComponent>{comp({{1.0, {mono(0), mono(0)}},
                                                        {1.0, {mono(1), mono(0)}},
                                                        {1.0, {mono(0), mono(1)}}})});
  specs.emplace_back("linear-shared", 2, std::vector<IndexPair>{{0, 0}, {0, 1}},
                     std::vector<SmoothComponent>{
                         comp({{1.0, {mono(0), mono(0)}}, {0.5, {mono(1), mono(0)}}}),
                         comp({{1.0, {mono(0), mono(0)}},
                               {0.5, {mono(1), mono(0)}},
                               {0.25, {mono(0), mono(1)}}})});
  specs.emplace_back("quadratic", 2, std::vector<IndexPair>{{0, 1}},
                     std::vector<SmoothComponent>{comp({{1.0, {mono(0), mono(0)}},
                                                        {1.0, {mono(2), mono(0)}}})});
  specs.emplace_back("kinked", 2, std::vector<IndexPair>{{0, 0}, {0, 1}},
                     std::vector<SmoothComponent>{
                         comp({{1.0, {mono(0), mono(0)}}, {0.5, {absf(), mono(0)}}}),
                         comp({{1.0, {mono(0), mono(0)}}, {0.5, {mono(0), absf()}}})});
  return specs;
}

ProductDensitySpec shipped_spec(const std::string& name) {
  for (auto& s : shipped_specs())
    if (s.name() == name) return s;
  throw DomainError("unknown decomposition spec: " + name);
}

bool SuiteReport::all_pass() const {
  return std::all_of(summary.begin(), summary.end(), [](const SuiteSummary& s) { return s.pass; });
}

SuiteReport run_decomposition_suite(const NoiseSchedule& schedule) {
  SuiteReport report;
  auto add_rows = [&](const std::vector<ProbeRow>& rows) {
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  };
  auto add = [&](const ProductDensitySpec& spec, std::string check, Subset a, double value,
                 double threshold, bool pass) {
    report.summary.push_back(
        {spec.name(), std::move(check), subset_label(spec, a), value, threshold, pass});
  };
  const std::vector<double> five{-0.9, -0.45, 0.0, 0.45, 0.9};
  const std::vector<double> three{-0.8, 0.0, 0.6};
  std::vector<double> small_sigmas;
  for (int k = 0; k <= 8; ++k) small_sigmas.push_back(1e-3 * std::pow(10.0, k / 4.0));

  for (const char* name : {"constant", "smooth-pair", "smooth-pair-diag", "bilinear",
                           "smooth-chain3"}) {
    const auto spec = shipped_spec(name);
    const auto probes =
        make_probes(spec.dim(), spec.dim() == 2 ? five : three, default_sigmas(), schedule);
    const auto r = verify_identity(spec, schedule, probes);
    add_rows(r.rows);
    const double thr = spec.name() == "constant" ? 1e-10 : 1e-3;
    add(spec, "identity", (1u << spec.size()) - 1, r.max_relative_residual, thr,
        r.max_relative_residual < thr);
  }

  auto smallness = [&](const std::string& name, Subset a) {
    const auto spec = shipped_spec(name);
    const auto probes = make_probes(spec.dim(), five, small_sigmas, schedule);
    const auto r = verify_smallness(spec, schedule, a, probes);
    add_rows(r.rows);
    const double target = subset_size(a);
    add(spec, "smallness-slope", a, r.slope, target, std::abs(r.slope - target) <= 0.1);
    add(spec, "moment/certificate", a, r.max_moment_ratio, 1.0, r.within_certificate);
  };
  smallness("kinked", 0b01);
  smallness("kinked", 0b10);
  smallness("kinked", 0b11);
  smallness("linear-shared", 0b11);

  auto refactor = [&](const std::string& name, Subset a, bool taylor, double thr) {
    const auto spec = shipped_spec(name);
    const auto probes = make_probes(spec.dim(), spec.dim() == 2 ? five : three,
                                    default_sigmas(), schedule);
    const auto r = taylor ? verify_taylor_refactor(spec, schedule, a, probes)
                          : verify_delta_refactor(spec, schedule, a, probes);
    add_rows(r.rows);
    add(spec, taylor ? "taylor-refactor" : "delta-refactor", a, r.max_residual, thr,
        r.max_residual < thr);
  };
  refactor("smooth-pair", 0b1, false, 1e-8);
  refactor("smooth-pair-diag", 0b11, false, 1e-3);
  refactor("smooth-chain3", 0b11, false, 1e-3);
  refactor("linear", 0b1, true, 1e-8);
  refactor("linear-shared", 0b11, true, 1e-8);
  refactor("quadratic", 0b1, true, 1e-6);
  refactor("smooth-pair", 0b1, true, 1e-3);
  refactor("smooth-pair-diag", 0b11, true, 1e-3);
  return report;
}

void write_probe_csv(const std::string& path, const std::vector<ProbeRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path);
  out << "check,spec,subset,sigma,x,lhs,rhs,residual\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::string x;
    for (std::size_t l = 0; l < r.x.size(); ++l) x += (l ? ";" : "") + num(r.x[l]);
    out << r.check << ',' << r.spec << ",\"" << r.subset << "\"," << num(r.sigma) << ',' << x
        << ',' << num(r.lhs) << ',' << num(r.rhs) << ',' << num(r.residual) << '\n';
  }
}

std::string format_suite_summary(const SuiteReport& report) {
  std::ostringstream os;
  char line[256];
  for (const auto& s : report.summary) {
    std::snprintf(line, sizeof line, "%-5s %-18s %-22s %-16s value=%.4e threshold=%.4e\n",
                  s.pass ? "PASS" : "FAIL", s.spec.c_str(), s.check.c_str(), s.subset.c_str(),
                  s.value, s.threshold);
    os << line;
  }
  return os.str();
}

}  // namespace scorelab
