#include "scorelab/interaction_density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "scorelab/quadrature.hpp"

namespace scorelab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double falling_factorial(int p, int a) {
  double r = 1.0;
  for (int i = 0; i < a; ++i) r *= static_cast<double>(p - i);
  return r;
}

// All multi-indices of length n with entries summing to total.
void multi_indices(std::size_t n, int total, std::vector<int>& cur,
                   std::vector<std::vector<int>>& out) {
  if (cur.size() + 1 == n) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int k = 0; k <= total; ++k) {
    cur.push_back(k);
    multi_indices(n, total - k, cur, out);
    cur.pop_back();
  }
}

struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre on [-1,0] and [0,1]; keeps Abs kinks on panel edges.
AxisRule split_legendre(std::size_t order) {
  QuadratureRule r = composite_legendre(-1.0, 1.0, 2, order);
  return {std::move(r.nodes), std::move(r.weights)};
}

// Sum over the tensor grid of prod(weights) * exp(sum_J f_J - shift) * g(x).
double tensor_sum(const CliqueSet& cliques, const std::vector<SmoothComponent>& comps,
                  const std::vector<AxisRule>& axes, double shift,
                  const std::function<double(std::span<const double>)>* g) {
  const std::size_t d = axes.size();
  // Per-clique lookup tables over the clique's node sub-grid.
  std::vector<std::vector<double>> tables(cliques.size());
  std::vector<std::vector<std::size_t>> strides(cliques.size());
  for (std::size_t c = 0; c < cliques.size(); ++c) {
    const auto& J = cliques.cliques()[c];
    std::size_t size = 1;
    strides[c].resize(J.size());
    for (std::size_t l = J.size(); l-- > 0;) {
      strides[c][l] = size;
      size *= axes[J[l]].nodes.size();
    }
    tables[c].resize(size);
    std::vector<double> u(J.size());
    for (std::size_t flat = 0; flat < size; ++flat) {
      std::size_t rem = flat;
      for (std::size_t l = 0; l < J.size(); ++l) {
        const std::size_t k = rem / strides[c][l];
        rem %= strides[c][l];
        u[l] = axes[J[l]].nodes[k];
      }
      tables[c][flat] = comps[c](u);
    }
  }
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  for (std::size_t l = 0; l < d; ++l) x[l] = axes[l].nodes[0];
  double total = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t l = 0; l < d; ++l) w *= axes[l].weights[idx[l]];
    double s = -shift;
    for (std::size_t c = 0; c < cliques.size(); ++c) {
      const auto& J = cliques.cliques()[c];
      std::size_t off = 0;
      for (std::size_t l = 0; l < J.size(); ++l) off += idx[J[l]] * strides[c][l];
      s += tables[c][off];
    }
    double term = w * std::exp(s);
    if (g) term *= (*g)(x);
    total += term;
    std::size_t l = d;
    while (l-- > 0) {
      if (++idx[l] < axes[l].nodes.size()) {
        x[l] = axes[l].nodes[idx[l]];
        break;
      }
      idx[l] = 0;
      x[l] = axes[l].nodes[0];
    }
    if (l == static_cast<std::size_t>(-1)) break;
  }
  return total;
}

}  // namespace

// ---------------------------------------------------------------- Factor

double Factor::value(double u) const { return derivative(u, 0); }

double Factor::derivative(double u, int a) const {
  switch (kind) {
    case FactorKind::Cosine: {
      const double w = order * M_PI / 2.0;
      return std::pow(w, a) * std::cos(w * (u + 1.0) + a * M_PI / 2.0);
    }
    case FactorKind::Monomial:
      if (a > order) return 0.0;
      return falling_factorial(order, a) * std::pow(u, order - a);
    case FactorKind::Abs:
      if (a == 0) return std::abs(u);
      if (a == 1) return u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
      return 0.0;
  }
  return 0.0;
}

double Factor::derivative_sup(int a) const {
  switch (kind) {
    case FactorKind::Cosine:
      if (order == 0) return a == 0 ? 1.0 : 0.0;
      return std::pow(order * M_PI / 2.0, a);
    case FactorKind::Monomial:
      return a > order ? 0.0 : falling_factorial(order, a);
    case FactorKind::Abs:
      return a <= 1 ? 1.0 : kInf;
  }
  return kInf;
}

// ------------------------------------------------------- SmoothComponent

SmoothComponent::SmoothComponent(std::size_t arity, std::vector<SeriesTerm> terms,
                                 double holder_beta, double holder_c)
    : arity_(arity), terms_(std::move(terms)), beta_(holder_beta), c_(holder_c) {
  for (const auto& t : terms_) {
    if (t.factors.size() != arity_)
      throw DomainError("SmoothComponent: term factor count does not match arity");
    if (!std::isfinite(t.coef)) throw DomainError("SmoothComponent: non-finite coefficient");
  }
  if (!(beta_ > 0)) throw DomainError("SmoothComponent: beta must be positive");
  if (c_ <= 0) c_ = certified_holder_constant(beta_);
}

SmoothComponent SmoothComponent::zero(std::size_t arity) {
  return SmoothComponent(arity, {}, 1.0, 0.0);
}

SmoothComponent SmoothComponent::random_cosine(std::size_t arity, double beta,
                                               double holder_c, int max_freq, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<SeriesTerm> terms;
  std::vector<int> k(arity, 0);
  for (;;) {
    std::size_t l = arity;
    while (l-- > 0) {
      if (++k[l] <= max_freq) break;
      k[l] = 0;
    }
    if (l == static_cast<std::size_t>(-1)) break;
    double norm2 = 0;
    for (int v : k) norm2 += static_cast<double>(v) * v;
    const double decay = std::pow(std::sqrt(norm2), -(beta + arity / 2.0 + 1.0));
    SeriesTerm term;
    term.coef = unif(rng) * decay;
    for (int v : k) term.factors.push_back({FactorKind::Cosine, v});
    terms.push_back(std::move(term));
  }
  SmoothComponent raw(arity, terms, beta, 1.0);
  const double cert = raw.certified_holder_constant(beta);
  if (cert > 0) {
    for (auto& t : terms) t.coef *= holder_c / cert;
  }
  return SmoothComponent(arity, std::move(terms), beta, holder_c);
}

double SmoothComponent::operator()(std::span<const double> u) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double p = t.coef;
    for (std::size_t l = 0; l < arity_; ++l) p *= t.factors[l].value(u[l]);
    s += p;
  }
  return s;
}

double SmoothComponent::derivative(std::span<const double> u,
                                   std::span<const int> alpha) const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double p = t.coef;
    for (std::size_t l = 0; l < arity_; ++l) p *= t.factors[l].derivative(u[l], alpha[l]);
    s += p;
  }
  return s;
}

double SmoothComponent::partial(std::span<const double> u, std::size_t axis) const {
  std::vector<int> alpha(arity_, 0);
  alpha[axis] = 1;
  return derivative(u, alpha);
}

double SmoothComponent::sup_bound() const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double p = std::abs(t.coef);
    for (const auto& f : t.factors) p *= f.derivative_sup(0);
    s += p;
  }
  return s;
}

std::vector<double> SmoothComponent::partial_sup_bounds() const {
  std::vector<double> out(arity_, 0.0);
  for (std::size_t axis = 0; axis < arity_; ++axis) {
    for (const auto& t : terms_) {
      double p = std::abs(t.coef);
      for (std::size_t l = 0; l < arity_; ++l)
        p *= t.factors[l].derivative_sup(l == axis ? 1 : 0);
      out[axis] += p;
    }
  }
  return out;
}

double SmoothComponent::lipschitz_bound() const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double g2 = 0.0;
    for (std::size_t axis = 0; axis < arity_; ++axis) {
      double p = 1.0;
      for (std::size_t l = 0; l < arity_; ++l)
        p *= t.factors[l].derivative_sup(l == axis ? 1 : 0);
      g2 += p * p;
    }
    s += std::abs(t.coef) * std::sqrt(g2);
  }
  return s;
}

double SmoothComponent::certified_holder_constant(double beta) const {
  if (!(beta > 0)) throw DomainError("certified_holder_constant: beta must be positive");
  const int q = static_cast<int>(std::ceil(beta)) - 1;
  const double s = beta - q;
  std::vector<std::vector<int>> alphas;
  std::vector<int> cur;
  if (arity_ == 0) return 0.0;
  multi_indices(arity_, q, cur, alphas);
  double best = 0.0;
  for (const auto& alpha : alphas) {
    double sup = 0.0, lip = 0.0;
    for (const auto& t : terms_) {
      double p = std::abs(t.coef);
      for (std::size_t l = 0; l < arity_; ++l) p *= t.factors[l].derivative_sup(alpha[l]);
      if (t.coef != 0) sup += p;
      double g2 = 0.0;
      for (std::size_t axis = 0; axis < arity_; ++axis) {
        double r = 1.0;
        for (std::size_t l = 0; l < arity_; ++l)
          r *= t.factors[l].derivative_sup(alpha[l] + (l == axis ? 1 : 0));
        g2 += r * r;
      }
      if (t.coef != 0) lip += std::abs(t.coef) * std::sqrt(g2);
    }
    double c;
    if (s >= 1.0)
      c = lip;
    else if (lip == 0.0 || sup == 0.0)
      c = 0.0;
    else
      c = std::pow(lip, s) * std::pow(2.0 * sup, 1.0 - s);
    best = std::max(best, c);
  }
  return best;
}

// ------------------------------------------------------------- CliqueSet

CliqueSet::CliqueSet(std::size_t d, std::size_t d_star,
                     std::vector<std::vector<std::size_t>> cliques)
    : d_(d), d_star_(d_star), cliques_(std::move(cliques)) {
  if (d_ == 0) throw DomainError("CliqueSet: d must be positive");
  if (d_star_ == 0 || d_star_ > d_) throw DomainError("CliqueSet: need 1 <= d* <= d");
  std::set<std::vector<std::size_t>> seen;
  for (auto& J : cliques_) {
    std::sort(J.begin(), J.end());
    if (J.empty()) throw DomainError("CliqueSet: empty clique");
    if (std::adjacent_find(J.begin(), J.end()) != J.end())
      throw DomainError("CliqueSet: repeated index inside a clique");
    if (J.back() >= d_) throw DomainError("CliqueSet: clique index out of range");
    if (J.size() > d_star_) throw DomainError("CliqueSet: clique larger than d*");
    if (!seen.insert(J).second) throw DomainError("CliqueSet: duplicate clique");
  }
}

CliqueSet CliqueSet::chain(std::size_t d) {
  std::vector<std::vector<std::size_t>> c;
  for (std::size_t i = 0; i + 1 < d; ++i) c.push_back({i, i + 1});
  return CliqueSet(d, d >= 2 ? 2 : 1, std::move(c));
}

CliqueSet CliqueSet::from_edges(std::size_t d,
                                const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> c;
  for (auto [a, b] : edges) c.push_back({a, b});
  return CliqueSet(d, 2, std::move(c));
}

// ------------------------------------------------------ InteractionDensity

double DensityBounds::c1() const {
  return std::max({upper, 1.0 / lower, 1.0 + 1e-12});
}

InteractionDensity::InteractionDensity(CliqueSet cliques,
                                       std::vector<SmoothComponent> components,
                                       double log_z, double quad_tol)
    : cliques_(std::move(cliques)),
      components_(std::move(components)),
      log_z_(log_z),
      quad_tol_(quad_tol) {
  if (components_.size() != cliques_.size())
    throw DomainError("InteractionDensity: one component per clique required");
  for (std::size_t c = 0; c < components_.size(); ++c) {
    if (components_[c].arity() != cliques_.cliques()[c].size())
      throw DomainError("InteractionDensity: component arity does not match clique");
    if (components_[c].arity() > 8)
      throw UnsupportedError("InteractionDensity: clique arity above 8");
    sup_sum_ += components_[c].sup_bound();
  }
  bounds_.lower = std::exp(-sup_sum_ - log_z_);
  bounds_.upper = std::exp(sup_sum_ - log_z_);
}

double InteractionDensity::log_unnormalized(std::span<const double> x) const {
  double s = 0.0;
  double buf[8];
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& J = cliques_.cliques()[c];
    for (std::size_t l = 0; l < J.size(); ++l) buf[l] = x[J[l]];
    s += components_[c](std::span<const double>(buf, J.size()));
  }
  return s;
}

double InteractionDensity::log_density(std::span<const double> x) const {
  if (x.size() != dim()) throw DomainError("log_density: dimension mismatch");
  for (double v : x)
    if (!(v >= -1.0 && v <= 1.0)) throw DomainError("log_density: point outside [-1,1]^d");
  return log_unnormalized(x) - log_z_;
}

double InteractionDensity::density(std::span<const double> x) const {
  for (double v : x)
    if (!(v >= -1.0 && v <= 1.0)) return 0.0;
  return std::exp(log_unnormalized(x) - log_z_);
}

InteractionDensity normalize(std::size_t d, std::size_t d_star,
                             std::vector<std::vector<std::size_t>> cliques,
                             std::vector<SmoothComponent> components,
                             const QuadSpec& quad) {
  if (cliques.size() != components.size())
    throw DomainError("normalize: one component per clique required");
  std::map<std::vector<std::size_t>, std::size_t> where;
  std::vector<std::vector<std::size_t>> merged_cliques;
  std::vector<SmoothComponent> merged;
  for (std::size_t c = 0; c < cliques.size(); ++c) {
    auto J = cliques[c];
    std::sort(J.begin(), J.end());
    // Components are defined in the caller's index order; reorder factors.
    std::vector<std::size_t> perm(J.size());
    for (std::size_t l = 0; l < J.size(); ++l)
      perm[l] = static_cast<std::size_t>(
          std::find(cliques[c].begin(), cliques[c].end(), J[l]) - cliques[c].begin());
    std::vector<SeriesTerm> terms = components[c].terms();
    for (auto& t : terms) {
      std::vector<Factor> f(J.size());
      for (std::size_t l = 0; l < J.size(); ++l) f[l] = t.factors[perm[l]];
      t.factors = std::move(f);
    }
    auto it = where.find(J);
    if (it == where.end()) {
      where.emplace(J, merged.size());
      merged_cliques.push_back(J);
      merged.emplace_back(J.size(), std::move(terms), components[c].holder_beta(),
                          components[c].holder_c());
    } else {
      const SmoothComponent& prev = merged[it->second];
      std::vector<SeriesTerm> all = prev.terms();
      all.insert(all.end(), terms.begin(), terms.end());
      merged[it->second] =
          SmoothComponent(J.size(), std::move(all), prev.holder_beta(),
                          prev.holder_c() + components[c].holder_c());
    }
  }
  return normalize(CliqueSet(d, d_star, std::move(merged_cliques)), std::move(merged), quad);
}

InteractionDensity normalize(const CliqueSet& cliques, std::vector<SmoothComponent> components,
                             const QuadSpec& quad) {
  const std::size_t d = cliques.dim();
  if (components.size() != cliques.size())
    throw DomainError("normalize: one component per clique required");
  double shift = 0.0;
  for (const auto& c : components) shift += c.sup_bound();

  if (d > 4) {
    // Monte Carlo over the cube with reported relative standard error.
    InteractionDensity tmp(cliques, components, 0.0, 0.0);
    Rng rng(quad.mc_seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<double> x(d);
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < quad.mc_points; ++i) {
      for (auto& v : x) v = unif(rng);
      const double e = std::exp(tmp.log_unnormalized(x) - shift);
      sum += e;
      sum2 += e * e;
    }
    const double n = static_cast<double>(quad.mc_points);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / n);
    const double log_z = std::log(mean) + shift + static_cast<double>(d) * std::log(2.0);
    return InteractionDensity(cliques, std::move(components), log_z, se / mean);
  }

  static constexpr std::size_t kOrders[] = {4, 8, 12, 16, 24, 32, 48, 64, 96, 128};
  double prev = -1.0;
  double rel_change = kInf;
  for (std::size_t order : kOrders) {
    if (order > quad.max_order) break;
    std::vector<AxisRule> axes(d, split_legendre(order));
    const double z = tensor_sum(cliques, components, axes, shift, nullptr);
    if (prev > 0) {
      rel_change = std::abs(z - prev) / z;
      if (rel_change < quad.rel_tol) {
        return InteractionDensity(cliques, std::move(components), std::log(z) + shift,
                                  rel_change);
      }
    }
    prev = z;
  }
  throw NumericError("normalize: quadrature did not converge (relative change " +
                     std::to_string(rel_change) + ")");
}

Matrix sample(const InteractionDensity& density, std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kChunk = 4096;
  const std::size_t d = density.dim();
  const double envelope = density.log_envelope();
  Matrix out(n, d);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng = make_stream(seed, c);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
    std::vector<double> x(d);
    for (std::size_t i = lo; i < hi; ++i) {
      for (;;) {
        for (auto& v : x) v = unif(rng);
        const double u = unit(rng);
        if (u > 0 && std::log(u) <= density.log_unnormalized(x) - envelope) break;
      }
      std::copy(x.begin(), x.end(), out.row(i).begin());
    }
  });
  return out;
}

std::vector<double> marginal_1d(const InteractionDensity& density, std::size_t coordinate,
                                std::span<const double> grid, std::size_t order) {
  const std::size_t d = density.dim();
  if (d > 4) throw UnsupportedError("marginal_1d: supported for d <= 4 only");
  if (coordinate >= d) throw DomainError("marginal_1d: coordinate out of range");
  std::vector<double> out(grid.size());
  const AxisRule base = split_legendre(order);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] >= -1.0 && grid[g] <= 1.0)) {
      out[g] = 0.0;
      continue;
    }
    std::vector<AxisRule> axes(d, base);
    axes[coordinate] = AxisRule{{grid[g]}, {1.0}};
    out[g] = tensor_sum(density.cliques(), density.components(), axes, density.log_z(),
                        nullptr);
  }
  return out;
}

double expectation(const InteractionDensity& density,
                   const std::function<double(std::span<const double>)>& g,
                   std::size_t order) {
  const std::size_t d = density.dim();
  if (d > 4) throw UnsupportedError("expectation: supported for d <= 4 only");
  std::vector<AxisRule> axes(d, split_legendre(order));
  return tensor_sum(density.cliques(), density.components(), axes, density.log_z(), &g);
}

}  // namespace scorelab
