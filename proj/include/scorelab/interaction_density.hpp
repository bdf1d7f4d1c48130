#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scorelab/common.hpp"

namespace scorelab {

/// One-dimensional factor of a tensor-product series term.
///   Cosine k:   cos(k * pi * (u + 1) / 2)
///   Monomial p: u^p
///   Abs:        |u|   (Lipschitz only; no derivative certificates)
enum class FactorKind { Cosine, Monomial, Abs };

struct Factor {
  FactorKind kind = FactorKind::Cosine;
  int order = 0;

  double value(double u) const;
  /// a-th derivative. Abs returns sign(u) for a = 1 and 0 beyond.
  double derivative(double u, int a) const;
  /// sup over [-1, 1] of |a-th derivative|; +inf where no bound exists.
  double derivative_sup(int a) const;

  bool operator==(const Factor&) const = default;
};

struct SeriesTerm {
  double coef = 0.0;
  std::vector<Factor> factors;  // one per argument

  bool operator==(const SeriesTerm&) const = default;
};

/// Smooth interaction component f_J: a finite sum of tensor-product terms.
/// Carries a (beta, C) smoothness certificate valid on [-1, 1]^arity.
class SmoothComponent {
 public:
  SmoothComponent() = default;
  SmoothComponent(std::size_t arity, std::vector<SeriesTerm> terms,
                  double holder_beta = 1.0, double holder_c = 0.0);

  /// Zero component (f == 0).
  static SmoothComponent zero(std::size_t arity);

  /// Random cosine series with coefficients decaying like |k|^-(beta+arity/2+1),
  /// frequencies up to max_freq per axis, rescaled so that the certified
  /// Hoelder constant equals holder_c.
  static SmoothComponent random_cosine(std::size_t arity, double beta, double holder_c,
                                       int max_freq, Rng& rng);

  std::size_t arity() const { return arity_; }
  const std::vector<SeriesTerm>& terms() const { return terms_; }
  double holder_beta() const { return beta_; }
  double holder_c() const { return c_; }

  double operator()(std::span<const double> u) const;
  /// Mixed partial derivative with multi-index alpha (size == arity).
  double derivative(std::span<const double> u, std::span<const int> alpha) const;
  /// First partial along `axis`.
  double partial(std::span<const double> u, std::size_t axis) const;

  /// Upper bound on sup |f| over [-1,1]^arity.
  double sup_bound() const;
  /// Upper bound on sup |d f / d u_axis| over the cube, per axis.
  std::vector<double> partial_sup_bounds() const;
  /// Euclidean Lipschitz bound over the cube.
  double lipschitz_bound() const;
  /// Certified constant C' such that f is (beta, C')-smooth on the cube.
  double certified_holder_constant(double beta) const;

  bool operator==(const SmoothComponent&) const = default;

 private:
  std::size_t arity_ = 0;
  std::vector<SeriesTerm> terms_;
  double beta_ = 1.0;
  double c_ = 0.0;
};

/// Duplicate-free list of cliques over coordinates {0, ..., d-1}.
class CliqueSet {
 public:
  CliqueSet() = default;
  CliqueSet(std::size_t d, std::size_t d_star, std::vector<std::vector<std::size_t>> cliques);

  /// All size-2 cliques of a chain 0-1-2-...-(d-1).
  static CliqueSet chain(std::size_t d);
  /// Cliques given as edges of a dependency graph (d* = 2).
  static CliqueSet from_edges(std::size_t d,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges);

  std::size_t dim() const { return d_; }
  std::size_t d_star() const { return d_star_; }
  const std::vector<std::vector<std::size_t>>& cliques() const { return cliques_; }
  std::size_t size() const { return cliques_.size(); }

 private:
  std::size_t d_ = 0;
  std::size_t d_star_ = 0;
  std::vector<std::vector<std::size_t>> cliques_;
};

struct QuadSpec {
  double rel_tol = 1e-6;
  std::size_t max_order = 64;  // Gauss-Legendre nodes per half-axis at most
  std::size_t mc_points = 1000000;
  std::uint64_t mc_seed = 12345;
};

struct DensityBounds {
  double lower = 0.0;
  double upper = 0.0;
  /// c1 > 1 with 1/c1 <= p0 <= c1.
  double c1() const;
};

/// Normalized exponential-interaction density p0(x) = exp(sum_J f_J(x_J) - logZ)
/// on [-1, 1]^d. Immutable after construction.
class InteractionDensity {
 public:
  InteractionDensity() = default;
  InteractionDensity(CliqueSet cliques, std::vector<SmoothComponent> components,
                     double log_z, double quad_tol);

  std::size_t dim() const { return cliques_.dim(); }
  const CliqueSet& cliques() const { return cliques_; }
  const std::vector<SmoothComponent>& components() const { return components_; }
  double log_z() const { return log_z_; }
  double quad_tol() const { return quad_tol_; }
  const DensityBounds& bounds() const { return bounds_; }
  /// Sum of component sup bounds; envelope exponent for rejection sampling.
  double log_envelope() const { return sup_sum_; }

  /// sum_J f_J(x_J), no support check.
  double log_unnormalized(std::span<const double> x) const;
  /// log p0(x); throws DomainError outside the cube.
  double log_density(std::span<const double> x) const;
  /// p0(x), zero outside the cube.
  double density(std::span<const double> x) const;

 private:
  CliqueSet cliques_;
  std::vector<SmoothComponent> components_;
  double log_z_ = 0.0;
  double quad_tol_ = 0.0;
  double sup_sum_ = 0.0;
  DensityBounds bounds_;
};

/// Merges components that share a clique (by summing their terms) and
/// returns the normalized density.
InteractionDensity normalize(std::size_t d, std::size_t d_star,
                             std::vector<std::vector<std::size_t>> cliques,
                             std::vector<SmoothComponent> components,
                             const QuadSpec& quad = {});

/// Normalization for an already duplicate-free clique set.
InteractionDensity normalize(const CliqueSet& cliques,
                             std::vector<SmoothComponent> components,
                             const QuadSpec& quad = {});

/// Exact rejection sampling against the uniform proposal. Deterministic in
/// `seed` independent of the worker count.
Matrix sample(const InteractionDensity& density, std::size_t n, std::uint64_t seed);

/// Marginal density of one coordinate evaluated at `grid` points.
std::vector<double> marginal_1d(const InteractionDensity& density, std::size_t coordinate,
                                std::span<const double> grid, std::size_t order = 32);

/// Integral of g(x) p0(x) over the cube by tensor Gauss-Legendre (d <= 4).
double expectation(const InteractionDensity& density,
                   const std::function<double(std::span<const double>)>& g,
                   std::size_t order = 32);

}  // namespace scorelab
