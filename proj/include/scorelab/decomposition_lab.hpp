#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scorelab/interaction_density.hpp"
#include "scorelab/noise_schedule.hpp"

namespace scorelab {

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Product-form initial density p0(x) = prod_{(i,j) in S} f_ij(x_i, x_j).
/// Pairs are unordered with i <= j, so diagonal pairs (i, i) are allowed;
/// each f_ij is a globally defined two-argument component. p0 is used
/// unnormalized: every identity checked here is linear in p0.
class ProductDensitySpec {
 public:
  ProductDensitySpec(std::string name, std::size_t d, std::vector<IndexPair> pairs,
                     std::vector<SmoothComponent> components);

  const std::string& name() const { return name_; }
  std::size_t dim() const { return d_; }
  const std::vector<IndexPair>& pairs() const { return pairs_; }
  const std::vector<SmoothComponent>& components() const { return components_; }
  std::size_t size() const { return pairs_.size(); }

  /// f_k evaluated at (z_i, z_j) for pair k.
  double factor(std::size_t k, std::span<const double> z) const;
  /// Gradient components (d f_k / d u, d f_k / d v) at (z_i, z_j).
  std::pair<double, double> gradient(std::size_t k, std::span<const double> z) const;
  /// Certified Lipschitz constant of y -> f_k(y_i, y_j) along each argument.
  std::pair<double, double> lipschitz(std::size_t k) const;
  /// Minimum of every f_k over a 33 x 33 grid of [-1, 1]^2.
  double min_on_cube() const;
  /// prod_k f_k(z).
  double product(std::span<const double> z) const;

 private:
  std::string name_;
  std::size_t d_;
  std::vector<IndexPair> pairs_;
  std::vector<SmoothComponent> components_;
};

/// Subsets of S as bit masks over pair indices.
using Subset = unsigned;

std::string subset_label(const ProductDensitySpec& spec, Subset a);
inline int subset_size(Subset a) { return __builtin_popcount(a); }

struct IntegrationSpec {
  std::size_t hermite_nodes = 40;  // per active coordinate
  /// When nonzero, also integrate with this many nodes and throw
  /// NumericError if the two results differ by more than tol.
  std::size_t check_nodes = 0;
  double tol = 1e-8;
};

/// G_A(x, t) = prod_{(i,j) in A} f_ij(x_i / m_t, x_j / m_t). Requires x in [-m_t, m_t]^d.
double eval_G(Subset a, std::span<const double> x, double t, const ProductDensitySpec& spec,
              const NoiseSchedule& schedule);

/// Delta_A(x, t) = int prod_{A} [f((x + sigma y)/m) - f(x/m)] K(y) dy by
/// Gauss-Hermite over the coordinates touched by A.
double eval_Delta(Subset a, std::span<const double> x, double t, const ProductDensitySpec& spec,
                  const NoiseSchedule& schedule, const IntegrationSpec& integration = {});

/// int prod_{(i,j) in B} f((x + sigma y)/m) K(y) dy by composite Gauss-Legendre in y.
double eval_p_tB(Subset b, std::span<const double> x, double t, const ProductDensitySpec& spec,
                 const NoiseSchedule& schedule);

/// p_t(x) = int N(x; m y, sigma^2 I) p0(y) dy by composite Gauss-Legendre in y.
double direct_p_t(std::span<const double> x, double t, const ProductDensitySpec& spec,
                  const NoiseSchedule& schedule);

/// m_t^{-d} sum_{A subset S} G_{S \ A} Delta_A.
double decomposition_sum(std::span<const double> x, double t, const ProductDensitySpec& spec,
                         const NoiseSchedule& schedule, const IntegrationSpec& integration = {});

/// Scaled second-order Taylor residual of pair k:
///   Delta1 = [f(x~ + s~ y) - f(x~)] / s~ - y_i D1 - y_j D2, x~ = x/m, s~ = sigma/m.
double taylor_residual(const ProductDensitySpec& spec, std::size_t k, std::span<const double> x_tilde,
                       double sigma_tilde, std::span<const double> y);

/// Triple-sum form of Delta_A from the Taylor refactorization.
double taylor_refactor_sum(Subset a, std::span<const double> x, double t,
                           const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                           const IntegrationSpec& integration = {});

/// sum_{B subset A} (-1)^{|A \ B|} G_{A \ B} p_{t,B}.
double delta_refactor_sum(Subset a, std::span<const double> x, double t,
                          const ProductDensitySpec& spec, const NoiseSchedule& schedule);

struct Probe {
  std::vector<double> x;
  double sigma = 0.0;
  double t = 0.0;
};

/// Probes x = fraction * m_t on a tensor grid of `fractions` (all in [-1, 1]),
/// for each sigma in `sigmas`.
std::vector<Probe> make_probes(std::size_t d, const std::vector<double>& fractions,
                               const std::vector<double>& sigmas, const NoiseSchedule& schedule);

/// Default verification noise levels sigma_t in {0.001, 0.003, ..., 0.3}.
std::vector<double> default_sigmas();

struct ProbeRow {
  std::string check;
  std::string spec;
  std::string subset;
  std::vector<double> x;
  double sigma = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

struct IdentityResult {
  double max_relative_residual = 0.0;
  std::size_t probes = 0;
  std::vector<ProbeRow> rows;
};

IdentityResult verify_identity(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                               const std::vector<Probe>& probes,
                               const IntegrationSpec& integration = {});

struct SmallnessLevel {
  double sigma = 0.0;
  double max_abs_delta = 0.0;
  double max_ratio = 0.0;        // max |Delta_A| / sigma^{|A|}
  double max_abs_moment = 0.0;   // max int |prod Delta| K / sigma^{|A|}
};

struct SmallnessResult {
  Subset subset = 0;
  std::vector<SmallnessLevel> levels;
  double fitted_constant = 0.0;  // max ratio over all levels
  double certificate = 0.0;      // max over probes of prod (L_i + L_j) E|y|^{|A|} / m^{|A|}
  double max_moment_ratio = 0.0;  // max over probes of moment / certificate
  bool within_certificate = false;
  double slope = 0.0;            // log max|Delta_A| vs log sigma, sigma in [1e-3, 1e-1]
  double slope_se = 0.0;
  std::vector<ProbeRow> rows;
};

SmallnessResult verify_smallness(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                 Subset a, const std::vector<Probe>& probes,
                                 const IntegrationSpec& integration = {});

struct RefactorResult {
  double max_residual = 0.0;  // absolute
  std::vector<ProbeRow> rows;
  /// Taylor check only: max |int prod_A Delta1 K| per sigma, ascending sigma.
  std::vector<std::pair<double, double>> residual_by_sigma;
};

RefactorResult verify_delta_refactor(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                     Subset a, const std::vector<Probe>& probes,
                                     const IntegrationSpec& integration = {});

RefactorResult verify_taylor_refactor(const ProductDensitySpec& spec, const NoiseSchedule& schedule,
                                      Subset a, const std::vector<Probe>& probes,
                                      const IntegrationSpec& integration = {});

/// Specs shipped with the verification suite.
std::vector<ProductDensitySpec> shipped_specs();
ProductDensitySpec shipped_spec(const std::string& name);

struct SuiteSummary {
  std::string spec;
  std::string check;
  std::string subset;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::vector<ProbeRow> rows;
  std::vector<SuiteSummary> summary;
  bool all_pass() const;
};

/// Runs identity, smallness and refactorization checks over the shipped specs.
SuiteReport run_decomposition_suite(const NoiseSchedule& schedule);

void write_probe_csv(const std::string& path, const std::vector<ProbeRow>& rows);
std::string format_suite_summary(const SuiteReport& report);

}  // namespace scorelab
