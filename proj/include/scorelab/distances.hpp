#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/score_oracle.hpp"

namespace scorelab {

using DensityFn = std::function<double(std::span<const double>)>;

/// TV uses the convention TV(p, q) = int |p - q|, so values lie in [0, 2].
struct TvEstimate {
  double value = 0.0;
  std::string method;  // "grid-quadrature" or "histogram"
  double resolution = 0.0;
  double error_estimate = 0.0;
  std::string note;
};

struct W1Estimate {
  double value = 0.0;
  std::string method;  // "exact-1d", "sliced" or "small-n-assignment"
  double resolution = 0.0;
  double error_estimate = 0.0;
};

struct GridSpec {
  double lower = -1.0;
  double upper = 1.0;
  std::size_t panels = 64;  // per axis
  std::size_t order = 8;    // Gauss-Legendre nodes per panel
};

/// Tensor Gauss-Legendre quadrature of int |p - q| over [lower, upper]^d; the
/// error estimate is the change from halving the panel count. d <= 3.
TvEstimate tv_density_vs_density(const DensityFn& p, const DensityFn& q, std::size_t d,
                                 const GridSpec& grid = {});

struct HistogramSpec {
  /// Bins per axis; 0 selects round(2 / h) with h = bin_scale * n^{-1/(d+2)}.
  std::size_t bins_per_axis = 0;
  double bin_scale = 1.0;
  std::size_t cell_order = 4;  // Gauss-Legendre nodes per axis per cell
};

/// Histogram of the samples on a regular partition of [-1, 1]^d against
/// cell masses of p; mass outside the cube forms one extra cell. The error
/// estimate is the expected multinomial noise sqrt(2/pi) sum_c sqrt(P_c (1 - P_c) / n).
/// d <= 4. Empty samples throw DomainError.
TvEstimate tv_samples_vs_density(const Matrix& samples, const DensityFn& p,
                                  const HistogramSpec& spec = {});

/// Mean |a_(i) - b_(i)| over sorted samples; unequal sizes use the exact
/// integral of |F_a^{-1} - F_b^{-1}| over (0, 1).
W1Estimate w1_1d_exact(std::span<const double> a, std::span<const double> b);

/// Mean of 1-D W1 over random unit directions; a lower bound on true W1.
/// d >= 2.
W1Estimate w1_sliced(const Matrix& a, const Matrix& b, std::size_t n_projections, Rng& rng);

/// Minimum over permutations of the mean Euclidean matching cost; equal
/// sizes n <= 8.
W1Estimate w1_small_assignment(const Matrix& a, const Matrix& b);

/// sup_x |F_n(x) - F(x)| for 1-D samples.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

struct IdentityTerm {
  double to_marginal = 0.0;     // E ||s - grad log p_t||^2
  double to_conditional = 0.0;  // E ||s - grad log p_{t|0}||^2
  double difference = 0.0;
  double difference_se = 0.0;
};

struct IdentityReport {
  double t = 0.0;
  std::size_t mc_n = 0;
  std::vector<IdentityTerm> terms;
  /// max over pairs of |D_k - D_l| / sqrt(se_k^2 + se_l^2)
  double max_pairwise_z = 0.0;
  bool consistent = false;  // max_pairwise_z <= 3
};

/// Checks that E||s - grad log p_t||^2 - E||s - grad log p_{t|0}||^2 does not
/// depend on s. Each candidate gets an independent draw stream.
IdentityReport score_identity_check(const std::vector<ScoreFn>& candidates,
                                    const DiffusedOracle& oracle, double t, std::size_t mc_n,
                                    std::uint64_t seed);

}  // namespace scorelab
