#include "scorelab/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scorelab/quadrature.hpp"

namespace scorelab {
namespace {

std::size_t default_panels(std::size_t d) {
  switch (d) {
    case 1: return 128;
    case 2: return 32;
    default: return 12;
  }
}

// int |p - q| over the cube with `panels` panels per axis.
double tv_grid(const DensityFn& p, const DensityFn& q, std::size_t d, const GridSpec& grid,
               std::size_t panels) {
  const QuadratureRule rule = composite_legendre(grid.lower, grid.upper, panels, grid.order);
  const std::size_t m = rule.size();
  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= m;
  // Parallel over the leading axis, reduced in index order.
  std::vector<double> partial(m, 0.0);
  parallel_for(m, [&](std::size_t i0) {
    std::vector<double> x(d);
    std::vector<std::size_t> idx(d, 0);
    double acc = 0;
    const std::size_t inner = total / m;
    for (std::size_t flat = 0; flat < inner; ++flat) {
      std::size_t rem = flat;
      double w = rule.weights[i0];
      x[0] = rule.nodes[i0];
      for (std::size_t k = d; k-- > 1;) {
        idx[k] = rem % m;
        rem /= m;
        x[k] = rule.nodes[idx[k]];
        w *= rule.weights[idx[k]];
      }
      acc += w * std::abs(p(x) - q(x));
    }
    partial[i0] = acc;
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace

TvEstimate tv_density_vs_density(const DensityFn& p, const DensityFn& q, std::size_t d,
                                 const GridSpec& grid) {
  if (d == 0) throw DomainError("tv: dimension must be positive");
  if (d > 3) throw UnsupportedError("tv_density_vs_density: d > 3 is not supported");
  if (!(grid.upper > grid.lower) || grid.order == 0) throw DomainError("tv: bad grid");
  const std::size_t panels = grid.panels ? grid.panels : default_panels(d);
  const double fine = tv_grid(p, q, d, grid, panels);
  const double coarse = tv_grid(p, q, d, grid, std::max<std::size_t>(1, panels / 2));
  TvEstimate est;
  est.value = std::clamp(fine, 0.0, 2.0);
  est.method = "grid-quadrature";
  est.resolution = (grid.upper - grid.lower) / static_cast<double>(panels);
  est.error_estimate = std::abs(fine - coarse);
  return est;
}

TvEstimate tv_samples_vs_density(const Matrix& samples, const DensityFn& p,
                                  const HistogramSpec& spec) {
  if (samples.rows == 0) throw DomainError("tv_samples_vs_density: empty samples");
  const std::size_t d = samples.cols;
  if (d == 0) throw DomainError("tv_samples_vs_density: zero-dimensional samples");
  if (d > 4) throw UnsupportedError("tv_samples_vs_density: d > 4 is not supported");
  const double n = static_cast<double>(samples.rows);
  std::size_t bins = spec.bins_per_axis;
  if (bins == 0) {
    const double h = spec.bin_scale * std::pow(n, -1.0 / (static_cast<double>(d) + 2.0));
    bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(2.0 / h)));
  }
  const double width = 2.0 / static_cast<double>(bins);
  std::size_t cells = 1;
  for (std::size_t k = 0; k < d; ++k) cells *= bins;

  std::vector<double> counts(cells + 1, 0.0);  // last slot: outside the cube
  for (std::size_t i = 0; i < samples.rows; ++i) {
    const auto r = samples.row(i);
    std::size_t flat = 0;
    bool inside = true;
    for (std::size_t k = 0; k < d; ++k) {
      if (!(r[k] >= -1.0 && r[k] <= 1.0)) {
        inside = false;
        break;
      }
      const auto b = std::min(bins - 1, static_cast<std::size_t>((r[k] + 1.0) / width));
      flat = flat * bins + b;
    }
    counts[inside ? flat : cells] += 1.0;
  }

  const QuadratureRule& rule = gauss_legendre(spec.cell_order);
  const std::size_t q = rule.size();
  std::size_t nodes = 1;
  for (std::size_t k = 0; k < d; ++k) nodes *= q;
  std::vector<double> mass(cells, 0.0);
  parallel_for(cells, [&](std::size_t c) {
    std::vector<double> x(d);
    std::vector<double> lo(d);
    std::size_t rem = c;
    for (std::size_t k = d; k-- > 0;) {
      lo[k] = -1.0 + width * static_cast<double>(rem % bins);
      rem /= bins;
    }
    double acc = 0;
    for (std::size_t flat = 0; flat < nodes; ++flat) {
      std::size_t r = flat;
      double w = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t j = r % q;
        r /= q;
        x[k] = lo[k] + 0.5 * width * (rule.nodes[j] + 1.0);
        w *= 0.5 * width * rule.weights[j];
      }
      acc += w * p(x);
    }
    mass[c] = acc;
  });
  const double inside_mass = std::accumulate(mass.begin(), mass.end(), 0.0);
  const double outside_mass = std::max(0.0, 1.0 - inside_mass);

  double tv = 0, noise = 0;
  for (std::size_t c = 0; c <= cells; ++c) {
    const double pc = c < cells ? mass[c] : outside_mass;
    tv += std::abs(counts[c] / n - pc);
    noise += std::sqrt(std::max(0.0, pc * (1.0 - pc)) / n);
  }
  TvEstimate est;
  est.value = std::clamp(tv, 0.0, 2.0);
  est.method = "histogram";
  est.resolution = width;
  est.error_estimate = std::sqrt(2.0 / M_PI) * noise;
  est.note = "histogram TV lower-bounds the density TV up to sampling noise";
  return est;
}

W1Estimate w1_1d_exact(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("w1_1d_exact: empty sample set");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::size_t na = sa.size(), nb = sb.size();
  double acc = 0;
  if (na == nb) {
    for (std::size_t i = 0; i < na; ++i) acc += std::abs(sa[i] - sb[i]);
    acc /= static_cast<double>(na);
  } else {
    // Sweep the merged quantile breakpoints i/na and j/nb.
    std::size_t i = 0, j = 0;
    double u = 0;
    while (i < na && j < nb) {
      const std::size_t lhs = (i + 1) * nb, rhs = (j + 1) * na;
      const double next = lhs <= rhs ? static_cast<double>(i + 1) / static_cast<double>(na)
                                     : static_cast<double>(j + 1) / static_cast<double>(nb);
      acc += (next - u) * std::abs(sa[i] - sb[j]);
      u = next;
      if (lhs <= rhs) ++i;
      if (rhs <= lhs) ++j;
    }
  }
  return {acc, "exact-1d", 0.0, 0.0};
}

W1Estimate w1_sliced(const Matrix& a, const Matrix& b, std::size_t n_projections, Rng& rng) {
  if (a.cols != b.cols) throw DomainError("w1_sliced: dimension mismatch");
  if (a.cols < 2) throw DomainError("w1_sliced: requires d >= 2");
  if (a.rows == 0 || b.rows == 0) throw DomainError("w1_sliced: empty sample set");
  if (n_projections == 0) throw DomainError("w1_sliced: need at least one projection");
  const std::size_t d = a.cols;
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> dirs(n_projections, std::vector<double>(d));
  for (auto& th : dirs) {
    double norm = 0;
    do {
      norm = 0;
      for (auto& v : th) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0);
    norm = std::sqrt(norm);
    for (auto& v : th) v /= norm;
  }
  std::vector<double> values(n_projections);
  parallel_for(n_projections, [&](std::size_t k) {
    auto project = [&](const Matrix& m) {
      std::vector<double> out(m.rows);
      for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0;
        for (std::size_t l = 0; l < d; ++l) s += m(i, l) * dirs[k][l];
        out[i] = s;
      }
      return out;
    };
    values[k] = w1_1d_exact(project(a), project(b)).value;
  });
  const double p = static_cast<double>(n_projections);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / p;
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  W1Estimate est{mean, "sliced", p, 0.0};
  if (n_projections > 1) est.error_estimate = std::sqrt(var / (p - 1) / p);
  return est;
}

W1Estimate w1_small_assignment(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DomainError("w1_small_assignment: shapes must match");
  if (a.rows == 0 || a.rows > 8) throw DomainError("w1_small_assignment: need 1 <= n <= 8");
  const std::size_t n = a.rows;
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t l = 0; l < a.cols; ++l) s += (a(i, l) - b(j, l)) * (a(i, l) - b(j, l));
      cost[i * n + j] = std::sqrt(s);
    }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best / static_cast<double>(n), "small-n-assignment", static_cast<double>(n), 0.0};
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw DomainError("ks_statistic: empty samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double worst = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    worst = std::max({worst, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return worst;
}

IdentityReport score_identity_check(const std::vector<ScoreFn>& candidates,
                                    const DiffusedOracle& oracle, double t, std::size_t mc_n,
                                    std::uint64_t seed) {
  if (mc_n < 2) throw DomainError("score_identity_check: mc_n must be >= 2");
  const std::size_t d = oracle.dim();
  const auto [m, sigma] = m_sigma(oracle.schedule(), t);
  IdentityReport report;
  report.t = t;
  report.mc_n = mc_n;
  report.terms.resize(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    Rng rng = make_stream(seed, k);
    const Matrix x0 = oracle.sample_initial(mc_n, rng());
    std::normal_distribution<double> normal;
    std::vector<double> x(d), s(d), g(d);
    double sa = 0, sb = 0, sd = 0, sdd = 0;
    for (std::size_t i = 0; i < mc_n; ++i) {
      const auto r = x0.row(i);
      for (std::size_t l = 0; l < d; ++l) x[l] = m * r[l] + sigma * normal(rng);
      candidates[k](x, t, s);
      oracle.score(x, t, g);
      double a = 0, b = 0;
      for (std::size_t l = 0; l < d; ++l) {
        const double c = -(x[l] - m * r[l]) / (sigma * sigma);
        a += (s[l] - g[l]) * (s[l] - g[l]);
        b += (s[l] - c) * (s[l] - c);
      }
      sa += a;
      sb += b;
      sd += a - b;
      sdd += (a - b) * (a - b);
    }
    const double n = static_cast<double>(mc_n);
    IdentityTerm& term = report.terms[k];
    term.to_marginal = sa / n;
    term.to_conditional = sb / n;
    term.difference = sd / n;
    const double var = std::max(0.0, (sdd - sd * sd / n) / (n - 1));
    term.difference_se = std::sqrt(var / n);
  }
  for (std::size_t k = 0; k < report.terms.size(); ++k)
    for (std::size_t l = k + 1; l < report.terms.size(); ++l) {
      const auto& a = report.terms[k];
      const auto& b = report.terms[l];
      const double se = std::hypot(a.difference_se, b.difference_se);
      const double z = se > 0 ? std::abs(a.difference - b.difference) / se
                              : (a.difference == b.difference ? 0.0 : INFINITY);
      report.max_pairwise_z = std::max(report.max_pairwise_z, z);
    }
  report.consistent = report.max_pairwise_z <= 3.0;
  return report;
}

}  // namespace scorelab
