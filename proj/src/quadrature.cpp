#include "scorelab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "scorelab/common.hpp"

namespace scorelab {
namespace {

QuadratureRule build_legendre(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(M_PI * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / static_cast<double>(j);
      }
      dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged node for the weight.
    double p0 = 1.0, p1 = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / static_cast<double>(j);
    }
    dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

// Physicists' Hermite roots by Newton iteration on the orthonormal
// recurrence, then rescaled to the N(0,1) weight.
QuadratureRule build_hermite(std::size_t n) {
  const double pim4 = std::pow(M_PI, -0.25);
  std::vector<double> x(n), w(n);
  const std::size_t half = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double nd = static_cast<double>(n);
    if (i == 0)
      z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(nd, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 200; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jd + 1.0)) * p2 - std::sqrt(jd / (jd + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    // ascending order
    rule.nodes[i] = -x[i] * std::sqrt(2.0);
    rule.weights[i] = w[i] * inv_sqrt_pi;
  }
  return rule;
}

template <class Builder>
const QuadratureRule& cached(std::map<std::size_t, QuadratureRule>& cache,
                             std::mutex& mutex, std::size_t n, Builder build) {
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build(n)).first;
  return it->second;
}

double simpson_step(const std::function<double(double)>& f, double a, double b,
                    double fa, double fm, double fb, double whole, double tol,
                    int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) throw NumericError("adaptive_simpson: maximum depth reached");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

const QuadratureRule& gauss_legendre(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mutex;
  if (n == 0) throw DomainError("gauss_legendre: n must be positive");
  return cached(cache, mutex, n, build_legendre);
}

const QuadratureRule& gauss_hermite_normal(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mutex;
  if (n == 0) throw DomainError("gauss_hermite_normal: n must be positive");
  return cached(cache, mutex, n, build_hermite);
}

QuadratureRule composite_legendre(double a, double b, std::size_t panels,
                                  std::size_t order) {
  const QuadratureRule& base = gauss_legendre(order);
  QuadratureRule rule;
  rule.nodes.reserve(panels * order);
  rule.weights.reserve(panels * order);
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    for (std::size_t k = 0; k < order; ++k) {
      rule.nodes.push_back(lo + 0.5 * h * (base.nodes[k] + 1.0));
      rule.weights.push_back(0.5 * h * base.weights[k]);
    }
  }
  return rule;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace scorelab
