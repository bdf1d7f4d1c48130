#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace scorelab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [-1, 1]. Cached per n.
const QuadratureRule& gauss_legendre(std::size_t n);

/// n-point Gauss-Hermite rule for the standard normal weight, so that
/// sum_k w_k g(y_k) approximates E[g(Y)], Y ~ N(0, 1). Cached per n.
const QuadratureRule& gauss_hermite_normal(std::size_t n);

/// Composite Gauss-Legendre rule on [a, b] with `panels` equal panels of
/// `order` nodes each.
QuadratureRule composite_legendre(double a, double b, std::size_t panels,
                                  std::size_t order);

/// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 40);

}  // namespace scorelab
