#include <doctest.h>

#include <cmath>

#include "scorelab/decomposition_lab.hpp"

using namespace scorelab;

namespace {

const NoiseSchedule kSched = NoiseSchedule::constant(1.0);

SmoothComponent poly(std::vector<std::pair<double, std::pair<int, int>>> terms) {
  std::vector<SeriesTerm> out;
  for (const auto& [c, p] : terms)
    out.push_back({c, {Factor{FactorKind::Monomial, p.first}, Factor{FactorKind::Monomial, p.second}}});
  return SmoothComponent(2, out);
}

double time_for_m(double m) { return -std::log(m); }

}  // namespace

TEST_CASE("eval_G") {
  const ProductDensitySpec bilinear("b", 2, {{0, 1}}, {poly({{1.0, {0, 0}}, {0.1, {1, 1}}})});
  const double x[2] = {0.2, -0.4};
  const double t = time_for_m(0.8);
  CHECK(eval_G(1u, x, t, bilinear, kSched) == doctest::Approx(0.9875).epsilon(1e-13));
  CHECK(eval_G(0u, x, t, bilinear, kSched) == 1.0);
  const ProductDensitySpec one("c", 2, {{0, 1}}, {poly({{1.0, {0, 0}}})});
  CHECK(eval_G(1u, x, t, one, kSched) == 1.0);
  const double far[2] = {0.85, 0.0};
  CHECK_THROWS_AS(eval_G(1u, far, t, bilinear, kSched), DomainError);
}

TEST_CASE("eval_Delta") {
  const ProductDensitySpec linear("l", 2, {{0, 1}}, {poly({{1.0, {0, 0}}, {1.0, {1, 0}}, {1.0, {0, 1}}})});
  const double x[2] = {0.1, -0.3};
  CHECK(eval_Delta(0u, x, 0.2, linear, kSched) == 1.0);
  CHECK(std::abs(eval_Delta(1u, x, 0.2, linear, kSched)) < 1e-14);

  const auto smooth = shipped_spec("smooth-pair");
  double prev = INFINITY;
  for (double s : {0.1, 0.01, 0.001}) {
    const double v = std::abs(eval_Delta(1u, x, kSched.time_for_sigma(s), smooth, kSched));
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-5);

  IntegrationSpec checked;
  checked.check_nodes = 60;
  CHECK_NOTHROW(eval_Delta(1u, x, 0.1, smooth, kSched, checked));
  checked.check_nodes = 2;
  CHECK_THROWS_AS(eval_Delta(1u, x, 0.3, smooth, kSched, checked), NumericError);
}

TEST_CASE("decomposition identity") {
  const auto sigmas = std::vector<double>{0.01, 0.1, 0.3};
  const auto probes = make_probes(2, {-0.8, 0.0, 0.8}, sigmas, kSched);
  for (const char* name : {"smooth-pair", "bilinear"})
    CHECK(verify_identity(shipped_spec(name), kSched, probes).max_relative_residual < 1e-3);
  CHECK(verify_identity(shipped_spec("constant"), kSched, probes).max_relative_residual < 1e-10);

  // Hand expansion of prod (G + Delta) over the four subsets of |S| = 2.
  const auto spec = shipped_spec("smooth-pair-diag");
  REQUIRE(spec.size() == 2);
  const double x[2] = {0.3, -0.5};
  const double t = kSched.time_for_sigma(0.2);
  const double m = kSched.mean_decay(t);
  double hand = 0;
  for (Subset a = 0; a < 4; ++a)
    hand += eval_G(3u & ~a, x, t, spec, kSched) * eval_Delta(a, x, t, spec, kSched);
  hand /= m * m;
  CHECK(decomposition_sum(x, t, spec, kSched) == doctest::Approx(hand).epsilon(1e-14));
  CHECK(direct_p_t(x, t, spec, kSched) == doctest::Approx(hand).epsilon(1e-8));
}

TEST_CASE("smallness") {
  // f(u, v) = 1 + u is Lipschitz (1, 0): |A| = 1 ratio is sqrt(2/pi) / m.
  const ProductDensitySpec lin("l", 2, {{0, 1}}, {poly({{1.0, {0, 0}}, {1.0, {1, 0}}})});
  const auto probes = make_probes(2, {-0.5, 0.0, 0.5}, {0.001, 0.01, 0.1}, kSched);
  const auto r = verify_smallness(lin, kSched, 1u, probes);
  CHECK(r.within_certificate);
  CHECK(r.max_moment_ratio == doctest::Approx(1.0).epsilon(0.05));
  for (const auto& level : r.levels) {
    const double m = kSched.mean_decay(kSched.time_for_sigma(level.sigma));
    CHECK(level.max_abs_moment == doctest::Approx(std::sqrt(2 / M_PI) / m).epsilon(0.05));
  }

  const auto pair = shipped_spec("linear-shared");
  const auto sig = std::vector<double>{0.001, 0.003, 0.01, 0.03, 0.1};
  const auto r2 = verify_smallness(pair, kSched, 3u, make_probes(2, {-0.5, 0.5}, sig, kSched));
  CHECK(r2.slope == doctest::Approx(2.0).epsilon(0.05));

  const auto c = verify_smallness(shipped_spec("constant"), kSched, 1u, probes);
  for (const auto& level : c.levels) CHECK(level.max_abs_delta == 0.0);
}

TEST_CASE("delta refactorization") {
  const auto spec = shipped_spec("smooth-pair");
  const auto probes = make_probes(2, {-0.6, 0.2}, {0.01, 0.1}, kSched);
  CHECK(verify_delta_refactor(spec, kSched, 1u, probes).max_residual < 1e-8);
  const auto two = shipped_spec("smooth-pair-diag");
  CHECK(verify_delta_refactor(two, kSched, 3u, probes).max_residual < 1e-3);
  // |A| = 1: Delta = p_{t,A} - G_A.
  const double x[2] = {0.1, 0.4};
  const double t = kSched.time_for_sigma(0.1);
  CHECK(eval_Delta(1u, x, t, spec, kSched) ==
        doctest::Approx(eval_p_tB(1u, x, t, spec, kSched) - eval_G(1u, x, t, spec, kSched))
            .epsilon(1e-9));
}

TEST_CASE("Taylor refactorization") {
  const ProductDensitySpec quad("q", 2, {{0, 1}}, {poly({{1.0, {0, 0}}, {1.0, {2, 0}}})});
  const double xt[2] = {0.3, -0.2}, y[2] = {1.7, -0.4};
  const double st = 0.05;
  CHECK(taylor_residual(quad, 0, xt, st, y) == doctest::Approx(st * y[0] * y[0]).epsilon(1e-10));

  const auto probes = make_probes(2, {-0.5, 0.0, 0.5}, {0.05}, kSched);
  REQUIRE(probes.size() >= 3);
  const std::vector<Probe> three(probes.begin(), probes.begin() + 3);
  CHECK(verify_taylor_refactor(quad, kSched, 1u, three).max_residual < 1e-6);

  const auto lin = shipped_spec("linear");
  const auto r = verify_taylor_refactor(lin, kSched, 1u, probes);
  CHECK(r.max_residual < 1e-8);
  for (const auto& [s, v] : r.residual_by_sigma) CHECK(std::abs(v) < 1e-12);

  const auto smooth = shipped_spec("smooth-pair");
  const auto rs = verify_taylor_refactor(
      smooth, kSched, 1u, make_probes(2, {0.3}, {0.001, 0.01, 0.1}, kSched));
  CHECK(rs.max_residual < 1e-3);
  REQUIRE(rs.residual_by_sigma.size() == 3);
  CHECK(rs.residual_by_sigma[0].second < rs.residual_by_sigma[2].second);
}

TEST_CASE("spec validation") {
  CHECK_THROWS(ProductDensitySpec("x", 2, {{0, 2}}, {poly({{1.0, {0, 0}}})}));
  CHECK_THROWS(ProductDensitySpec("x", 2, {{0, 1}, {1, 0}},
                                  {poly({{1.0, {0, 0}}}), poly({{1.0, {0, 0}}})}));
  CHECK(subset_label(shipped_spec("linear-shared"), 3u) == "{(0,0) (0,1)}");
  CHECK(subset_size(5u) == 2);
  CHECK_THROWS(shipped_spec("nope"));
}
