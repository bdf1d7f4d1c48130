#include <doctest.h>

#include <cmath>

#include "scorelab/distances.hpp"
#include "scorelab/reverse_sampler.hpp"

using namespace scorelab;

namespace {

const NoiseSchedule kSched = NoiseSchedule::constant(1.0);

ScoreFn constant_score(double c) {
  return [c](std::span<const double>, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), c);
  };
}

}  // namespace

TEST_CASE("standard normal is stationary under its oracle score") {
  const ScoreFn minus_x = [](std::span<const double> x, double, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -x[i];
  };
  SamplerConfig cfg;
  cfg.steps = 200;
  cfg.chains = 100000;
  cfg.window = TimeWindow(1e-3, 3.0);
  cfg.seed = 4;
  const auto r = reverse_sample(minus_x, 2, kSched, cfg);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto col = r.terminal.column(c);
    double m = 0, v = 0;
    for (double x : col) m += x;
    m /= col.size();
    for (double x : col) v += (x - m) * (x - m);
    v /= col.size();
    CHECK(std::abs(m) < 0.01);
    CHECK(v > 0.97);
    CHECK(v < 1.03);
  }
}

TEST_CASE("one Euler step by hand") {
  SamplerConfig cfg;
  cfg.steps = 1;
  cfg.chains = 3;
  cfg.window = TimeWindow(0.2, 0.7);
  cfg.record_chains = 3;
  const NoiseSchedule sched = NoiseSchedule::linear(0.5, 1.0);
  const auto a = reverse_sample(constant_score(0.0), 1, sched, cfg);
  const auto b = reverse_sample(constant_score(1.5), 1, sched, cfg);
  REQUIRE(a.times.size() == 2);
  CHECK(a.times[0] == 0.7);
  CHECK(a.times[1] == 0.2);
  const double beta = sched.beta(0.7), h = 0.5;
  for (std::size_t i = 0; i < 3; ++i) {
    const double y0 = a.trajectories(i, 0);
    CHECK(b.trajectories(i, 0) == y0);
    // Same noise: y1 = y0 + beta (y0 + 2 s) h + sqrt(2 beta h) z.
    const double z = (a.terminal(i, 0) - y0 - beta * y0 * h) / std::sqrt(2 * beta * h);
    CHECK(b.terminal(i, 0) ==
          doctest::Approx(y0 + beta * (y0 + 2 * 1.5) * h + std::sqrt(2 * beta * h) * z)
              .epsilon(1e-13));
  }
}

TEST_CASE("time grids") {
  SamplerConfig cfg;
  cfg.steps = 10;
  cfg.window = TimeWindow(1e-3, 5.0);
  const auto g = forward_time_grid(cfg);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 5.0);
  CHECK(g.back() == 1e-3);
  for (std::size_t k = 1; k + 1 < g.size(); ++k)
    CHECK(g[k] / g[k + 1] == doctest::Approx(g[0] / g[1]).epsilon(1e-9));
  cfg.grid = GridKind::Uniform;
  const auto u = forward_time_grid(cfg);
  for (std::size_t k = 0; k + 1 < u.size(); ++k)
    CHECK(u[k] - u[k + 1] == doctest::Approx((5.0 - 1e-3) / 10).epsilon(1e-9));
  cfg.grid = GridKind::Geometric;
  cfg.geometric_offset = 0.1;
  const auto o = forward_time_grid(cfg);
  CHECK((o[0] + 0.1) / (o[1] + 0.1) == doctest::Approx((o[5] + 0.1) / (o[6] + 0.1)).epsilon(1e-9));
}

TEST_CASE("oracle sampling of the uniform density and determinism") {
  const auto oracle = DiffusedOracle::uniform(1, kSched);
  SamplerConfig cfg;
  cfg.steps = 200;
  cfg.chains = 20000;
  cfg.window = TimeWindow(1e-3, 8.0);
  cfg.seed = 7;
  const auto r = reverse_sample(oracle.score_fn(), 1, kSched, cfg);
  const auto r2 = reverse_sample(oracle.score_fn(), 1, kSched, cfg);
  CHECK(r.terminal == r2.terminal);
  const double ks = ks_statistic(r.terminal.column(0), [&](double x) {
    const auto [m, s] = m_sigma(kSched, 1e-3);
    // CDF of p_t for uniform p0 by integrating the closed form.
    auto g = [&](double u) { return u * normal_cdf(u) + normal_pdf(u); };
    return s / (2 * m) * (g((x + m) / s) - g((x - m) / s));
  });
  CHECK(ks < 0.03);
  CHECK(fraction_outside(r.terminal) < 0.01);
}

TEST_CASE("piecewise sampling with one interval matches the global sampler") {
  const auto net = init_network(4, 2, 2, 1, 10.0, 3, kSched);
  SamplerConfig cfg;
  cfg.steps = 50;
  cfg.chains = 3000;
  cfg.window = TimeWindow(1e-2, 3.0);
  const PiecewiseScore pw({1e-2, 3.0}, {net});
  const auto a = reverse_sample(net.score_fn(), 1, kSched, cfg);
  const auto b = reverse_sample_piecewise(pw, 1, kSched, cfg);
  CHECK(a.terminal == b.terminal);

  // The audit sees every evaluation time in the interval that owns it.
  const PiecewiseScore three({1e-2, 0.1, 1.0, 3.0}, {net, net, net});
  const auto times = forward_time_grid(cfg);
  const auto audit = dispatch_audit(three, cfg);
  REQUIRE(audit.size() == cfg.steps);
  for (std::size_t k = 0; k < audit.size(); ++k) {
    const auto& bd = three.boundaries();
    CHECK(times[k] >= bd[audit[k]]);
    if (audit[k] + 1 < bd.size() - 1) CHECK(times[k] < bd[audit[k] + 1]);
  }
  cfg.window = TimeWindow(1e-3, 3.0);
  CHECK_THROWS(reverse_sample_piecewise(three, 1, kSched, cfg));
}

TEST_CASE("blow-up is reported with the step") {
  SamplerConfig cfg;
  cfg.steps = 100;
  cfg.chains = 10;
  const ScoreFn wild = [](std::span<const double> x, double, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1e200 * (1 + x[i] * x[i]);
  };
  CHECK_THROWS_AS(reverse_sample(wild, 1, kSched, cfg), BlowUpError);
}

TEST_CASE("clipping helpers") {
  Matrix m(3, 2);
  m.data = {0.1, 2.0, -1.6, 0.0, 0.5, 0.5};
  CHECK(fraction_outside(m) == doctest::Approx(2.0 / 3.0));
  const auto c = clip_to_cube(m);
  CHECK(c(0, 1) == 1.0);
  CHECK(c(1, 0) == -1.0);
}
