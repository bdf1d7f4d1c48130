#include <doctest.h>

#include <cmath>

#include "scorelab/io.hpp"
#include "scorelab/score_matching.hpp"

using namespace scorelab;

namespace {

const NoiseSchedule kSched = NoiseSchedule::constant(1.0);

const ScoreFn kZero = [](std::span<const double>, double, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
};

TrainPlan small_plan(std::size_t steps) {
  TrainPlan plan;
  plan.width = 16;
  plan.depth = 2;
  plan.window = TimeWindow(1e-2, 3.0);
  plan.steps = steps;
  plan.eval_every = 100;
  plan.batch_size = 128;
  plan.adam.learning_rate = 3e-3;
  plan.seed = 5;
  return plan;
}

}  // namespace

TEST_CASE("zero net loss is d / sigma^2 at a fixed time") {
  const Matrix data = sample(uniform_density(2), 2000, 1);
  const double t = 0.4;
  const TimeWindow w(t, t * (1 + 1e-12));
  Rng rng(3);
  const auto e = sm_loss(kZero, kSched, data, w, {20, true}, rng);
  const double expected = 2.0 / std::pow(kSched.sigma(t), 2);
  CHECK(std::abs(e.value - expected) < 3 * e.std_error);
  CHECK(e.std_error < 0.02 * expected);
}

TEST_CASE("oracle score beats the zero net on shared draws") {
  const Matrix data = sample(uniform_density(1), 2000, 2);
  const auto oracle = DiffusedOracle::uniform(1, kSched);
  const TimeWindow w(0.05, 2.0);
  Rng a(8), b(8);
  const double zero = sm_loss(kZero, kSched, data, w, {4, true}, a).value;
  const double orc = sm_loss(oracle.score_fn(), kSched, data, w, {4, true}, b).value;
  CHECK(orc < zero);
}

TEST_CASE("conditional score target gives zero loss on matched draws") {
  Matrix data(1, 1);
  data(0, 0) = 0.35;
  const double t = 0.3;
  const ScoreFn target = [&](std::span<const double> x, double tt, std::span<double> out) {
    const std::vector<double> x0 = {0.35};
    out[0] = conditional_score(kSched, x, x0, tt)[0];
  };
  Rng rng(1);
  const auto e = sm_loss(target, kSched, data, TimeWindow(t, t * (1 + 1e-12)), {10, false}, rng);
  CHECK(e.value < 1e-20);
}

TEST_CASE("sm_loss is unbiased for a frozen net") {
  const Matrix data = sample(uniform_density(1), 500, 3);
  const auto net = init_network(8, 2, 2, 1, 10.0, 4, kSched);
  const TimeWindow w(0.05, 2.0);
  Rng ref_rng(100);
  const auto ref = sm_loss(net.score_fn(), kSched, data, w, {2000, true}, ref_rng);
  double acc = 0, sq = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_stream(7, r);
    const double v = sm_loss(net.score_fn(), kSched, data, w, {1, false}, rng).value;
    acc += v;
    sq += v * v;
  }
  const double mean = acc / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - ref.value) < 3 * std::sqrt(se * se + ref.std_error * ref.std_error));
}

TEST_CASE("train: zero budget, determinism, and improvement over the zero net") {
  const Matrix data = sample(uniform_density(1), 1 << 14, 9);
  auto plan = small_plan(0);
  const auto init = train(plan, kSched, data);
  CHECK(init.net == init_network(plan.width, plan.depth, 2, 1, plan.trunc_b,
                                 mix_seed(plan.seed, 0), kSched));

  plan.steps = 1500;
  const auto a = train(plan, kSched, data);
  const auto b = train(plan, kSched, data);
  CHECK(checkpoint_to_json(a.net, {}).dump() == checkpoint_to_json(b.net, {}).dump());
  CHECK(a.log.front().step == 0);
  CHECK(std::isnan(a.log.front().train_loss));
  CHECK(a.step_losses.size() == plan.steps);

  const auto oracle = DiffusedOracle::uniform(1, kSched);
  const double t = kSched.time_for_sigma(0.5);
  Rng r1(2), r2(2);
  const double trained = score_l2_error(a.net.score_fn(), oracle, t, 20000, r1).value;
  const double zero = score_l2_error(kZero, oracle, t, 20000, r2).value;
  CHECK(trained * 5 < zero);
}

TEST_CASE("weak monotonicity flag") {
  std::vector<double> down, up;
  for (int i = 0; i < 200; ++i) {
    down.push_back(10.0 / (1 + i) + 0.01 * std::sin(i));
    up.push_back(1.0 + 0.05 * i);
  }
  CHECK(weakly_monotone(down));
  CHECK(!weakly_monotone(up));
}

TEST_CASE("time grid follows the dyadic rule") {
  const TimeWindow w(1e-4, 4.0);
  const auto g = make_time_grid(1 << 16, 2, 1, 1.0, w, {});
  const double t1 = std::pow(65536.0, -2.0 / (2.0 * 3.0));
  REQUIRE(g.boundaries.size() >= 3);
  CHECK(g.boundaries.front() == w.t_lo);
  CHECK(g.boundaries[1] == doctest::Approx(t1).epsilon(1e-12));
  CHECK(g.boundaries.back() == w.t_hi);
  for (std::size_t j = 1; j + 1 < g.boundaries.size(); ++j)
    CHECK(g.boundaries[j + 1] == doctest::Approx(std::min(2 * g.boundaries[j], w.t_hi)));
  CHECK(g.intervals() + 1 == g.boundaries.size());

  const auto one = single_interval_grid(w, {8, 2, 10.0});
  CHECK(one.intervals() == 1);
}

TEST_CASE("piecewise dispatch is left-closed") {
  std::vector<ScoreNetwork> nets;
  for (int j = 0; j < 3; ++j) nets.push_back(init_network(2, 1, 2, 1, 10.0, j, kSched));
  const PiecewiseScore s({0.1, 0.2, 0.4, 0.8}, nets);
  CHECK(s.interval_of(0.1) == 0);
  CHECK(s.interval_of(0.15) == 0);
  CHECK(s.interval_of(0.2) == 1);
  CHECK(s.interval_of(0.4) == 2);
  CHECK(s.interval_of(0.8) == 2);
  CHECK_THROWS(s.interval_of(0.05));
  CHECK_THROWS(s.interval_of(0.9));
}

TEST_CASE("piecewise training") {
  const Matrix data = sample(uniform_density(1), 1 << 12, 4);
  auto plan = small_plan(300);
  const auto single = train_piecewise(single_interval_grid(plan.window, {16, 2, 10.0}), plan,
                                      kSched, data);
  const auto global = train(plan, kSched, data);
  CHECK(single.score.nets().front() == global.net);

  PiecewiseScaling sc;
  sc.wl_scale = 32;
  plan.steps = 600;
  const auto grid = make_time_grid(data.rows, 1, 1, 1.0, plan.window, sc);
  const auto pw = train_piecewise(grid, plan, kSched, data);
  REQUIRE(pw.runs.size() == grid.intervals());
  for (std::size_t j = 0; j < grid.intervals(); ++j) {
    const TimeWindow w(grid.boundaries[j], grid.boundaries[j + 1]);
    Rng a(j), b(j);
    const double zero = sm_loss(kZero, kSched, data, w, {2, true}, a).value;
    const double fit = sm_loss(pw.runs[j].net.score_fn(), kSched, data, w, {2, true}, b).value;
    CHECK(fit < zero);
  }
}
