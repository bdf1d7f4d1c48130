#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scorelab/distances.hpp"
#include "scorelab/io.hpp"

using namespace scorelab;

namespace {

const NoiseSchedule kSched = NoiseSchedule::constant(1.0);

Matrix random_points(std::size_t n, std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (auto& v : m.data) v = g(rng);
  return m;
}

double brute_force_1d(std::vector<double> a, const std::vector<double>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) c += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, c / a.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("grid TV") {
  const DensityFn u = [](std::span<const double> x) { return std::abs(x[0]) <= 1 ? 0.5 : 0.0; };
  const DensityFn half = [](std::span<const double> x) {
    return x[0] >= 0 && x[0] <= 1 ? 1.0 : 0.0;
  };
  const DensityFn left = [](std::span<const double> x) {
    return x[0] >= -1 && x[0] < 0 ? 1.0 : 0.0;
  };
  CHECK(tv_density_vs_density(u, u, 1).value == doctest::Approx(0.0));
  CHECK(tv_density_vs_density(u, half, 1).value == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(tv_density_vs_density(left, half, 1).value == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(tv_density_vs_density(half, u, 1).value ==
        doctest::Approx(tv_density_vs_density(u, half, 1).value));
  CHECK(tv_density_vs_density(u, half, 1).method == "grid-quadrature");
}

TEST_CASE("histogram TV") {
  const auto p = uniform_density(1);
  const DensityFn dens = [&](std::span<const double> x) { return p.density(x); };
  const Matrix s = sample(p, 100000, 3);
  const auto tv = tv_samples_vs_density(s, dens);
  CHECK(tv.value < 0.05);
  CHECK(tv.method == "histogram");
  CHECK(tv.error_estimate > 0);

  Matrix point(1000, 1, 0.123);
  double prev = 0;
  for (std::size_t bins : {10, 100, 1000}) {
    HistogramSpec spec;
    spec.bins_per_axis = bins;
    const double v = tv_samples_vs_density(point, dens, spec).value;
    CHECK(v == doctest::Approx(2.0 - 2.0 / bins).epsilon(1e-9));
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(tv_samples_vs_density(Matrix(0, 1), dens), DomainError);

  // Mass outside the cube counts as its own cell.
  Matrix outside(100, 1, 3.0);
  CHECK(tv_samples_vs_density(outside, dens).value == doctest::Approx(2.0));
}

TEST_CASE("1-D W1") {
  const std::vector<double> a = {0, 1};
  CHECK(w1_1d_exact(a, a).value == 0.0);
  CHECK(w1_1d_exact(std::vector<double>{0}, std::vector<double>{1}).value == 1.0);
  // Unequal sizes: quantile functions of {0, 1} and {0, 0.5, 1}.
  CHECK(w1_1d_exact(a, std::vector<double>{0, 0.5, 1}).value ==
        doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  Rng rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(6), y(6);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    CHECK(w1_1d_exact(x, y).value == doctest::Approx(brute_force_1d(x, y)).epsilon(1e-12));
    Matrix mx(6, 1), my(6, 1);
    mx.data = x;
    my.data = y;
    CHECK(w1_small_assignment(mx, my).value ==
          doctest::Approx(brute_force_1d(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("sliced W1") {
  Rng rng(2);
  const Matrix a = random_points(2000, 2, rng);
  CHECK(w1_sliced(a, a, 32, rng).value == 0.0);

  Matrix b = a;
  const double v[2] = {0.6, -0.8};
  for (std::size_t i = 0; i < b.rows; ++i)
    for (int c = 0; c < 2; ++c) b(i, c) += v[c];
  const auto w = w1_sliced(a, b, 4000, rng);
  CHECK(w.method == "sliced");
  CHECK(std::abs(w.value - 2.0 / M_PI) < 3 * w.error_estimate);

  for (int trial = 0; trial < 200; ++trial) {
    const Matrix x = random_points(5, 3, rng), y = random_points(5, 3, rng);
    CHECK(w1_sliced(x, y, 16, rng).value <= w1_small_assignment(x, y).value + 1e-12);
  }
  CHECK_THROWS(w1_small_assignment(random_points(9, 2, rng), random_points(9, 2, rng)));
}

TEST_CASE("W1 metric axioms") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::normal_distribution<double> g(0, 1 + trial % 3);
    std::vector<double> x(50), y(50), z(50);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng) + 0.5;
    for (auto& v : z) v = g(rng) - 0.3;
    const double xy = w1_1d_exact(x, y).value, yx = w1_1d_exact(y, x).value;
    CHECK(xy == yx);
    CHECK(xy <= w1_1d_exact(x, z).value + w1_1d_exact(z, y).value + 1e-12);
  }
}

TEST_CASE("KS statistic") {
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.9};
  const double ks = ks_statistic(s, [](double x) { return std::clamp(x, 0.0, 1.0); });
  CHECK(ks == doctest::Approx(0.45));
}

TEST_CASE("score identity check") {
  const auto oracle = DiffusedOracle::uniform(1, kSched);
  const double t = kSched.time_for_sigma(0.5);
  std::vector<ScoreFn> nets;
  for (int k = 0; k < 5; ++k) nets.push_back(init_network(8, 2, 2, 1, 10.0, 50 + k, kSched).score_fn());
  const auto r = score_identity_check(nets, oracle, t, 20000, 3);
  CHECK(r.consistent);
  CHECK(r.max_pairwise_z <= 3.0);

  const auto self = score_identity_check({oracle.score_fn()}, oracle, t, 20000, 3);
  CHECK(self.terms[0].to_marginal == 0.0);
  CHECK(self.terms[0].difference <= 0.0);

  const auto small = score_identity_check({nets[0]}, oracle, t, 20000, 5);
  const auto big = score_identity_check({nets[0]}, oracle, t, 80000, 5);
  const double ratio = small.terms[0].difference_se / big.terms[0].difference_se;
  CHECK(ratio > 1.0);
  CHECK(ratio < 4.0);
}
