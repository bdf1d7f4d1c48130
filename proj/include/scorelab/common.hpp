#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scorelab {

// Error taxonomy. Each stage throws the narrowest of these; bench code
// prefixes messages with the stage that failed.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RegionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step(step) {}
  std::size_t step;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Rows are points, columns coordinates.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::vector<double> column(std::size_t j) const;

  bool operator==(const Matrix&) const = default;
};

using Rng = std::mt19937_64;

/// Score field s(x, t) -> out, with x and out of the same dimension.
using ScoreFn =
    std::function<void(std::span<const double> x, double t, std::span<double> out)>;

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Generator for stream `stream` of the master seed `seed`.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Worker count: SCORELAB_THREADS if set, else hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) across worker threads. Task-to-thread mapping
/// is dynamic, so fn must only write to storage owned by task i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

double normal_cdf(double z);
double normal_pdf(double z);

/// Least-squares line fit y = a + b x with standard error of b.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  std::size_t n = 0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> v);

}  // namespace scorelab
