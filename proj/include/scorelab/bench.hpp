#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scorelab/common.hpp"
#include "scorelab/distances.hpp"
#include "scorelab/interaction_density.hpp"
#include "scorelab/io.hpp"
#include "scorelab/noise_schedule.hpp"
#include "scorelab/reverse_sampler.hpp"
#include "scorelab/score_matching.hpp"

namespace scorelab {

inline constexpr const char* kSchemaVersion = "scorelab-bench/1";

struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct StudyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DensityConfig {
  std::string kind = "uniform";  // "uniform" or "spec"
  std::string path;              // spec file, when kind == "spec" and spec is null
  Json spec;                     // inline spec
  std::size_t d = 1;             // uniform only
  std::size_t pad = 0;           // extra independent uniform coordinates
};

/// Capacity and window selection tied to the sample size:
///   W L = wl_scale * n^{d*/(2(2 beta + d*))},  T_lo = (W L)^{-kappa_lo},
///   T_hi = kappa_hi * log(W L).
struct RateScaling {
  bool enabled = false;
  double beta = 1.0;
  std::size_t d_star = 1;
  double kappa_lo = 6.0;
  double kappa_hi = 1.0;
  double wl_scale = 1.0;
  std::size_t depth = 2;
  std::size_t min_width = 2;
};

struct PiecewiseConfig {
  bool enabled = false;
  bool single_interval = false;  // degenerate P = 1 grid over the full window
  PiecewiseScaling scaling;
  std::size_t steps_per_interval = 0;  // 0: use the training step budget
};

struct MetricsConfig {
  bool tv = true;
  bool w1 = true;
  bool score_l2 = true;
  std::size_t marginal_coordinate = 0;
  double hist_bin_scale = 1.0;
  std::size_t projections = 64;
  std::size_t score_l2_mc = 20000;
};

enum class ScoreMode { Trained, Oracle, Zero };

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  std::string run_name = "run";
  bool persist = true;
  DensityConfig density;
  NoiseSchedule schedule = NoiseSchedule::constant(1.0);
  std::size_t n = 4096;
  TrainPlan train;
  double epochs = 0.0;  // > 0: steps = ceil(epochs * n_train / batch)
  std::size_t min_steps = 200;
  std::size_t max_steps = 1000000;
  RateScaling rate;
  PiecewiseConfig piecewise;
  SamplerConfig sampler;
  double chains_per_sample = 0.0;  // > 0: chains = max(chains, factor * n)
  MetricsConfig metrics;
  ScoreMode mode = ScoreMode::Trained;

  Json to_json() const;
  static RunConfig from_json(const Json& j);
  /// Hash of everything except output location and run name.
  std::string hash() const;
};

RunConfig load_run_config(const std::string& path);

/// Reference noise levels at which the score L2 error is recorded.
inline constexpr double kScoreSigmas[3] = {0.1, 0.5, 0.9};

struct RateRecord {
  std::string schema = kSchemaVersion;
  std::string code_version = kCodeVersion;
  std::string spec_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string mode;
  std::uint64_t d = 0, d_star = 0;
  double beta = 0;
  std::uint64_t n = 0, W = 0, L = 0;
  double B = 0;
  std::uint64_t P = 0;
  double t_lo = 0, t_hi = 0;
  std::uint64_t train_steps = 0, sampler_steps = 0, chains = 0;
  double tv = NAN;
  std::string tv_method;
  double tv_error = NAN, tv_clipped = NAN;
  double marginal_tv = NAN, marginal_tv_error = NAN;
  double w1 = NAN;
  std::string w1_method;
  double w1_error = NAN;
  double score_l2[3] = {NAN, NAN, NAN};
  double train_loss = NAN, val_loss = NAN;
  double frac_outside = NAN;
  double padded_ks = NAN;
  double wall_train_ms = 0, wall_sample_ms = 0, wall_total_ms = 0;
};

/// Equality on all fields, with NaN == NaN and wall-clock fields ignored.
bool same_metrics(const RateRecord& a, const RateRecord& b);

struct RunResult {
  RateRecord record;
  Matrix samples;
  std::vector<std::string> scaling_log;
};

/// Resolved training plan (after rate scaling and epoch budgets) plus log lines.
TrainPlan resolve_plan(const RunConfig& config, std::size_t d, std::vector<std::string>* log);

/// Density, oracle, data, training, reverse sampling and metrics.
/// Fully determined by the config. Errors are rethrown as StageError.
RunResult run_end_to_end(const RunConfig& config);

struct MetricFit {
  std::string metric;
  double slope = NAN;
  double slope_se = NAN;
  double target = NAN;
  bool target_in_ci = false;
};

struct RateStudyReport {
  std::vector<RateRecord> records;
  std::vector<std::uint64_t> ns;
  std::vector<double> median_tv, median_w1, median_score_l2;
  std::vector<MetricFit> fits;
  bool tv_strictly_decreasing = false;
  double band_lo = -0.55, band_hi = -0.15;
  bool tv_slope_in_band = false;
  std::string summary() const;
};

RateStudyReport run_rate_study(const RunConfig& base, const std::vector<std::size_t>& n_list,
                               const std::vector<std::uint64_t>& seeds,
                               std::size_t min_successes = 3);

/// Slope report from records grouped by n (median over seeds).
RateStudyReport summarize_rate_records(std::vector<RateRecord> records, double target_slope);

struct AdaptivityReport {
  std::vector<RateRecord> records;
  std::vector<std::uint64_t> ds;
  std::vector<double> median_marginal_tv;
  std::vector<double> median_padded_ks;
  double factor = 2.5;
  double worst_ratio = NAN;  // max over d of max(r, 1/r), r = value_d / value_{d_list[0]}
  bool pass = false;
  std::string summary() const;
};

AdaptivityReport run_adaptivity_study(const RunConfig& base, const std::vector<std::size_t>& d_list,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t min_successes = 3);

/// CSV with a fixed column order; empty input yields the header only.
std::string records_to_csv(const std::vector<RateRecord>& records);
std::vector<RateRecord> records_from_csv(const std::string& text);
void append_records(const std::string& path, const std::vector<RateRecord>& records);
std::vector<RateRecord> read_records(const std::string& path);
std::vector<std::string> record_columns();

/// Writes <stem>.csv and <stem>.txt; the summary includes fitted slopes.
void emit_report(const std::vector<RateRecord>& records, const std::string& stem,
                 const std::string& summary);

/// Two-sided 97.5% Student t quantile.
double t_quantile_975(std::size_t dof);

/// Applies SCORELAB_OUTPUT_DIR if set.
std::string effective_output_dir(const std::string& configured);

}  // namespace scorelab
