#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scorelab/bench.hpp"
#include "scorelab/decomposition_lab.hpp"
#include "scorelab/distances.hpp"
#include "scorelab/io.hpp"
#include "scorelab/reverse_sampler.hpp"
#include "scorelab/score_oracle.hpp"

namespace fs = std::filesystem;
using namespace scorelab;

namespace {

Matrix training_data(const RunConfig& config, const std::string& data_path,
                     InteractionDensity* density_out) {
  InteractionDensity density = config.density.kind == "uniform"
                                   ? uniform_density(config.density.d)
                                   : (config.density.spec.is_null()
                                          ? load_density(config.density.path)
                                          : density_from_json(config.density.spec));
  density = pad_with_uniform(density, config.density.pad);
  if (density_out) *density_out = density;
  if (!data_path.empty()) return read_samples(data_path);
  return sample(density, config.n, mix_seed(config.seed, 10));
}

void print_estimate(const char* label, double value, double err, const std::string& method) {
  std::printf("%-12s %.6f  (error %.2e, %s)\n", label, value, err, method.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scorelab: diffusion-model density estimation lab"};
  app.require_subcommand(1);

  // density normalize / sample
  auto* density = app.add_subcommand("density", "Density spec utilities");
  density->require_subcommand(1);
  std::string spec_path, out_path;
  double quad_tol = 1e-6;
  auto* normalize_cmd = density->add_subcommand("normalize", "Compute log Z and write the spec");
  normalize_cmd->add_option("--spec", spec_path, "Density spec (JSON)")->required();
  normalize_cmd->add_option("--out", out_path, "Output spec")->required();
  normalize_cmd->add_option("--tol", quad_tol, "Relative quadrature tolerance");

  std::size_t n = 1000;
  std::uint64_t seed = 1;
  auto* dsample_cmd = density->add_subcommand("sample", "Draw exact samples by rejection");
  dsample_cmd->add_option("--spec", spec_path, "Density spec (JSON)")->required();
  dsample_cmd->add_option("--n", n, "Sample count");
  dsample_cmd->add_option("--seed", seed, "Seed");
  dsample_cmd->add_option("--out", out_path, "Sample file (CSV)")->required();

  // train / train-piecewise
  std::string config_path, data_path, out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a global score network");
  train_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
  train_cmd->add_option("--data", data_path, "Training samples; default: draw from the config density");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* trainp_cmd = app.add_subcommand("train-piecewise", "Train per-interval score networks");
  trainp_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
  trainp_cmd->add_option("--data", data_path, "Training samples");
  trainp_cmd->add_option("--out", out_dir, "Output directory")->required();

  // sample
  std::string checkpoint_path, manifest_path, grid = "geometric";
  std::size_t chains = 10000, steps = 500;
  double t_lo = 0, t_hi = 0, offset = 0;
  bool oracle_uniform = false;
  std::size_t oracle_d = 1;
  auto* sample_cmd = app.add_subcommand("sample", "Reverse-SDE sampling from a score estimate");
  auto* ck = sample_cmd->add_option("--checkpoint", checkpoint_path, "Global checkpoint");
  auto* mf = sample_cmd->add_option("--manifest", manifest_path, "Piecewise manifest");
  auto* ou = sample_cmd->add_flag("--oracle-uniform", oracle_uniform, "Use the exact uniform score");
  ck->excludes(mf)->excludes(ou);
  mf->excludes(ou);
  sample_cmd->add_option("--dim", oracle_d, "Dimension for --oracle-uniform");
  sample_cmd->add_option("--chains", chains, "Number of chains");
  sample_cmd->add_option("--steps", steps, "Euler-Maruyama steps");
  sample_cmd->add_option("--grid", grid, "uniform or geometric")->check(CLI::IsMember({"uniform", "geometric"}));
  sample_cmd->add_option("--offset", offset, "Geometric grid offset");
  sample_cmd->add_option("--t-lo", t_lo, "Terminal forward time (default: from checkpoint)");
  sample_cmd->add_option("--t-hi", t_hi, "Initial forward time (default: from checkpoint)");
  sample_cmd->add_option("--seed", seed, "Seed");
  sample_cmd->add_option("--out", out_path, "Sample file")->required();

  // eval
  std::string samples_path;
  std::size_t uniform_d = 0, projections = 64;
  auto* eval_cmd = app.add_subcommand("eval", "Distances between samples and a density");
  eval_cmd->add_option("--samples", samples_path, "Sample file")->required();
  auto* es = eval_cmd->add_option("--spec", spec_path, "Reference density spec");
  eval_cmd->add_option("--uniform", uniform_d, "Reference: uniform on the cube of this dimension")
      ->excludes(es);
  eval_cmd->add_option("--projections", projections, "Sliced W1 projections");
  eval_cmd->add_option("--seed", seed, "Seed for reference samples and projections");

  // run
  auto* run_cmd = app.add_subcommand("run", "End-to-end pipeline from a config");
  run_cmd->add_option("--config", config_path, "Run config (JSON)")->required();

  // verify-decomposition
  auto* verify_cmd = app.add_subcommand("verify-decomposition", "Check the p_t decomposition identities");
  verify_cmd->add_option("--out", out_dir, "Directory for report.txt and probes.csv");

  // studies
  std::vector<std::size_t> n_list, d_list;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string stem;
  std::size_t min_ok = 3;
  auto* rate_cmd = app.add_subcommand("rate-study", "Error vs n with capacity scaling");
  rate_cmd->add_option("--config", config_path, "Base run config")->required();
  rate_cmd->add_option("--n", n_list, "Sample sizes")->required()->delimiter(',');
  rate_cmd->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  rate_cmd->add_option("--min-successes", min_ok, "Successful runs required per n");
  rate_cmd->add_option("--out", stem, "Report stem (writes .csv and .txt)")->required();

  auto* adapt_cmd = app.add_subcommand("adaptivity-study", "Marginal error vs ambient dimension");
  adapt_cmd->add_option("--config", config_path, "Base run config")->required();
  adapt_cmd->add_option("--d", d_list, "Ambient dimensions")->required()->delimiter(',');
  adapt_cmd->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  adapt_cmd->add_option("--min-successes", min_ok, "Successful runs required per d");
  adapt_cmd->add_option("--out", stem, "Report stem")->required();

  std::vector<std::string> inputs;
  double target = -1.0 / 3.0;
  auto* report_cmd = app.add_subcommand("report", "Merge record CSVs and fit slopes");
  report_cmd->add_option("--in", inputs, "Record CSV files")->required();
  report_cmd->add_option("--target-slope", target, "Reference slope for the TV fit");
  report_cmd->add_option("--out", stem, "Report stem")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*normalize_cmd) {
      QuadSpec q;
      q.rel_tol = quad_tol;
      const auto d = load_density(spec_path, q);
      save_density(out_path, d);
      std::printf("log_z=%.17g quad_tol=%.3g hash=%s\n", d.log_z(), d.quad_tol(),
                  density_hash(d).c_str());
    } else if (*dsample_cmd) {
      const auto d = load_density(spec_path);
      write_samples(out_path, sample(d, n, seed),
                    {{"seed", std::to_string(seed)}, {"density_hash", density_hash(d)}});
    } else if (*train_cmd || *trainp_cmd) {
      RunConfig config = load_run_config(config_path);
      InteractionDensity dens;
      const Matrix data = training_data(config, data_path, &dens);
      config.n = data.rows;
      std::vector<std::string> log;
      const TrainPlan plan = resolve_plan(config, data.cols, &log);
      for (const auto& line : log) std::printf("%s\n", line.c_str());
      fs::create_directories(out_dir);
      if (*train_cmd) {
        const auto result = train(plan, config.schedule, data);
        save_checkpoint((fs::path(out_dir) / "checkpoint.json").string(), result.net,
                        {plan.window.t_lo, plan.window.t_hi, plan.seed,
                         {{"best_step", result.best_step}, {"density_hash", density_hash(dens)}}});
        write_train_log((fs::path(out_dir) / "train_log.csv").string(), result.log);
        std::printf("best_step=%zu best_val_loss=%.6f weakly_monotone=%s\n", result.best_step,
                    result.best_val_loss, weakly_monotone(result.step_losses) ? "yes" : "no");
      } else {
        const TimeGrid g = config.piecewise.single_interval
                               ? single_interval_grid(plan.window, {plan.width, plan.depth, plan.trunc_b})
                               : make_time_grid(config.n, data.cols, config.rate.d_star,
                                                config.rate.beta, plan.window,
                                                config.piecewise.scaling);
        TrainPlan p = plan;
        if (config.piecewise.steps_per_interval > 0) p.steps = config.piecewise.steps_per_interval;
        const auto result = train_piecewise(g, p, config.schedule, data);
        save_piecewise(out_dir, result.score, plan.seed);
        for (std::size_t j = 0; j < result.runs.size(); ++j) {
          write_train_log((fs::path(out_dir) / ("train_log_" + std::to_string(j) + ".csv")).string(),
                          result.runs[j].log);
          std::printf("interval %zu [%.6g, %.6g) W=%zu L=%zu best_val_loss=%.6f\n", j,
                      g.boundaries[j], g.boundaries[j + 1], g.shapes[j].width, g.shapes[j].depth,
                      result.runs[j].best_val_loss);
        }
      }
    } else if (*sample_cmd) {
      SamplerConfig cfg;
      cfg.steps = steps;
      cfg.chains = chains;
      cfg.seed = seed;
      cfg.geometric_offset = offset;
      cfg.grid = grid == "uniform" ? GridKind::Uniform : GridKind::Geometric;
      std::string source;
      SampleResult result;
      auto window = [&](double lo, double hi) {
        return TimeWindow(t_lo > 0 ? t_lo : lo, t_hi > 0 ? t_hi : hi);
      };
      if (!checkpoint_path.empty()) {
        CheckpointMeta meta;
        const auto net = load_checkpoint(checkpoint_path, &meta);
        cfg.window = window(meta.t_lo, meta.t_hi);
        source = checkpoint_hash(net);
        result = reverse_sample(net.score_fn(), net.dim(), net.schedule(), cfg);
      } else if (!manifest_path.empty()) {
        const auto pw = load_piecewise(manifest_path);
        cfg.window = window(pw.boundaries().front(), pw.boundaries().back());
        std::string ids;
        for (const auto& net : pw.nets()) ids += checkpoint_hash(net);
        source = hex64(fnv1a(ids));
        result = reverse_sample_piecewise(pw, pw.nets().front().dim(),
                                          pw.nets().front().schedule(), cfg);
      } else if (oracle_uniform) {
        cfg.window = window(1e-3, 8.0);
        const auto oracle = DiffusedOracle::uniform(oracle_d, NoiseSchedule::constant(1.0));
        source = "oracle-uniform";
        result = reverse_sample(oracle.score_fn(), oracle_d, oracle.schedule(), cfg);
      } else {
        throw DomainError("sample: give --checkpoint, --manifest or --oracle-uniform");
      }
      write_samples(out_path, result.terminal,
                    {{"seed", std::to_string(seed)}, {"checkpoint_hash", source},
                     {"sampler", cfg.describe()}});
      std::printf("fraction outside [-1.5,1.5]^d: %.5f\n", fraction_outside(result.terminal));
    } else if (*eval_cmd) {
      const Matrix xs = read_samples(samples_path);
      const InteractionDensity dens = uniform_d > 0 ? uniform_density(uniform_d) : load_density(spec_path);
      if (dens.dim() != xs.cols) throw DomainError("eval: dimension mismatch");
      const DensityFn p = [&](std::span<const double> x) { return dens.density(x); };
      if (xs.cols <= 4) {
        const auto tv = tv_samples_vs_density(xs, p);
        print_estimate("tv", tv.value, tv.error_estimate, tv.method);
        const auto tvc = tv_samples_vs_density(clip_to_cube(xs), p);
        print_estimate("tv_clipped", tvc.value, tvc.error_estimate, tvc.method);
      }
      const Matrix ref = sample(dens, xs.rows, seed);
      if (xs.cols == 1) {
        const auto w = w1_1d_exact(xs.data, ref.data);
        print_estimate("w1", w.value, w.error_estimate, w.method);
      } else {
        Rng rng = make_stream(seed, 1);
        const auto w = w1_sliced(xs, ref, projections, rng);
        print_estimate("w1", w.value, w.error_estimate, w.method);
      }
      std::printf("%-12s %.6f\n", "outside_1.5", fraction_outside(xs));
    } else if (*run_cmd) {
      const RunConfig config = load_run_config(config_path);
      const auto result = run_end_to_end(config);
      for (const auto& line : result.scaling_log) std::printf("%s\n", line.c_str());
      std::printf("%s", records_to_csv({result.record}).c_str());
    } else if (*verify_cmd) {
      const auto report = run_decomposition_suite(NoiseSchedule::constant(1.0));
      const std::string text = format_suite_summary(report);
      std::printf("%s", text.c_str());
      if (!out_dir.empty()) {
        write_text((fs::path(out_dir) / "report.txt").string(), text);
        write_probe_csv((fs::path(out_dir) / "probes.csv").string(), report.rows);
      }
      return report.all_pass() ? 0 : 1;
    } else if (*rate_cmd) {
      const RunConfig base = load_run_config(config_path);
      const auto report = run_rate_study(base, n_list, seeds, min_ok);
      const std::string text = report.summary();
      emit_report(report.records, stem, text);
      std::printf("%s", text.c_str());
    } else if (*adapt_cmd) {
      const RunConfig base = load_run_config(config_path);
      const auto report = run_adaptivity_study(base, d_list, seeds, min_ok);
      const std::string text = report.summary();
      emit_report(report.records, stem, text);
      std::printf("%s", text.c_str());
    } else if (*report_cmd) {
      std::vector<RateRecord> all;
      for (const auto& path : inputs) {
        auto rs = read_records(path);
        all.insert(all.end(), rs.begin(), rs.end());
      }
      const auto report = summarize_rate_records(all, target);
      const std::string text = report.summary();
      emit_report(report.records, stem, text);
      std::printf("%s", text.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
