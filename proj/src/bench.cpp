#include "scorelab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "scorelab/score_oracle.hpp"

namespace scorelab {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* mode_name(ScoreMode m) {
  switch (m) {
    case ScoreMode::Trained: return "trained";
    case ScoreMode::Oracle: return "oracle";
    case ScoreMode::Zero: return "zero";
  }
  return "?";
}

ScoreMode mode_from(const std::string& s) {
  if (s == "trained") return ScoreMode::Trained;
  if (s == "oracle") return ScoreMode::Oracle;
  if (s == "zero") return ScoreMode::Zero;
  throw FormatError("unknown score mode: " + s);
}

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

InteractionDensity build_density(const DensityConfig& c) {
  InteractionDensity base;
  if (c.kind == "uniform") {
    base = uniform_density(c.d);
  } else if (c.kind == "spec") {
    base = c.spec.is_null() ? load_density(c.path) : density_from_json(c.spec);
  } else {
    throw FormatError("unknown density kind: " + c.kind);
  }
  return pad_with_uniform(base, c.pad);
}

std::optional<DiffusedOracle> build_oracle(const DensityConfig& c, const InteractionDensity& p,
                                           const NoiseSchedule& schedule) {
  if (c.kind == "uniform") return DiffusedOracle::uniform(p.dim(), schedule);
  try {
    return DiffusedOracle::quadrature(p, schedule);
  } catch (const UnsupportedError&) {
    return std::nullopt;
  }
}

}  // namespace

// Config ----------------------------------------------------------------------

Json RunConfig::to_json() const {
  Json density_json = {{"kind", density.kind}, {"d", density.d}, {"pad", density.pad}};
  if (!density.path.empty()) density_json["path"] = density.path;
  if (!density.spec.is_null()) density_json["spec"] = density.spec;
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"run_name", run_name},
      {"persist", persist},
      {"density", density_json},
      {"schedule", schedule_to_json(schedule)},
      {"n", n},
      {"mode", mode_name(mode)},
      {"train",
       {{"width", train.width},
        {"depth", train.depth},
        {"trunc_b", train.trunc_b},
        {"t_lo", train.window.t_lo},
        {"t_hi", train.window.t_hi},
        {"mc_time_draws", train.mc_time_draws},
        {"batch_size", train.batch_size},
        {"learning_rate", train.adam.learning_rate},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"epsilon", train.adam.epsilon},
        {"final_ratio", train.adam.final_ratio},
        {"steps", train.steps},
        {"eval_every", train.eval_every},
        {"val_fraction", train.val_fraction},
        {"val_draws", train.val_draws},
        {"val_max_points", train.val_max_points},
        {"epochs", epochs},
        {"min_steps", min_steps},
        {"max_steps", max_steps}}},
      {"rate",
       {{"enabled", rate.enabled},
        {"beta", rate.beta},
        {"d_star", rate.d_star},
        {"kappa_lo", rate.kappa_lo},
        {"kappa_hi", rate.kappa_hi},
        {"wl_scale", rate.wl_scale},
        {"depth", rate.depth},
        {"min_width", rate.min_width}}},
      {"piecewise",
       {{"enabled", piecewise.enabled},
        {"single_interval", piecewise.single_interval},
        {"wl_scale", piecewise.scaling.wl_scale},
        {"depth", piecewise.scaling.depth},
        {"min_width", piecewise.scaling.min_width},
        {"max_width", piecewise.scaling.max_width},
        {"trunc_b", piecewise.scaling.trunc_b},
        {"steps_per_interval", piecewise.steps_per_interval}}},
      {"sampler",
       {{"steps", sampler.steps},
        {"grid", sampler.grid == GridKind::Uniform ? "uniform" : "geometric"},
        {"offset", sampler.geometric_offset},
        {"chains", sampler.chains},
        {"chains_per_sample", chains_per_sample},
        {"record_chains", sampler.record_chains}}},
      {"metrics",
       {{"tv", metrics.tv},
        {"w1", metrics.w1},
        {"score_l2", metrics.score_l2},
        {"marginal_coordinate", metrics.marginal_coordinate},
        {"hist_bin_scale", metrics.hist_bin_scale},
        {"projections", metrics.projections},
        {"score_l2_mc", metrics.score_l2_mc}}}};
}

namespace {

// Rejects keys the default config does not know, one level into each section.
void check_keys(const Json& j, const Json& known, const std::string& where) {
  if (!j.is_object()) throw FormatError("run config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw FormatError("run config: unknown key " + where + key);
    if (where.empty() && key != "schedule" && value.is_object() && known.at(key).is_object())
      check_keys(value, known.at(key), key + ".");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  Json known = c.to_json();
  known["density"]["path"] = "";
  known["density"]["spec"] = Json::object();
  check_keys(j, known, "");
  try {
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.run_name = j.value("run_name", c.run_name);
    c.persist = j.value("persist", c.persist);
    c.n = j.value("n", c.n);
    c.mode = mode_from(j.value("mode", std::string("trained")));
    if (j.contains("density")) {
      const auto& d = j.at("density");
      c.density.kind = d.value("kind", c.density.kind);
      c.density.path = d.value("path", std::string());
      if (d.contains("spec")) c.density.spec = d.at("spec");
      c.density.d = d.value("d", c.density.d);
      c.density.pad = d.value("pad", c.density.pad);
    }
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      auto& p = c.train;
      p.width = t.value("width", p.width);
      p.depth = t.value("depth", p.depth);
      p.trunc_b = t.value("trunc_b", p.trunc_b);
      p.window = TimeWindow(t.value("t_lo", p.window.t_lo), t.value("t_hi", p.window.t_hi));
      p.mc_time_draws = t.value("mc_time_draws", p.mc_time_draws);
      p.batch_size = t.value("batch_size", p.batch_size);
      p.adam.learning_rate = t.value("learning_rate", p.adam.learning_rate);
      p.adam.beta1 = t.value("beta1", p.adam.beta1);
      p.adam.beta2 = t.value("beta2", p.adam.beta2);
      p.adam.epsilon = t.value("epsilon", p.adam.epsilon);
      p.adam.final_ratio = t.value("final_ratio", p.adam.final_ratio);
      p.steps = t.value("steps", p.steps);
      p.eval_every = t.value("eval_every", p.eval_every);
      p.val_fraction = t.value("val_fraction", p.val_fraction);
      p.val_draws = t.value("val_draws", p.val_draws);
      p.val_max_points = t.value("val_max_points", p.val_max_points);
      c.epochs = t.value("epochs", c.epochs);
      c.min_steps = t.value("min_steps", c.min_steps);
      c.max_steps = t.value("max_steps", c.max_steps);
    }
    if (j.contains("rate")) {
      const auto& r = j.at("rate");
      c.rate.enabled = r.value("enabled", c.rate.enabled);
      c.rate.beta = r.value("beta", c.rate.beta);
      c.rate.d_star = r.value("d_star", c.rate.d_star);
      c.rate.kappa_lo = r.value("kappa_lo", c.rate.kappa_lo);
      c.rate.kappa_hi = r.value("kappa_hi", c.rate.kappa_hi);
      c.rate.wl_scale = r.value("wl_scale", c.rate.wl_scale);
      c.rate.depth = r.value("depth", c.rate.depth);
      c.rate.min_width = r.value("min_width", c.rate.min_width);
    }
    if (j.contains("piecewise")) {
      const auto& p = j.at("piecewise");
      c.piecewise.enabled = p.value("enabled", c.piecewise.enabled);
      c.piecewise.single_interval = p.value("single_interval", c.piecewise.single_interval);
      auto& s = c.piecewise.scaling;
      s.wl_scale = p.value("wl_scale", s.wl_scale);
      s.depth = p.value("depth", s.depth);
      s.min_width = p.value("min_width", s.min_width);
      s.max_width = p.value("max_width", s.max_width);
      s.trunc_b = p.value("trunc_b", s.trunc_b);
      c.piecewise.steps_per_interval = p.value("steps_per_interval", c.piecewise.steps_per_interval);
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      c.sampler.steps = s.value("steps", c.sampler.steps);
      const auto grid = s.value("grid", std::string("geometric"));
      if (grid != "uniform" && grid != "geometric") throw FormatError("unknown grid: " + grid);
      c.sampler.grid = grid == "uniform" ? GridKind::Uniform : GridKind::Geometric;
      c.sampler.geometric_offset = s.value("offset", c.sampler.geometric_offset);
      c.sampler.chains = s.value("chains", c.sampler.chains);
      c.chains_per_sample = s.value("chains_per_sample", c.chains_per_sample);
      c.sampler.record_chains = s.value("record_chains", c.sampler.record_chains);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.tv = m.value("tv", c.metrics.tv);
      c.metrics.w1 = m.value("w1", c.metrics.w1);
      c.metrics.score_l2 = m.value("score_l2", c.metrics.score_l2);
      c.metrics.marginal_coordinate = m.value("marginal_coordinate", c.metrics.marginal_coordinate);
      c.metrics.hist_bin_scale = m.value("hist_bin_scale", c.metrics.hist_bin_scale);
      c.metrics.projections = m.value("projections", c.metrics.projections);
      c.metrics.score_l2_mc = m.value("score_l2_mc", c.metrics.score_l2_mc);
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("run config: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const {
  Json j = to_json();
  j.erase("output_dir");
  j.erase("run_name");
  j.erase("persist");
  return hex64(fnv1a(j.dump()));
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c = RunConfig::from_json(read_json(path));
  // Relative density paths resolve against the config file.
  if (!c.density.path.empty() && fs::path(c.density.path).is_relative())
    c.density.path = (fs::path(path).parent_path() / c.density.path).string();
  return c;
}

std::string effective_output_dir(const std::string& configured) {
  if (const char* env = std::getenv("SCORELAB_OUTPUT_DIR"); env && *env) return env;
  return configured;
}

// Plan resolution ---------------------------------------------------------------

TrainPlan resolve_plan(const RunConfig& config, std::size_t d, std::vector<std::string>* log) {
  TrainPlan plan = config.train;
  plan.seed = mix_seed(config.seed, 11);
  auto note = [&](const std::string& s) {
    if (log) log->push_back(s);
  };
  if (config.rate.enabled) {
    const RateScaling& r = config.rate;
    const double ds = static_cast<double>(r.d_star);
    const double exponent = ds / (2.0 * (2.0 * r.beta + ds));
    const double target = std::pow(static_cast<double>(config.n), exponent);
    plan.depth = r.depth;
    plan.width = std::max<std::size_t>(
        r.min_width,
        static_cast<std::size_t>(std::llround(r.wl_scale * target / static_cast<double>(r.depth))));
    const double wl = static_cast<double>(plan.width * plan.depth);
    const double t_lo = std::pow(wl, -r.kappa_lo);
    const double t_hi = r.kappa_hi * std::log(wl);
    if (!(t_hi > t_lo)) throw DomainError("rate scaling: T_hi <= T_lo; raise wl_scale or kappa_hi");
    plan.window = TimeWindow(t_lo, t_hi);
    note("scaling: n=" + std::to_string(config.n) + " d=" + std::to_string(d) +
         " d*=" + std::to_string(r.d_star) + " beta=" + num(r.beta));
    note("scaling: WL=" + num(wl) + " (W=" + std::to_string(plan.width) + ", L=" +
         std::to_string(plan.depth) + ") target wl_scale*n^" + num(exponent) + "=" +
         num(r.wl_scale * target) + " ratio=" + num(wl / (r.wl_scale * target)));
    note("scaling: T_lo=(WL)^-" + num(r.kappa_lo) + "=" + num(t_lo) + " T_hi=" +
         num(r.kappa_hi) + "*log(WL)=" + num(t_hi));
  }
  if (config.epochs > 0) {
    const double n_train = static_cast<double>(config.n) * (1.0 - plan.val_fraction);
    const auto steps = static_cast<std::size_t>(
        std::ceil(config.epochs * n_train / static_cast<double>(plan.batch_size)));
    plan.steps = std::clamp(steps, config.min_steps, config.max_steps);
    note("budget: epochs=" + num(config.epochs) + " steps=" + std::to_string(plan.steps));
  }
  return plan;
}

// End-to-end ----------------------------------------------------------------------

RunResult run_end_to_end(const RunConfig& config) {
  const auto t_start = Clock::now();
  RunResult result;
  RateRecord& rec = result.record;
  auto& log = result.scaling_log;

  const InteractionDensity density = staged("density", [&] { return build_density(config.density); });
  const std::size_t d = density.dim();
  const auto oracle = staged("oracle", [&] { return build_oracle(config.density, density, config.schedule); });
  const TrainPlan plan = staged("plan", [&] { return resolve_plan(config, d, &log); });

  rec.spec_hash = density_hash(density);
  rec.config_hash = config.hash();
  rec.seed = config.seed;
  rec.mode = mode_name(config.mode);
  rec.d = d;
  rec.d_star = density.cliques().d_star();
  rec.beta = config.rate.beta;
  rec.n = config.n;
  rec.W = plan.width;
  rec.L = plan.depth;
  rec.B = plan.trunc_b;
  rec.P = 1;
  rec.t_lo = plan.window.t_lo;
  rec.t_hi = plan.window.t_hi;
  rec.train_steps = config.mode == ScoreMode::Trained ? plan.steps : 0;

  const std::string out_dir =
      (fs::path(effective_output_dir(config.output_dir)) / config.run_name).string();

  const Matrix data = staged("sample", [&] { return sample(density, config.n, mix_seed(config.seed, 10)); });

  const auto t_train = Clock::now();
  ScoreFn score;
  std::string checkpoint_id = "none";
  staged("train", [&] {
    if (config.mode == ScoreMode::Oracle) {
      if (!oracle) throw UnsupportedError("no oracle available for this density");
      score = oracle->score_fn();
      checkpoint_id = "oracle";
    } else if (config.mode == ScoreMode::Zero) {
      score = [](std::span<const double>, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
      };
      checkpoint_id = "zero";
    } else if (config.piecewise.enabled) {
      const TimeGrid grid =
          config.piecewise.single_interval
              ? single_interval_grid(plan.window, {plan.width, plan.depth, plan.trunc_b})
              : make_time_grid(config.n, d, config.rate.d_star, config.rate.beta, plan.window,
                               config.piecewise.scaling);
      const double ds = static_cast<double>(config.rate.d_star);
      log.push_back("grid: P=" + std::to_string(grid.intervals()) + " floor(log2(T_hi/T_lo))+1=" +
                    std::to_string(static_cast<std::size_t>(
                        std::floor(std::log2(plan.window.t_hi / plan.window.t_lo))) + 1) +
                    " t1=" + num(grid.boundaries.size() > 1 ? grid.boundaries[1] : NAN) +
                    " n^(-2d*/(d(2beta+d*)))=" +
                    num(std::pow(static_cast<double>(config.n),
                                 -2.0 * ds / (static_cast<double>(d) * (2.0 * config.rate.beta + ds)))));
      for (std::size_t j = 0; j < grid.intervals(); ++j)
        log.push_back("grid: [" + num(grid.boundaries[j]) + ", " + num(grid.boundaries[j + 1]) +
                      ") W=" + std::to_string(grid.shapes[j].width) +
                      " L=" + std::to_string(grid.shapes[j].depth));
      TrainPlan p = plan;
      if (config.piecewise.steps_per_interval > 0) p.steps = config.piecewise.steps_per_interval;
      auto trained = train_piecewise(grid, p, config.schedule, data);
      rec.P = grid.intervals();
      double tl = 0, vl = 0;
      for (const auto& r : trained.runs) {
        tl += r.log.back().train_loss;
        vl += r.best_val_loss;
      }
      rec.train_loss = tl / static_cast<double>(trained.runs.size());
      rec.val_loss = vl / static_cast<double>(trained.runs.size());
      std::string ids;
      for (const auto& net : trained.score.nets()) ids += checkpoint_hash(net);
      checkpoint_id = hex64(fnv1a(ids));
      if (config.persist) {
        save_piecewise((fs::path(out_dir) / "piecewise").string(), trained.score, plan.seed);
        for (std::size_t j = 0; j < trained.runs.size(); ++j)
          write_train_log((fs::path(out_dir) / "piecewise" /
                           ("train_log_" + std::to_string(j) + ".csv")).string(),
                          trained.runs[j].log);
      }
      score = trained.score.score_fn();
    } else {
      auto trained = train(plan, config.schedule, data);
      rec.train_loss = trained.log.back().train_loss;
      rec.val_loss = trained.best_val_loss;
      checkpoint_id = checkpoint_hash(trained.net);
      if (config.persist) {
        save_checkpoint((fs::path(out_dir) / "checkpoint.json").string(), trained.net,
                        {plan.window.t_lo, plan.window.t_hi, plan.seed,
                         {{"best_step", trained.best_step}, {"steps", plan.steps}}});
        write_train_log((fs::path(out_dir) / "train_log.csv").string(), trained.log);
      }
      score = trained.net.score_fn();
    }
  });
  rec.wall_train_ms = ms_since(t_train);

  SamplerConfig scfg = config.sampler;
  scfg.window = plan.window;
  scfg.seed = mix_seed(config.seed, 12);
  if (config.chains_per_sample > 0)
    scfg.chains = std::max(scfg.chains, static_cast<std::size_t>(std::llround(
                                            config.chains_per_sample * static_cast<double>(config.n))));
  rec.sampler_steps = scfg.steps;
  rec.chains = scfg.chains;
  const auto t_sample = Clock::now();
  result.samples = staged("reverse-sample", [&] {
    return reverse_sample(score, d, config.schedule, scfg).terminal;
  });
  rec.wall_sample_ms = ms_since(t_sample);

  staged("metrics", [&] {
    const Matrix& xs = result.samples;
    rec.frac_outside = fraction_outside(xs, 1.5);
    const DensityFn p = [&](std::span<const double> x) { return density.density(x); };
    HistogramSpec hist;
    hist.bin_scale = config.metrics.hist_bin_scale;
    if (config.metrics.tv && d <= 4) {
      const TvEstimate tv = tv_samples_vs_density(xs, p, hist);
      rec.tv = tv.value;
      rec.tv_method = tv.method;
      rec.tv_error = tv.error_estimate;
      rec.tv_clipped = tv_samples_vs_density(clip_to_cube(xs), p, hist).value;
    }
    const std::size_t c = config.metrics.marginal_coordinate;
    if (config.metrics.tv && c < d && d <= 4) {
      Matrix col(xs.rows, 1);
      for (std::size_t i = 0; i < xs.rows; ++i) col.data[i] = xs(i, c);
      const DensityFn marginal = [&](std::span<const double> x) {
        if (d == 1) return density.density(x);
        const double g[1] = {x[0]};
        return marginal_1d(density, c, g)[0];
      };
      const TvEstimate tv = tv_samples_vs_density(col, marginal, hist);
      rec.marginal_tv = tv.value;
      rec.marginal_tv_error = tv.error_estimate;
    }
    if (config.density.pad > 0) {
      rec.padded_ks = ks_statistic(xs.column(d - 1), [](double x) {
        return std::clamp((x + 1.0) / 2.0, 0.0, 1.0);
      });
    }
    if (config.metrics.w1) {
      const Matrix ref = sample(density, xs.rows, mix_seed(config.seed, 13));
      if (d == 1) {
        const W1Estimate w = w1_1d_exact(xs.data, ref.data);
        rec.w1 = w.value;
        rec.w1_method = w.method;
        rec.w1_error = w.error_estimate;
      } else {
        Rng rng = make_stream(config.seed, 14);
        const W1Estimate w = w1_sliced(xs, ref, config.metrics.projections, rng);
        rec.w1 = w.value;
        rec.w1_method = w.method;
        rec.w1_error = w.error_estimate;
      }
    }
    if (config.metrics.score_l2 && oracle) {
      Rng rng = make_stream(config.seed, 15);
      for (int k = 0; k < 3; ++k) {
        const double t = config.schedule.time_for_sigma(kScoreSigmas[k]);
        if (t < plan.window.t_lo || t > plan.window.t_hi) continue;
        rec.score_l2[k] = score_l2_error(score, *oracle, t, config.metrics.score_l2_mc, rng).value;
      }
    }
  });

  rec.wall_total_ms = ms_since(t_start);
  if (config.persist) {
    staged("persist", [&] {
      write_json((fs::path(out_dir) / "config.json").string(), config.to_json());
      save_density((fs::path(out_dir) / "density.json").string(), density);
      write_samples((fs::path(out_dir) / "data.csv").string(), data,
                    {{"seed", std::to_string(mix_seed(config.seed, 10))},
                     {"density_hash", rec.spec_hash}});
      write_samples((fs::path(out_dir) / "samples.csv").string(), result.samples,
                    {{"seed", std::to_string(scfg.seed)},
                     {"density_hash", rec.spec_hash},
                     {"checkpoint_hash", checkpoint_id},
                     {"sampler", scfg.describe()},
                     {"config_hash", rec.config_hash}});
      std::string text;
      for (const auto& line : log) text += line + "\n";
      write_text((fs::path(out_dir) / "scaling.log").string(), text);
      write_text((fs::path(out_dir) / "record.csv").string(), records_to_csv({rec}));
    });
  }
  return result;
}

// Records ---------------------------------------------------------------------------

namespace {

struct Column {
  const char* name;
  std::function<std::string(const RateRecord&)> get;
  std::function<void(RateRecord&, const std::string&)> set;
};

double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return NAN;
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw FormatError("bad number: " + s);
  return v;
}

#define STR_COL(f) \
  Column { #f, [](const RateRecord& r) { return r.f; }, [](RateRecord& r, const std::string& s) { r.f = s; } }
#define U64_COL(f)                                                   \
  Column {                                                           \
    #f, [](const RateRecord& r) { return std::to_string(r.f); },     \
        [](RateRecord& r, const std::string& s) { r.f = std::stoull(s); } \
  }
#define DBL_COL(f)                                                   \
  Column {                                                           \
    #f, [](const RateRecord& r) { return num(r.f); },                \
        [](RateRecord& r, const std::string& s) { r.f = parse_double(s); } \
  }

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      STR_COL(schema),     STR_COL(code_version), STR_COL(spec_hash),    STR_COL(config_hash),
      U64_COL(seed),       STR_COL(mode),         U64_COL(d),            U64_COL(d_star),
      DBL_COL(beta),       U64_COL(n),            U64_COL(W),            U64_COL(L),
      DBL_COL(B),          U64_COL(P),            DBL_COL(t_lo),         DBL_COL(t_hi),
      U64_COL(train_steps), U64_COL(sampler_steps), U64_COL(chains),     DBL_COL(tv),
      STR_COL(tv_method),  DBL_COL(tv_error),     DBL_COL(tv_clipped),   DBL_COL(marginal_tv),
      DBL_COL(marginal_tv_error), DBL_COL(w1),    STR_COL(w1_method),    DBL_COL(w1_error),
      Column{"score_l2_sigma_0.1", [](const RateRecord& r) { return num(r.score_l2[0]); },
             [](RateRecord& r, const std::string& s) { r.score_l2[0] = parse_double(s); }},
      Column{"score_l2_sigma_0.5", [](const RateRecord& r) { return num(r.score_l2[1]); },
             [](RateRecord& r, const std::string& s) { r.score_l2[1] = parse_double(s); }},
      Column{"score_l2_sigma_0.9", [](const RateRecord& r) { return num(r.score_l2[2]); },
             [](RateRecord& r, const std::string& s) { r.score_l2[2] = parse_double(s); }},
      DBL_COL(train_loss), DBL_COL(val_loss),     DBL_COL(frac_outside), DBL_COL(padded_ks),
      DBL_COL(wall_train_ms), DBL_COL(wall_sample_ms), DBL_COL(wall_total_ms)};
  return cols;
}

#undef STR_COL
#undef U64_COL
#undef DBL_COL

std::string header_line() {
  std::string h;
  for (const auto& c : columns()) h += (h.empty() ? "" : ",") + std::string(c.name);
  return h;
}

}  // namespace

std::vector<std::string> record_columns() {
  std::vector<std::string> out;
  for (const auto& c : columns()) out.emplace_back(c.name);
  return out;
}

std::string records_to_csv(const std::vector<RateRecord>& records) {
  std::string out = header_line() + "\n";
  for (const auto& r : records) {
    bool first = true;
    for (const auto& c : columns()) {
      if (!first) out += ',';
      out += c.get(r);
      first = false;
    }
    out += '\n';
  }
  return out;
}

std::vector<RateRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("report: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header_line()) throw FormatError("report: schema mismatch in header");
  std::vector<RateRecord> out;
  const auto& cols = columns();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != cols.size()) throw FormatError("report: wrong number of cells in row");
    RateRecord r;
    try {
      for (std::size_t k = 0; k < cols.size(); ++k) cols[k].set(r, cells[k]);
    } catch (const std::invalid_argument&) {
      throw FormatError("report: unparsable cell in row");
    } catch (const std::out_of_range&) {
      throw FormatError("report: numeric cell out of range");
    }
    if (r.schema != kSchemaVersion) throw FormatError("report: unknown schema " + r.schema);
    out.push_back(std::move(r));
  }
  return out;
}

void append_records(const std::string& path, const std::vector<RateRecord>& records) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != header_line()) throw FormatError(path + ": schema mismatch in header");
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot append to " + path);
  std::string csv = records_to_csv(records);
  if (!fresh) csv.erase(0, csv.find('\n') + 1);
  out << csv;
}

std::vector<RateRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return records_from_csv(ss.str());
}

bool same_metrics(const RateRecord& a, const RateRecord& b) {
  RateRecord x = a, y = b;
  x.wall_train_ms = x.wall_sample_ms = x.wall_total_ms = 0;
  y.wall_train_ms = y.wall_sample_ms = y.wall_total_ms = 0;
  return records_to_csv({x}) == records_to_csv({y});
}

void emit_report(const std::vector<RateRecord>& records, const std::string& stem,
                 const std::string& summary) {
  write_text(stem + ".csv", records_to_csv(records));
  write_text(stem + ".txt", summary);
}

double t_quantile_975(std::size_t dof) {
  if (dof == 0) return INFINITY;
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

// Studies -------------------------------------------------------------------------

namespace {

MetricFit fit_metric(const std::string& name, const std::vector<std::uint64_t>& ns,
                     const std::vector<double>& values, double target) {
  MetricFit fit;
  fit.metric = name;
  fit.target = target;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (std::isfinite(values[i]) && values[i] > 0) {
      lx.push_back(std::log(static_cast<double>(ns[i])));
      ly.push_back(std::log(values[i]));
    }
  if (lx.size() < 2) return fit;
  const LineFit lf = fit_line(lx, ly);
  fit.slope = lf.slope;
  fit.slope_se = lf.slope_se;
  if (std::isfinite(target) && lx.size() > 2) {
    const double half = t_quantile_975(lx.size() - 2) * lf.slope_se;
    fit.target_in_ci = std::abs(lf.slope - target) <= half;
  }
  return fit;
}

double finite_median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  return v.empty() ? NAN : median(std::move(v));
}

std::string fmt_line(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

}  // namespace

RateStudyReport summarize_rate_records(std::vector<RateRecord> records, double target_slope) {
  RateStudyReport report;
  std::map<std::uint64_t, std::vector<const RateRecord*>> by_n;
  for (const auto& r : records) by_n[r.n].push_back(&r);
  for (const auto& [n, rs] : by_n) {
    std::vector<double> tv, w1, sl;
    for (const auto* r : rs) {
      tv.push_back(r->tv);
      w1.push_back(r->w1);
      sl.push_back(r->score_l2[1]);
    }
    report.ns.push_back(n);
    report.median_tv.push_back(finite_median(tv));
    report.median_w1.push_back(finite_median(w1));
    report.median_score_l2.push_back(finite_median(sl));
  }
  report.fits.push_back(fit_metric("tv", report.ns, report.median_tv, target_slope));
  report.fits.push_back(fit_metric("w1", report.ns, report.median_w1, NAN));
  report.fits.push_back(fit_metric("score_l2_sigma_0.5", report.ns, report.median_score_l2, NAN));
  report.tv_strictly_decreasing = report.ns.size() >= 2;
  for (std::size_t i = 1; i < report.median_tv.size(); ++i)
    if (!(report.median_tv[i] < report.median_tv[i - 1])) report.tv_strictly_decreasing = false;
  const double s = report.fits[0].slope;
  report.tv_slope_in_band = std::isfinite(s) && s >= report.band_lo && s <= report.band_hi;
  report.records = std::move(records);
  return report;
}

std::string RateStudyReport::summary() const {
  std::string out = "rate study\n";
  for (std::size_t i = 0; i < ns.size(); ++i)
    out += fmt_line("  n=%-8.0f median_tv=%.5f median_w1=%.5f median_score_l2(0.5)=%.5f\n",
                    static_cast<double>(ns[i]), median_tv[i], median_w1[i], median_score_l2[i]);
  for (const auto& f : fits) {
    out += "  fit " + f.metric +
           fmt_line(": slope=%.4f se=%.4f target=%.4f", f.slope, f.slope_se, f.target) +
           (std::isfinite(f.target) ? (f.target_in_ci ? " target_in_95ci=yes" : " target_in_95ci=no")
                                    : "") +
           "\n";
  }
  out += std::string("  tv strictly decreasing: ") + (tv_strictly_decreasing ? "yes" : "no") + "\n";
  out += fmt_line("  tv slope in [%.2f, %.2f]: ", band_lo, band_hi) +
         (tv_slope_in_band ? "yes" : "no") + "\n";
  return out;
}

RateStudyReport run_rate_study(const RunConfig& base, const std::vector<std::size_t>& n_list,
                               const std::vector<std::uint64_t>& seeds, std::size_t min_successes) {
  if (n_list.size() < 2) throw StudyError("rate study: need at least two sample sizes");
  std::vector<RateRecord> records;
  for (std::size_t n : n_list) {
    std::size_t ok = 0;
    std::string last_error;
    for (std::uint64_t seed : seeds) {
      RunConfig c = base;
      c.n = n;
      c.seed = seed;
      c.rate.enabled = true;
      c.run_name = base.run_name + "/n" + std::to_string(n) + "_s" + std::to_string(seed);
      try {
        records.push_back(run_end_to_end(c).record);
        ++ok;
      } catch (const StageError& e) {
        last_error = e.what();
      }
    }
    if (ok < min_successes)
      throw StudyError("rate study: only " + std::to_string(ok) + " successful runs at n=" +
                       std::to_string(n) + (last_error.empty() ? "" : " (" + last_error + ")"));
  }
  const double target = -base.rate.beta / (2.0 * base.rate.beta + static_cast<double>(base.rate.d_star));
  return summarize_rate_records(std::move(records), target);
}

std::string AdaptivityReport::summary() const {
  std::string out = "adaptivity study\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    out += fmt_line("  d=%-3.0f median_marginal_tv=%.5f median_padded_ks=%.5f\n",
                    static_cast<double>(ds[i]), median_marginal_tv[i], median_padded_ks[i]);
  out += fmt_line("  worst ratio vs first d: %.4f (allowed %.2f): ", worst_ratio, factor) +
         (pass ? "pass" : "fail") + "\n";
  return out;
}

AdaptivityReport run_adaptivity_study(const RunConfig& base, const std::vector<std::size_t>& d_list,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t min_successes) {
  if (d_list.empty()) throw StudyError("adaptivity study: empty dimension list");
  const std::size_t d_base = build_density(DensityConfig{base.density.kind, base.density.path,
                                                         base.density.spec, base.density.d, 0})
                                 .dim();
  AdaptivityReport report;
  for (std::size_t d : d_list) {
    if (d < d_base) throw StudyError("adaptivity study: d below the base density dimension");
    std::size_t ok = 0;
    std::string last_error;
    std::vector<double> tv, ks;
    for (std::uint64_t seed : seeds) {
      RunConfig c = base;
      c.seed = seed;
      c.density.pad = d - d_base;
      c.metrics.marginal_coordinate = 0;
      c.run_name = base.run_name + "/d" + std::to_string(d) + "_s" + std::to_string(seed);
      try {
        auto r = run_end_to_end(c).record;
        tv.push_back(r.marginal_tv);
        ks.push_back(r.padded_ks);
        report.records.push_back(r);
        ++ok;
      } catch (const StageError& e) {
        last_error = e.what();
      }
    }
    if (ok < min_successes)
      throw StudyError("adaptivity study: only " + std::to_string(ok) + " successful runs at d=" +
                       std::to_string(d) + (last_error.empty() ? "" : " (" + last_error + ")"));
    report.ds.push_back(d);
    report.median_marginal_tv.push_back(finite_median(tv));
    report.median_padded_ks.push_back(finite_median(ks));
  }
  report.worst_ratio = 1.0;
  const double ref = report.median_marginal_tv.front();
  for (double v : report.median_marginal_tv) {
    const double r = v / ref;
    report.worst_ratio = std::max(report.worst_ratio, std::max(r, 1.0 / r));
  }
  report.pass = std::isfinite(report.worst_ratio) && report.worst_ratio <= report.factor;
  return report;
}

}  // namespace scorelab
