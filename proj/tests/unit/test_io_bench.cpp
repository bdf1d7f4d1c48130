#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scorelab/bench.hpp"
#include "scorelab/io.hpp"

using namespace scorelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("scorelab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig quick_config() {
  RunConfig c;
  c.persist = false;
  c.n = 2048;
  c.train.width = 8;
  c.train.depth = 2;
  c.train.steps = 100;
  c.train.eval_every = 50;
  c.train.window = TimeWindow(1e-3, 5.0);
  c.sampler.steps = 100;
  c.sampler.chains = 2000;
  c.metrics.score_l2_mc = 2000;
  return c;
}

RateRecord fake_record(std::uint64_t n, double tv) {
  RateRecord r;
  r.n = n;
  r.tv = tv;
  r.w1 = tv / 2;
  r.score_l2[1] = tv * 3;
  r.tv_method = "histogram";
  return r;
}

}  // namespace

TEST_CASE("density JSON round trip") {
  Rng rng(1);
  const auto p = normalize(2, 2, {{0, 1}}, {SmoothComponent::random_cosine(2, 1.0, 0.4, 2, rng)});
  const auto q = density_from_json(density_to_json(p));
  CHECK(q.log_z() == p.log_z());
  CHECK(density_hash(p) == density_hash(q));
  const double x[2] = {0.2, -0.1};
  CHECK(q.density(x) == p.density(x));

  const Json gen = {{"d", 2}, {"d_star", 2}, {"cliques", {{0, 1}}},
                    {"generator", {{"seed", 3}, {"beta", 1.0}, {"holder_c", 0.5}, {"max_freq", 2}}}};
  CHECK(density_hash(density_from_json(gen)) == density_hash(density_from_json(gen)));

  const auto padded = pad_with_uniform(p, 1);
  CHECK(padded.dim() == 3);
  const double x3[3] = {0.2, -0.1, 0.7};
  CHECK(padded.density(x3) == doctest::Approx(p.density(x) / 2).epsilon(1e-9));
}

TEST_CASE("samples CSV round trip") {
  const auto dir = scratch("samples");
  Matrix m(3, 2);
  m.data = {0.1, 1.0 / 3.0, -2.5e-17, 7.0, M_PI, -1e300};
  write_samples((dir / "s.csv").string(), m, {{"seed", "4"}});
  Header h;
  const auto back = read_samples((dir / "s.csv").string(), &h);
  CHECK(back == m);
  CHECK(h.at("seed") == "4");
  CHECK(h.at("format") == "scorelab-samples/1");
  std::ofstream((dir / "bad.csv").string()) << "# format=other\n1,2\n";
  CHECK_THROWS_AS(read_samples((dir / "bad.csv").string()), FormatError);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  const auto dir = scratch("ckpt");
  auto net = init_network(5, 3, 3, 2, 7.5, 11, NoiseSchedule::linear(0.5, 0.25));
  save_checkpoint((dir / "c.json").string(), net, {1e-3, 4.0, 11});
  CheckpointMeta meta;
  const auto back = load_checkpoint((dir / "c.json").string(), &meta);
  CHECK(back == net);
  CHECK(checkpoint_hash(back) == checkpoint_hash(net));
  CHECK(meta.t_hi == 4.0);
  Json j = checkpoint_to_json(net, {});
  j["version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j), FormatError);

  const PiecewiseScore pw({0.1, 0.5, 2.0}, {net, init_network(2, 1, 3, 2, 7.5, 2)});
  save_piecewise((dir / "pw").string(), pw, 3);
  const auto pb = load_piecewise((dir / "pw" / "manifest.json").string());
  CHECK(pb.boundaries() == pw.boundaries());
  CHECK(pb.nets() == pw.nets());
}

TEST_CASE("schedule JSON") {
  for (const auto& s : {NoiseSchedule::constant(2.0), NoiseSchedule::linear(0.5, 0.5),
                        NoiseSchedule(NoiseSchedule::Kind::Custom, {1.0, 0.1}, 1.5)})
    CHECK(schedule_from_json(schedule_to_json(s)) == s);
}

TEST_CASE("record CSV") {
  const std::string empty = records_to_csv({});
  CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);
  CHECK(records_from_csv(empty).empty());
  CHECK(empty.rfind("schema,code_version,spec_hash", 0) == 0);

  std::vector<RateRecord> rs = {fake_record(4096, 0.25), fake_record(16384, 1.0 / 7.0)};
  rs[1].padded_ks = 0.01;
  const std::string text = records_to_csv(rs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  const auto back = records_from_csv(text);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(same_metrics(back[i], rs[i]));
  CHECK(records_to_csv(back) == text);

  std::string bad = text;
  bad.replace(0, 6, "schemo");
  CHECK_THROWS_AS(records_from_csv(bad), FormatError);

  const auto dir = scratch("records");
  emit_report(rs, (dir / "study").string(), "summary text\n");
  CHECK(read_records((dir / "study.csv").string()).size() == 2);
  CHECK(fs::exists(dir / "study.txt"));
}

TEST_CASE("slope summaries") {
  std::vector<RateRecord> rs;
  for (std::uint64_t n : {1u << 12, 1u << 14, 1u << 16, 1u << 18})
    for (int s = 0; s < 3; ++s) rs.push_back(fake_record(n, 2.0 * std::pow(double(n), -1.0 / 3.0)));
  const auto rep = summarize_rate_records(rs, -1.0 / 3.0);
  CHECK(rep.fits[0].slope == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(rep.tv_strictly_decreasing);
  CHECK(rep.tv_slope_in_band);
  CHECK(rep.median_tv.size() == 4);

  std::vector<RateRecord> flat;
  for (std::uint64_t n : {1u << 12, 1u << 14, 1u << 16, 1u << 18}) flat.push_back(fake_record(n, 0.2));
  const auto f = summarize_rate_records(flat, -1.0 / 3.0);
  CHECK(std::abs(f.fits[0].slope) < 1e-12);
  CHECK(!f.tv_strictly_decreasing);
  CHECK(!f.tv_slope_in_band);

  CHECK(t_quantile_975(1) == doctest::Approx(12.7062).epsilon(1e-5));
  CHECK(t_quantile_975(30) == doctest::Approx(2.0423).epsilon(1e-4));
}

TEST_CASE("run config JSON and hash") {
  auto c = quick_config();
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.hash() == c.hash());
  auto moved = c;
  moved.output_dir = "elsewhere";
  moved.run_name = "other";
  CHECK(moved.hash() == c.hash());
  moved.n = 4096;
  CHECK(moved.hash() != c.hash());
  CHECK_THROWS(RunConfig::from_json(Json{{"unknown_key", 1}}));
}

TEST_CASE("end-to-end runs are deterministic and persist their artifacts") {
  const auto dir = scratch("e2e");
  auto c = quick_config();
  c.persist = true;
  c.output_dir = dir.string();
  const auto a = run_end_to_end(c);
  const auto b = run_end_to_end(c);
  CHECK(same_metrics(a.record, b.record));
  CHECK(a.samples == b.samples);
  for (const char* f : {"config.json", "density.json", "data.csv", "samples.csv", "scaling.log",
                        "record.csv", "checkpoint.json", "train_log.csv"})
    CHECK(fs::exists(dir / "run" / f));
  CHECK(a.record.W == 8);
  CHECK(std::isfinite(a.record.tv));
  CHECK(std::isfinite(a.record.w1));
  CHECK(a.record.code_version == std::string(kCodeVersion));

  auto o = c;
  o.persist = false;
  o.mode = ScoreMode::Oracle;
  const auto orc = run_end_to_end(o);
  CHECK(orc.record.tv < a.record.tv);
  CHECK(orc.record.train_steps == 0);
}

TEST_CASE("rate scaling and piecewise plumbing") {
  auto c = quick_config();
  c.rate.enabled = true;
  c.rate.wl_scale = 2.0;
  c.rate.kappa_lo = 2.0;
  std::vector<std::string> log;
  const auto plan = resolve_plan(c, 1, &log);
  const double wl = 2.0 * std::pow(2048.0, 1.0 / 6.0);
  CHECK(plan.width == static_cast<std::size_t>(std::llround(wl / 2)));
  CHECK(plan.window.t_lo == doctest::Approx(std::pow(double(plan.width * 2), -2.0)));
  CHECK(plan.window.t_hi == doctest::Approx(std::log(double(plan.width * 2))));
  CHECK(!log.empty());

  c.epochs = 3;
  CHECK(resolve_plan(c, 1, nullptr).steps == std::max<std::size_t>(c.min_steps, 3 * 2048 * 9 / 10 / 256 + 1));

  // A single-interval piecewise run reproduces the global pipeline.
  auto g = quick_config();
  auto p = g;
  p.piecewise.enabled = true;
  p.piecewise.single_interval = true;
  const auto rg = run_end_to_end(g), rp = run_end_to_end(p);
  CHECK(rg.samples == rp.samples);
}

TEST_CASE("stage errors name the stage") {
  auto c = quick_config();
  c.density.kind = "spec";
  c.density.path = "/nonexistent/spec.json";
  try {
    run_end_to_end(c);
    CHECK(false);
  } catch (const StageError& e) {
    CHECK(e.stage == "density");
  }
  CHECK_THROWS_AS(run_rate_study(quick_config(), {1024}, {1}), StudyError);
}
