#include "scorelab/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace scorelab {
namespace fs = std::filesystem;

namespace {

const char* kind_name(FactorKind k) {
  switch (k) {
    case FactorKind::Cosine: return "cosine";
    case FactorKind::Monomial: return "monomial";
    case FactorKind::Abs: return "abs";
  }
  return "?";
}

FactorKind kind_from(const std::string& s) {
  if (s == "cosine") return FactorKind::Cosine;
  if (s == "monomial") return FactorKind::Monomial;
  if (s == "abs") return FactorKind::Abs;
  throw FormatError("unknown factor kind: " + s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("missing field: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad field ") + key + ": " + e.what());
  }
}

}  // namespace

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

Json component_to_json(const SmoothComponent& c) {
  Json terms = Json::array();
  for (const auto& t : c.terms()) {
    Json factors = Json::array();
    for (const auto& f : t.factors) factors.push_back({kind_name(f.kind), f.order});
    terms.push_back({{"coef", t.coef}, {"factors", factors}});
  }
  return {{"beta", c.holder_beta()}, {"holder_c", c.holder_c()}, {"terms", terms}};
}

SmoothComponent component_from_json(const Json& j, std::size_t arity) {
  std::vector<SeriesTerm> terms;
  for (const auto& t : field<Json>(j, "terms")) {
    SeriesTerm term;
    term.coef = field<double>(t, "coef");
    for (const auto& f : field<Json>(t, "factors")) {
      if (!f.is_array() || f.size() != 2) throw FormatError("factor must be [kind, order]");
      term.factors.push_back({kind_from(f[0].get<std::string>()), f[1].get<int>()});
    }
    if (term.factors.size() != arity) throw FormatError("factor count must equal clique size");
    terms.push_back(std::move(term));
  }
  return SmoothComponent(arity, std::move(terms), j.value("beta", 1.0), j.value("holder_c", 0.0));
}

Json density_to_json(const InteractionDensity& density) {
  Json comps = Json::array();
  for (const auto& c : density.components()) comps.push_back(component_to_json(c));
  return {{"d", density.dim()},
          {"d_star", density.cliques().d_star()},
          {"cliques", density.cliques().cliques()},
          {"components", comps},
          {"log_z", density.log_z()},
          {"quad_tol", density.quad_tol()}};
}

InteractionDensity density_from_json(const Json& j, const QuadSpec& quad) {
  const auto d = field<std::size_t>(j, "d");
  const auto d_star = field<std::size_t>(j, "d_star");
  auto cliques = field<std::vector<std::vector<std::size_t>>>(j, "cliques");
  std::vector<SmoothComponent> comps;
  if (j.contains("components")) {
    const auto& arr = j.at("components");
    if (arr.size() != cliques.size()) throw FormatError("one component per clique required");
    for (std::size_t c = 0; c < cliques.size(); ++c)
      comps.push_back(component_from_json(arr[c], cliques[c].size()));
  } else if (j.contains("generator")) {
    const auto& g = j.at("generator");
    const auto seed = field<std::uint64_t>(g, "seed");
    const double beta = field<double>(g, "beta");
    const double c = field<double>(g, "holder_c");
    const int max_freq = g.value("max_freq", 4);
    for (std::size_t k = 0; k < cliques.size(); ++k) {
      Rng rng = make_stream(seed, k);
      comps.push_back(SmoothComponent::random_cosine(cliques[k].size(), beta, c, max_freq, rng));
    }
  } else {
    throw FormatError("density spec needs \"components\" or \"generator\"");
  }
  if (j.contains("log_z")) {
    for (auto& J : cliques)
      if (!std::is_sorted(J.begin(), J.end()))
        throw FormatError("normalized spec must list clique indices in ascending order");
    return InteractionDensity(CliqueSet(d, d_star, cliques), std::move(comps),
                              field<double>(j, "log_z"), j.value("quad_tol", 0.0));
  }
  return normalize(d, d_star, std::move(cliques), std::move(comps), quad);
}

InteractionDensity load_density(const std::string& path, const QuadSpec& quad) {
  return density_from_json(read_json(path), quad);
}

void save_density(const std::string& path, const InteractionDensity& density) {
  write_json(path, density_to_json(density));
}

std::string density_hash(const InteractionDensity& density) {
  return hex64(fnv1a(density_to_json(density).dump()));
}

InteractionDensity uniform_density(std::size_t d) {
  std::vector<std::vector<std::size_t>> cliques;
  std::vector<SmoothComponent> comps;
  for (std::size_t i = 0; i < d; ++i) {
    cliques.push_back({i});
    comps.push_back(SmoothComponent::zero(1));
  }
  return InteractionDensity(CliqueSet(d, 1, cliques), std::move(comps),
                            static_cast<double>(d) * std::log(2.0), 0.0);
}

InteractionDensity pad_with_uniform(const InteractionDensity& density, std::size_t d_extra) {
  if (d_extra == 0) return density;
  const std::size_t d = density.dim();
  auto cliques = density.cliques().cliques();
  auto comps = density.components();
  for (std::size_t k = 0; k < d_extra; ++k) {
    cliques.push_back({d + k});
    comps.push_back(SmoothComponent::zero(1));
  }
  return InteractionDensity(CliqueSet(d + d_extra, density.cliques().d_star(), cliques),
                            std::move(comps),
                            density.log_z() + static_cast<double>(d_extra) * std::log(2.0),
                            density.quad_tol());
}

Json schedule_to_json(const NoiseSchedule& s) {
  const char* kind = s.kind() == NoiseSchedule::Kind::Constant ? "constant"
                     : s.kind() == NoiseSchedule::Kind::Linear ? "linear"
                                                               : "custom";
  return {{"kind", kind}, {"params", s.params()}, {"c2", s.c2()}};
}

NoiseSchedule schedule_from_json(const Json& j) {
  const auto kind = j.value("kind", std::string("constant"));
  const auto params = j.value("params", std::vector<double>{1.0});
  const double c2 = j.value("c2", 0.0);
  if (kind == "constant") return {NoiseSchedule::Kind::Constant, params, c2};
  if (kind == "linear") return {NoiseSchedule::Kind::Linear, params, c2};
  if (kind == "custom") return {NoiseSchedule::Kind::Custom, params, c2};
  throw FormatError("unknown schedule kind: " + kind);
}

void write_samples(const std::string& path, const Matrix& samples, const Header& header) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw FormatError("cannot write " + path);
  std::fprintf(f, "# format=scorelab-samples/1\n# d=%zu\n# n=%zu\n", samples.cols, samples.rows);
  for (const auto& [k, v] : header)
    if (k != "d" && k != "n" && k != "format") std::fprintf(f, "# %s=%s\n", k.c_str(), v.c_str());
  for (std::size_t i = 0; i < samples.rows; ++i)
    for (std::size_t l = 0; l < samples.cols; ++l)
      std::fprintf(f, "%.17g%c", samples(i, l), l + 1 == samples.cols ? '\n' : ',');
  std::fclose(f);
}

Matrix read_samples(const std::string& path, Header* header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  Header h;
  Matrix m;
  std::string line;
  std::size_t d = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      h[key] = line.substr(eq + 1);
      continue;
    }
    if (d == 0) {
      if (!h.count("d")) throw FormatError(path + ": missing d header");
      d = std::stoul(h["d"]);
      m.cols = d;
    }
    std::stringstream ss(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      m.data.push_back(std::stod(cell));
      ++count;
    }
    if (count != d) throw FormatError(path + ": row width does not match d");
    ++m.rows;
  }
  if (d == 0 && h.count("d")) m.cols = std::stoul(h["d"]);
  if (h.count("n") && std::stoul(h["n"]) != m.rows)
    throw FormatError(path + ": row count does not match header");
  if (header) *header = std::move(h);
  return m;
}

Json checkpoint_to_json(const ScoreNetwork& net, const CheckpointMeta& meta) {
  Json layers = Json::array();
  ScoreNetwork copy = net;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto w = copy.weights(l);
    const auto b = copy.biases(l);
    layers.push_back({{"in", net.layers()[l].in},
                      {"out", net.layers()[l].out},
                      {"weights", std::vector<double>(w.begin(), w.end())},
                      {"biases", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"format", "scorelab-checkpoint"},
          {"version", 1},
          {"d", net.dim()},
          {"W", net.width()},
          {"L", net.depth()},
          {"B", net.trunc_b()},
          {"schedule", schedule_to_json(net.schedule())},
          {"schedule_id", net.schedule().id()},
          {"t_lo", meta.t_lo},
          {"t_hi", meta.t_hi},
          {"seed", meta.seed},
          {"layers", layers},
          {"metadata", meta.extra}};
}

ScoreNetwork checkpoint_from_json(const Json& j, CheckpointMeta* meta) {
  if (j.value("format", std::string()) != "scorelab-checkpoint")
    throw FormatError("not a scorelab checkpoint");
  if (field<int>(j, "version") != 1) throw FormatError("unsupported checkpoint version");
  ScoreNetwork net(field<std::size_t>(j, "d"), field<std::size_t>(j, "W"),
                   field<std::size_t>(j, "L"), field<double>(j, "B"),
                   schedule_from_json(field<Json>(j, "schedule")));
  const auto& layers = field<Json>(j, "layers");
  if (layers.size() != net.layers().size()) throw FormatError("checkpoint layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto w = field<std::vector<double>>(layers[l], "weights");
    const auto b = field<std::vector<double>>(layers[l], "biases");
    auto dw = net.weights(l);
    auto db = net.biases(l);
    if (w.size() != dw.size() || b.size() != db.size())
      throw FormatError("checkpoint layer shape mismatch");
    std::copy(w.begin(), w.end(), dw.begin());
    std::copy(b.begin(), b.end(), db.begin());
  }
  if (meta) {
    meta->t_lo = j.value("t_lo", 0.0);
    meta->t_hi = j.value("t_hi", 0.0);
    meta->seed = j.value("seed", std::uint64_t{0});
    meta->extra = j.value("metadata", Json::object());
  }
  return net;
}

void save_checkpoint(const std::string& path, const ScoreNetwork& net, const CheckpointMeta& meta) {
  write_json(path, checkpoint_to_json(net, meta));
}

ScoreNetwork load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  return checkpoint_from_json(read_json(path), meta);
}

std::string checkpoint_hash(const ScoreNetwork& net) {
  std::string bytes = net.schedule().id();
  const auto p = net.params();
  bytes.append(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double));
  bytes += ":" + std::to_string(net.dim()) + ":" + std::to_string(net.width()) + ":" +
           std::to_string(net.depth()) + ":" + fmt(net.trunc_b());
  return hex64(fnv1a(bytes));
}

void save_piecewise(const std::string& dir, const PiecewiseScore& score, std::uint64_t seed) {
  fs::create_directories(dir);
  Json paths = Json::array();
  const auto& b = score.boundaries();
  for (std::size_t j = 0; j < score.nets().size(); ++j) {
    const std::string name = "interval_" + std::to_string(j) + ".json";
    save_checkpoint((fs::path(dir) / name).string(), score.nets()[j],
                    {b[j], b[j + 1], seed, Json::object()});
    paths.push_back(name);
  }
  write_json((fs::path(dir) / "manifest.json").string(),
             {{"format", "scorelab-piecewise"}, {"version", 1}, {"boundaries", b},
              {"checkpoints", paths}});
}

PiecewiseScore load_piecewise(const std::string& manifest_path) {
  const Json j = read_json(manifest_path);
  if (j.value("format", std::string()) != "scorelab-piecewise")
    throw FormatError("not a piecewise manifest");
  const auto base = fs::path(manifest_path).parent_path();
  std::vector<ScoreNetwork> nets;
  for (const auto& p : field<Json>(j, "checkpoints"))
    nets.push_back(load_checkpoint((base / p.get<std::string>()).string()));
  return PiecewiseScore(field<std::vector<double>>(j, "boundaries"), std::move(nets));
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "step,train_loss,val_loss,wall_ms\n";
  for (const auto& r : log)
    os << r.step << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.wall_ms)
       << '\n';
  write_text(path, os.str());
}

}  // namespace scorelab
