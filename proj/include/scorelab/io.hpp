#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scorelab/common.hpp"
#include "scorelab/interaction_density.hpp"
#include "scorelab/noise_schedule.hpp"
#include "scorelab/relu_net.hpp"
#include "scorelab/score_matching.hpp"

namespace scorelab {

using Json = nlohmann::json;

inline constexpr const char* kCodeVersion = "0.3.0";

// Density specs ------------------------------------------------------------
//
// {
//   "d": 2, "d_star": 2,
//   "cliques": [[0, 1]],
//   "components": [{"beta": 1, "holder_c": 0.5,
//                   "terms": [{"coef": 0.3, "factors": [["cosine", 1], ["monomial", 0]]}]}],
//   "log_z": ..., "quad_tol": ...          (present after normalization)
// }
// Instead of "components", a "generator" block {"seed", "beta", "holder_c",
// "max_freq"} draws one random cosine component per clique.

Json component_to_json(const SmoothComponent& c);
SmoothComponent component_from_json(const Json& j, std::size_t arity);

Json density_to_json(const InteractionDensity& density);
/// Normalizes when "log_z" is absent.
InteractionDensity density_from_json(const Json& j, const QuadSpec& quad = {});
InteractionDensity load_density(const std::string& path, const QuadSpec& quad = {});
void save_density(const std::string& path, const InteractionDensity& density);
/// Hash of the canonical normalized spec.
std::string density_hash(const InteractionDensity& density);

/// Uniform density on [-1, 1]^d (zero components on singleton cliques).
InteractionDensity uniform_density(std::size_t d);
/// Appends d_extra independent uniform coordinates.
InteractionDensity pad_with_uniform(const InteractionDensity& density, std::size_t d_extra);

Json schedule_to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const Json& j);

// Sample files: CSV, one row per point, preceded by "# key=value" lines.

using Header = std::map<std::string, std::string>;

void write_samples(const std::string& path, const Matrix& samples, const Header& header);
Matrix read_samples(const std::string& path, Header* header = nullptr);

// Checkpoints: versioned JSON; doubles round-trip exactly.

struct CheckpointMeta {
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::uint64_t seed = 0;
  Json extra = Json::object();
};

Json checkpoint_to_json(const ScoreNetwork& net, const CheckpointMeta& meta);
ScoreNetwork checkpoint_from_json(const Json& j, CheckpointMeta* meta = nullptr);
void save_checkpoint(const std::string& path, const ScoreNetwork& net, const CheckpointMeta& meta);
ScoreNetwork load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
std::string checkpoint_hash(const ScoreNetwork& net);

/// Piecewise manifest: boundaries plus one checkpoint path per interval,
/// relative to the manifest's directory.
void save_piecewise(const std::string& dir, const PiecewiseScore& score, std::uint64_t seed);
PiecewiseScore load_piecewise(const std::string& manifest_path);

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);
void write_text(const std::string& path, const std::string& text);

}  // namespace scorelab
