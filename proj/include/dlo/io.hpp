#pragma once

// JSON / JSONL / CSV persistence for records, densities, checkpoints and
// evaluation reports. Every artifact carries an ArtifactMeta block.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlo/eval.hpp"
#include "dlo/lfi.hpp"
#include "dlo/mdnn.hpp"
#include "dlo/mog.hpp"
#include "dlo/ppo.hpp"

namespace dlo {

using Json = nlohmann::json;

struct ArtifactMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string stage;

  bool operator==(const ArtifactMeta&) const = default;
};

Json to_json(const ArtifactMeta& m);
ArtifactMeta meta_from_json(const Json& j);
/// "# config_hash=...,seed=...,stage=..." line for CSV files.
std::string csv_comment(const ArtifactMeta& m);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

Json to_json(const SystemParams& p);
SystemParams params_from_json(const Json& j);
Json to_json(const ParamBox& b);
ParamBox box_from_json(const Json& j);

Json to_json(const EpisodeRecord& rec);
EpisodeRecord record_from_json(const Json& j);

Json to_json(const MixtureOfGaussians& mog);
MixtureOfGaussians mog_from_json(const Json& j);

Json to_json(const PolicyModel& model);
PolicyModel policy_from_json(const Json& j);

Json to_json(const MdnnModel& model);
MdnnModel mdnn_from_json(const Json& j);

// Files. JSON documents are {"meta": ..., "<kind>": ...}; JSONL files start
// with a {"meta": ...} line followed by one object per line.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const ArtifactMeta& meta, const std::string& key,
                const Json& value);
/// Returns the payload under `key`; `meta` receives the header when non-null.
Json read_json(const std::filesystem::path& path, const std::string& key, ArtifactMeta* meta = nullptr);

void write_records_jsonl(const std::filesystem::path& path, const ArtifactMeta& meta,
                         std::span<const EpisodeRecord> records);
std::vector<EpisodeRecord> read_records_jsonl(const std::filesystem::path& path,
                                              ArtifactMeta* meta = nullptr);
void write_dataset_jsonl(const std::filesystem::path& path, const ArtifactMeta& meta,
                         std::span<const SimTrajectory> data);

void write_learning_curve_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                              std::span<const CurvePoint> curve);
void write_episode_rewards_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                               std::span<const double> rewards, std::span<const long> end_steps);
/// `prefix`.csv (matrix), `prefix`_length_axis.csv, `prefix`_modulus_axis.csv.
void write_heatmap(const std::filesystem::path& dir, const std::string& prefix,
                   const ArtifactMeta& meta, const Heatmap& heatmap);
void write_loss_curves_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                           const std::vector<std::vector<double>>& curves);
/// Per-cell path and reward CSVs, summary.csv and dtw_matrix.csv.
void write_eval_grid(const std::filesystem::path& dir, const ArtifactMeta& meta, const EvalGrid& grid);

/// Shortest round-trip formatting of a double.
std::string format_double(double v);

}  // namespace dlo
