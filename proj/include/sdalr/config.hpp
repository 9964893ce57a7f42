#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdalr/datasets.hpp"
#include "sdalr/network.hpp"
#include "sdalr/training.hpp"

namespace sdalr {

struct SynthDomainSpec {
  std::string id;
  DomainShift shift;
};

struct DatasetSpec {
  std::string kind = "synth";  ///< pu | jnu | synth
  std::filesystem::path root;
  LoaderOptions loader;
  SynthConfig synth;
  std::vector<SynthDomainSpec> synth_domains = {{"S", {1.0, 1.0}}, {"T", {1.35, 3.0}}};
  std::uint64_t synth_seed = 2024;
};

enum class SweepAxis { None, Beta, Threshold };

struct SweepSpec {
  SweepAxis axis = SweepAxis::None;
  /// Empty -> the standard grid for the axis.
  std::vector<double> values;

  std::vector<double> points() const;
};

/// Everything a run needs; serialised in full into each run directory.
struct ExperimentSpec {
  DatasetSpec dataset;
  std::vector<TransferTask> tasks;
  EncoderConfig encoder;
  AdaptationConfig adaptation;
  SweepSpec sweep;
  /// Ablation ladder rows to run (1-based); empty -> all four.
  std::vector<int> ablation_rows;
  std::filesystem::path output_dir = "runs/default";
  int seeds = 1;
  bool evaluate_split = false;  ///< evaluate on a held-out 20% of the target instead of all of it

  /// Throws ConfigError on inconsistent settings (unknown domains, bad grids).
  void validate() const;
};

/// Domain ids valid for a dataset kind.
std::vector<std::string> dataset_domains(const DatasetSpec& spec);
/// The six-task matrix for PU/JNU, or all ordered pairs of synthetic domains.
std::vector<TransferTask> default_tasks(const DatasetSpec& spec);

/// Parses JSON with // and /* */ comments. Throws ConfigError with the file path.
nlohmann::json read_json_file(const std::filesystem::path& path);
ExperimentSpec load_experiment(const std::filesystem::path& path);
ExperimentSpec experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);
/// FNV-1a over the canonical dump of the fully resolved spec.
std::string experiment_hash(const ExperimentSpec& spec);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const AdaptationConfig& c);
void from_json(const nlohmann::json& j, AdaptationConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const LossBundle& b);
void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Writes `j` pretty-printed, creating parent directories.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace sdalr
