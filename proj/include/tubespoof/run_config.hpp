#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubespoof/acoustics.hpp"
#include "tubespoof/asi.hpp"
#include "tubespoof/attack.hpp"
#include "tubespoof/oracle.hpp"
#include "tubespoof/pitch.hpp"

namespace tubespoof {

struct OracleSelection {
  std::optional<std::filesystem::path> model;  // surrogate model file
  std::optional<std::string> adapter;          // adapter command line
  std::chrono::milliseconds timeout{30000};
};

struct StudySettings {
  std::vector<TubeSpec> tubes;                        // defaults to the six reference PVC tubes
  std::optional<std::filesystem::path> signals_dir;   // every .wav below it; synthetic otherwise
  std::size_t synthetic_count = 50;
  std::uint64_t seed = 1;
  int sample_rate = 8000;
  double duration_s = 1.0;
};

/// Experiment bundle. Relative paths resolve against the config file's directory.
struct RunConfig {
  Environment env;
  std::optional<MfccConfig> mfcc;  // defaults to the corpus sample rate when enrolling
  SearchSpace space = SearchSpace::single_tube();
  DEConfig de;
  std::optional<std::filesystem::path> corpus_dir;
  std::filesystem::path output_dir = ".";
  OracleSelection oracle;
  StudySettings study;
  std::optional<std::size_t> per_target_budget;

  /// Checks that referenced inputs exist. output_dir is created on demand.
  void check_paths() const;
};

std::vector<TubeSpec> reference_tubes();

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Model-backed or adapter-backed oracle. Without an explicit selection the
/// surrogate is enrolled from corpus_dir.
struct OpenOracle {
  std::unique_ptr<SpeakerModel> model;  // set for surrogate oracles
  std::unique_ptr<Oracle> oracle;
};
OpenOracle open_oracle(const RunConfig& cfg);

/// MFCC settings for a corpus: its own rate when that is a classifier rate.
MfccConfig default_mfcc_for(const Corpus& corpus);

struct RunOutput {
  nlohmann::json json;
  std::string csv;
  std::filesystem::path json_path;
  std::filesystem::path csv_path;
};

RunOutput run_attack(const RunConfig& cfg, const std::filesystem::path& attacker_dir,
                     const std::string& target);
RunOutput run_reachable(const RunConfig& cfg, const std::filesystem::path& attacker_dir,
                        const std::optional<std::string>& exclude);
RunOutput run_pitch_study(const RunConfig& cfg);

nlohmann::json regression_to_json(const RegressionReport& r, const std::vector<std::string>& names);

}  // namespace tubespoof
