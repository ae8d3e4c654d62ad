#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubespoof/acoustics.hpp"
#include "tubespoof/asi.hpp"
#include "tubespoof/oracle.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

struct Dimension {
  std::string name;
  double lo;
  double hi;
  double step;

  /// Nearest grid point lo + k*step, clamped into [lo, hi].
  double snap(double x) const;
  std::size_t grid_size() const;
};

enum class SearchMode { SingleTube, TwoTube };

struct SearchSpace {
  SearchMode mode = SearchMode::SingleTube;
  std::vector<Dimension> dims;
  double d1_m = 0.021;  // two-tube only: diameter of the first tube

  /// f0 in [50, 1000] Hz step 10, Q0 in [5, 100] step 5.
  static SearchSpace single_tube();
  /// L1, L2 in [0.05, 1.2] m step 0.05, area ratio in [1, 10] step 1.
  static SearchSpace two_tube(double d1_m = 0.021);

  std::vector<double> snap(std::span<const double> x) const;
  bool on_grid(std::span<const double> x) const;
  /// Bounds and steps only; any number of dimensions.
  void validate_grid() const;
  /// Grid plus the dimension layout its mode requires.
  void validate() const;
};

enum class DEStrategy {
  Printed,  // best + m (r1 - r2)
  Best2,    // best + m (r1 - r2 + r3 - r4)
};

struct DEConfig {
  std::size_t population = 100;
  int max_iterations = 5;
  double tolerance = 0.001;
  double crossover = 0.7;
  double mutation = 0.8;
  std::uint64_t seed = 0;
  DEStrategy strategy = DEStrategy::Printed;
  std::optional<std::size_t> max_evaluations;  // stops mid-generation when reached
  unsigned jobs = 1;

  void validate() const;
};

using Params = std::vector<double>;
/// Must be safe to call concurrently when jobs > 1.
using Fitness = std::function<double(const Params&)>;

struct DEResult {
  Params best;  // snapped
  double best_fitness = 0.0;
  std::vector<double> trace;  // best fitness after initialization and after each generation
  std::size_t evaluations = 0;
  int generations = 0;
};

/// Maximizes fitness. `initial` replaces the random initial population.
DEResult differential_evolution(const Fitness& fitness, const SearchSpace& space,
                                const DEConfig& cfg,
                                const std::vector<Params>* initial = nullptr);

/// Physical tube realized by a point of the search space.
struct Realization {
  std::optional<TubeSpec> tube;
  std::optional<TwoTubeSpec> two_tube;
  bool saturated = false;
  ResonanceProfile profile;
  std::string error;  // non-empty when the point is not buildable

  bool feasible() const noexcept { return error.empty() && !profile.empty(); }
};

Realization realize(const Params& p, const SearchSpace& space, const Environment& env,
                    double nyquist_hz);

/// Tube-filtered copy of each utterance. Throws Domain for infeasible points.
std::vector<AudioBuffer> apply_tube(const Realization& r, std::span<const AudioBuffer> utts);

struct AttackResult {
  std::string target;
  SearchMode mode = SearchMode::SingleTube;
  std::vector<std::string> param_names;
  Params best_params;
  Realization realization;
  double best_score = 0.0;
  bool success = false;
  std::size_t invocations = 0;     // fitness evaluations requested by the search
  std::size_t oracle_queries = 0;  // distinct utterance queries sent to the model
  int generations = 0;
  std::vector<double> score_trace;
  std::vector<std::string> final_labels;  // per utterance at best_params; empty string = no speech
};

/// Searches tube parameters maximizing the mean target score over the utterances.
/// Success requires a strict majority of utterances identified as the target.
AttackResult attack_target(std::span<const AudioBuffer> attacker_utts, const std::string& target,
                           Oracle& oracle, const SearchSpace& space, const DEConfig& cfg,
                           const Environment& env);

/// Mean target score of utterances filtered through the tube at p.
double attack_fitness(std::span<const AudioBuffer> attacker_utts, const std::string& target,
                      Oracle& oracle, const SearchSpace& space, const Params& p,
                      const Environment& env);

struct ReachableSummary {
  std::map<std::string, AttackResult> results;
  std::size_t success_count = 0;
  std::optional<std::size_t> per_target_budget;
};

/// Attacks every label (optionally skipping one). Target i uses seed cfg.seed + i.
ReachableSummary reachable_set(std::span<const AudioBuffer> attacker_utts, Oracle& oracle,
                               const SearchSpace& space, const DEConfig& cfg,
                               const Environment& env,
                               std::optional<std::size_t> per_target_budget = std::nullopt,
                               const std::optional<std::string>& exclude = std::nullopt);

struct ScoreSetSummary {
  std::size_t n = 0;
  std::vector<double> top1;
  std::vector<double> top2;
  double mean_top1 = 0, median_top1 = 0;
  double mean_top2 = 0, median_top2 = 0;
  double mean_gap = 0, median_gap = 0;
};

struct ConfidenceGapSummary {
  ScoreSetSummary clean;
  ScoreSetSummary adversarial;
};

ScoreSetSummary score_set_summary(const std::vector<Identification>& ids);
ConfidenceGapSummary confidence_gap_stats(Oracle& oracle, std::span<const AudioBuffer> clean,
                                          std::span<const AudioBuffer> adversarial);

struct SimilaritySummary {
  double mean_victim = 0.0;
  double mean_nonvictim = 0.0;
  std::vector<double> victim;                   // per attack utterance
  std::vector<std::vector<double>> nonvictim;   // per attack utterance, per non-victim label
};

/// Cosine between attack-utterance embeddings and speaker centroids. With
/// `centered`, both are measured relative to the mean of all centroids.
SimilaritySummary embedding_similarity_stats(const SpeakerModel& model,
                                             std::span<const AudioBuffer> attack_utts,
                                             const std::string& victim,
                                             const std::vector<std::string>& nonvictims,
                                             bool centered = true);

/// Percentage of positions where every run gives the same label.
double consistency_rate(const std::vector<std::vector<std::string>>& runs);

/// utterance -> successful target, nullopt when the attack failed.
using SuccessMap = std::map<std::string, std::optional<std::string>>;
double match_rate(const SuccessMap& simulated, const SuccessMap& second);

const char* mode_name(SearchMode m);
const char* strategy_name(DEStrategy s);

nlohmann::json to_json(const AttackResult& r);
nlohmann::json to_json(const ReachableSummary& s);
nlohmann::json to_json(const ConfidenceGapSummary& s);
nlohmann::json to_json(const SimilaritySummary& s);
std::string attack_csv_header();
std::string attack_csv_row(const AttackResult& r);

nlohmann::json search_space_to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const nlohmann::json& j);
nlohmann::json de_config_to_json(const DEConfig& c);
DEConfig de_config_from_json(const nlohmann::json& j);

}  // namespace tubespoof
