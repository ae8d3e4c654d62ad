#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubespoof/signal.hpp"

namespace tubespoof {

struct MfccConfig {
  int sample_rate = 16000;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 24;
  int n_coeffs = 13;
  double fmin_hz = 20.0;
  std::optional<double> fmax_hz;  // Nyquist when unset

  double effective_fmax() const { return fmax_hz.value_or(sample_rate / 2.0); }
  std::size_t frame_length() const;
  std::size_t hop_length() const;
  /// Throws on invariant violations.
  void validate() const;

  bool operator==(const MfccConfig&) const = default;
};

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular mel weights, n_mels rows by (fft_size/2 + 1) columns.
std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg, std::size_t fft_size);

/// Removes 25 ms / 10 ms frames whose RMS is below 2% of the 95th-percentile
/// frame RMS and concatenates the samples of the remaining frames.
AudioBuffer vad_trim(const AudioBuffer& buf);

using MfccMatrix = std::vector<std::vector<double>>;  // frames x n_coeffs

MfccMatrix mfcc(const AudioBuffer& buf, const MfccConfig& cfg);

using Embedding = std::vector<double>;

/// Per-coefficient mean then standard deviation over VAD-kept frames.
Embedding embed(const AudioBuffer& buf, const MfccConfig& cfg);

double cosine_similarity(const Embedding& a, const Embedding& b);
double euclidean_distance(const Embedding& a, const Embedding& b);

struct Identification {
  std::string label;
  std::vector<std::string> labels;
  std::vector<double> scores;  // aligned with labels; sums to 1

  double score_of(const std::string& label) const;
};

/// Nearest-centroid speaker model with distance softmax.
class SpeakerModel {
 public:
  SpeakerModel(std::vector<std::string> labels, std::vector<Embedding> centroids,
               double temperature, MfccConfig mfcc);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<Embedding>& centroids() const noexcept { return centroids_; }
  double temperature() const noexcept { return temperature_; }
  const MfccConfig& mfcc_config() const noexcept { return mfcc_; }

  bool has_label(const std::string& label) const;
  const Embedding& centroid(const std::string& label) const;

  /// Audio at another rate is resampled to the model rate first.
  Embedding embed(const AudioBuffer& buf) const;
  Identification score_embedding(const Embedding& e) const;
  Identification identify(const AudioBuffer& buf) const;

  /// Copy with a different softmax temperature.
  SpeakerModel with_temperature(double temperature) const;

  nlohmann::json to_json() const;
  static SpeakerModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SpeakerModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> labels_;  // sorted, unique
  std::vector<Embedding> centroids_;
  double temperature_;
  MfccConfig mfcc_;
};

using Corpus = std::map<std::string, std::vector<AudioBuffer>>;

struct EnrollResult {
  SpeakerModel model;
  std::vector<std::string> warnings;
  double mean_top1 = 0.0;  // enrollment-set mean top-1 score at the fitted temperature
};

inline constexpr double kTargetTop1 = 0.8;

EnrollResult enroll(const Corpus& corpus, const MfccConfig& cfg);

/// <dir>/<speaker>/<utt>.wav, speakers and utterances in lexicographic order.
Corpus load_corpus(const std::filesystem::path& dir);
std::vector<AudioBuffer> load_wav_dir(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

nlohmann::json mfcc_to_json(const MfccConfig& cfg);
MfccConfig mfcc_from_json(const nlohmann::json& j);

/// {"label": ..., "scores": {label: score}}
nlohmann::json identification_to_json(const Identification& id);

}  // namespace tubespoof
