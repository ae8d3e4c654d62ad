#include "tubespoof/asi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "tubespoof/error.hpp"
#include "tubespoof/json_util.hpp"

namespace tubespoof {

using nlohmann::json;

namespace {

constexpr double kLogFloor = 1e-10;
constexpr double kVadRelativeThreshold = 0.02;
constexpr double kVadPercentile = 0.95;
constexpr double kDigitalSilence = 1e-8;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool classifier_rate(int rate) { return rate == 8000 || rate == 16000; }

}  // namespace

std::size_t MfccConfig::frame_length() const {
  return static_cast<std::size_t>(std::llround(frame_ms * 1e-3 * sample_rate));
}

std::size_t MfccConfig::hop_length() const {
  return static_cast<std::size_t>(std::llround(hop_ms * 1e-3 * sample_rate));
}

void MfccConfig::validate() const {
  require(sample_rate > 0, "MFCC sample rate must be positive");
  require(frame_ms > 0.0 && hop_ms > 0.0, "MFCC frame and hop must be positive");
  require(frame_length() >= 2 && hop_length() >= 1, "MFCC frame too short for the sample rate");
  require(n_mels >= 1 && n_coeffs >= 1, "MFCC needs at least one mel band and one coefficient");
  require(n_coeffs <= n_mels, "n_coeffs must not exceed n_mels");
  require(fmin_hz >= 0.0 && fmin_hz < effective_fmax(), "MFCC needs fmin < fmax");
  require(effective_fmax() <= sample_rate / 2.0, "MFCC fmax must not exceed Nyquist");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg, std::size_t fft_size) {
  const double lo = hz_to_mel(cfg.fmin_hz), hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    edges[j] = mel_to_hz(lo + (hi - lo) * static_cast<double>(j) / (cfg.n_mels + 1));
  }
  const std::size_t bins = fft_size / 2 + 1;
  std::vector<std::vector<double>> w(static_cast<std::size_t>(cfg.n_mels), std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < w.size(); ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(fft_size);
      if (f > left && f < center) {
        w[m][k] = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        w[m][k] = (right - f) / (right - center);
      }
    }
  }
  return w;
}

AudioBuffer vad_trim(const AudioBuffer& buf) {
  require(!buf.empty(), "VAD of an empty buffer");
  const auto frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.025 * buf.sample_rate())));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.010 * buf.sample_rate())));
  const auto x = buf.samples();

  std::vector<std::size_t> starts;
  std::vector<double> levels;
  for (std::size_t s = 0; s < x.size(); s += hop) {
    starts.push_back(s);
    levels.push_back(rms(x.subspan(s, std::min(frame, x.size() - s))));
    if (s + frame >= x.size()) break;
  }
  const double threshold = kVadRelativeThreshold * percentile(levels, kVadPercentile);

  std::vector<bool> keep(x.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (levels[i] >= threshold && levels[i] > kDigitalSilence) {
      any = true;
      const std::size_t end = std::min(starts[i] + frame, x.size());
      std::fill(keep.begin() + static_cast<long>(starts[i]), keep.begin() + static_cast<long>(end), true);
    }
  }
  if (!any) fail(ErrorCode::NoSpeech, "no speech: every frame removed by VAD");

  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep[i]) out.push_back(x[i]);
  }
  return AudioBuffer(std::move(out), buf.sample_rate());
}

MfccMatrix mfcc(const AudioBuffer& buf, const MfccConfig& cfg) {
  cfg.validate();
  require(buf.sample_rate() == cfg.sample_rate, "MFCC sample rate does not match the audio");
  const std::size_t frame = cfg.frame_length(), hop = cfg.hop_length();
  require(buf.size() >= frame, "audio shorter than one MFCC frame");
  const std::size_t nfft = next_pow2(frame);
  const auto weights = mel_filterbank(cfg, nfft);
  const auto n_mels = static_cast<std::size_t>(cfg.n_mels);
  const auto n_coeffs = static_cast<std::size_t>(cfg.n_coeffs);

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame));
  }
  std::vector<std::vector<double>> dct(n_coeffs, std::vector<double>(n_mels));
  const double dct_scale = std::sqrt(2.0 / static_cast<double>(n_mels));
  for (std::size_t j = 0; j < n_coeffs; ++j) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      dct[j][m] = dct_scale * std::cos(std::numbers::pi * static_cast<double>(j) *
                                       (static_cast<double>(m) + 0.5) / static_cast<double>(n_mels));
    }
  }

  const auto x = buf.samples();
  MfccMatrix out;
  std::vector<double> padded(nfft);
  std::vector<double> log_mel(n_mels);
  for (std::size_t start = 0; start + frame <= x.size(); start += hop) {
    std::fill(padded.begin(), padded.end(), 0.0);
    for (std::size_t i = 0; i < frame; ++i) padded[i] = x[start + i] * window[i];
    const auto spec = dft_real(padded);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k <= nfft / 2; ++k) {
        if (weights[m][k] != 0.0) e += weights[m][k] * std::norm(spec[k]);
      }
      log_mel[m] = std::log(std::max(e, kLogFloor));
    }
    std::vector<double> coeffs(n_coeffs, 0.0);
    for (std::size_t j = 0; j < n_coeffs; ++j) {
      for (std::size_t m = 0; m < n_mels; ++m) coeffs[j] += dct[j][m] * log_mel[m];
    }
    out.push_back(std::move(coeffs));
  }
  return out;
}

Embedding embed(const AudioBuffer& buf, const MfccConfig& cfg) {
  const auto trimmed = vad_trim(buf);
  if (trimmed.size() < cfg.frame_length()) {
    fail(ErrorCode::NoSpeech, "no speech: less than one frame survives VAD");
  }
  const auto frames = mfcc(trimmed, cfg);
  const std::size_t nc = static_cast<std::size_t>(cfg.n_coeffs);
  const auto count = static_cast<double>(frames.size());
  Embedding e(2 * nc, 0.0);
  for (const auto& f : frames) {
    for (std::size_t j = 0; j < nc; ++j) e[j] += f[j];
  }
  for (std::size_t j = 0; j < nc; ++j) e[j] /= count;
  for (const auto& f : frames) {
    for (std::size_t j = 0; j < nc; ++j) e[nc + j] += (f[j] - e[j]) * (f[j] - e[j]);
  }
  for (std::size_t j = 0; j < nc; ++j) e[nc + j] = std::sqrt(e[nc + j] / count);
  return e;
}

double euclidean_distance(const Embedding& a, const Embedding& b) {
  require(a.size() == b.size(), "embedding dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  require(a.size() == b.size(), "embedding dimensions differ");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

double Identification::score_of(const std::string& l) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == l) return scores[i];
  }
  fail(ErrorCode::InvalidArgument, "unknown label: " + l);
}

// ---------------------------------------------------------------------------

SpeakerModel::SpeakerModel(std::vector<std::string> labels, std::vector<Embedding> centroids,
                           double temperature, MfccConfig mfcc)
    : temperature_(temperature), mfcc_(std::move(mfcc)) {
  require(labels.size() == centroids.size(), "one centroid per label required");
  require(labels.size() >= 2, "a speaker model needs at least two labels");
  require(std::isfinite(temperature) && temperature > 0.0, "temperature must be positive");
  mfcc_.validate();
  require(classifier_rate(mfcc_.sample_rate), "speaker models run at 8000 or 16000 Hz");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  for (auto i : order) {
    require(labels_.empty() || labels_.back() != labels[i], "duplicate label: " + labels[i]);
    require(centroids[i].size() == 2 * static_cast<std::size_t>(mfcc_.n_coeffs),
            "centroid dimension does not match the MFCC configuration");
    require(std::all_of(centroids[i].begin(), centroids[i].end(), [](double v) { return std::isfinite(v); }),
            "centroids must be finite");
    labels_.push_back(labels[i]);
    centroids_.push_back(centroids[i]);
  }
}

bool SpeakerModel::has_label(const std::string& label) const {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

const Embedding& SpeakerModel::centroid(const std::string& label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) fail(ErrorCode::InvalidArgument, "unknown label: " + label);
  return centroids_[static_cast<std::size_t>(it - labels_.begin())];
}

Embedding SpeakerModel::embed(const AudioBuffer& buf) const {
  if (buf.sample_rate() != mfcc_.sample_rate) {
    return tubespoof::embed(resample(buf, mfcc_.sample_rate), mfcc_);
  }
  return tubespoof::embed(buf, mfcc_);
}

Identification SpeakerModel::score_embedding(const Embedding& e) const {
  Identification id;
  id.labels = labels_;
  std::vector<double> z(labels_.size());
  for (std::size_t k = 0; k < labels_.size(); ++k) z[k] = -euclidean_distance(e, centroids_[k]) / temperature_;
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  id.scores.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    id.scores[k] = std::exp(z[k] - zmax);
    sum += id.scores[k];
  }
  for (auto& s : id.scores) s /= sum;
  const auto best = std::max_element(id.scores.begin(), id.scores.end());
  id.label = labels_[static_cast<std::size_t>(best - id.scores.begin())];
  return id;
}

Identification SpeakerModel::identify(const AudioBuffer& buf) const {
  return score_embedding(embed(buf));
}

SpeakerModel SpeakerModel::with_temperature(double temperature) const {
  return SpeakerModel(labels_, centroids_, temperature, mfcc_);
}

json mfcc_to_json(const MfccConfig& cfg) {
  json j = {{"sample_rate", cfg.sample_rate}, {"frame_ms", cfg.frame_ms},
            {"hop_ms", cfg.hop_ms},           {"n_mels", cfg.n_mels},
            {"n_coeffs", cfg.n_coeffs},       {"fmin_hz", cfg.fmin_hz}};
  j["fmax_hz"] = cfg.fmax_hz ? json(*cfg.fmax_hz) : json(nullptr);
  return j;
}

MfccConfig mfcc_from_json(const json& j) {
  jsonutil::ObjectReader r(j, "mfcc");
  MfccConfig cfg;
  cfg.sample_rate = r.optional_int("sample_rate", cfg.sample_rate);
  cfg.frame_ms = r.optional_number("frame_ms", cfg.frame_ms);
  cfg.hop_ms = r.optional_number("hop_ms", cfg.hop_ms);
  cfg.n_mels = r.optional_int("n_mels", cfg.n_mels);
  cfg.n_coeffs = r.optional_int("n_coeffs", cfg.n_coeffs);
  cfg.fmin_hz = r.optional_number("fmin_hz", cfg.fmin_hz);
  if (r.has("fmax_hz") && !j.at("fmax_hz").is_null()) cfg.fmax_hz = r.number("fmax_hz");
  else r.mark("fmax_hz");
  r.finish();
  cfg.validate();
  return cfg;
}

json SpeakerModel::to_json() const {
  return {{"format", "tubespoof-speaker-model/1"},
          {"labels", labels_},
          {"centroids", centroids_},
          {"temperature", temperature_},
          {"mfcc", mfcc_to_json(mfcc_)}};
}

SpeakerModel SpeakerModel::from_json(const json& j) {
  try {
    jsonutil::ObjectReader r(j, "speaker model");
    if (r.string("format") != "tubespoof-speaker-model/1") {
      fail(ErrorCode::Format, "speaker model: unsupported format tag");
    }
    auto labels = r.get<std::vector<std::string>>("labels");
    auto centroids = r.get<std::vector<Embedding>>("centroids");
    const double temperature = r.number("temperature");
    auto cfg = mfcc_from_json(j.at("mfcc"));
    r.mark("mfcc");
    r.finish();
    return SpeakerModel(std::move(labels), std::move(centroids), temperature, cfg);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Format) throw;
    fail(ErrorCode::Format, std::string("speaker model schema error: ") + e.what());
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("speaker model schema error: ") + e.what());
  }
}

void SpeakerModel::save(const std::filesystem::path& path) const {
  jsonutil::write_file(path, to_json());
}

SpeakerModel SpeakerModel::load(const std::filesystem::path& path) {
  return from_json(jsonutil::read_file(path));
}

// ---------------------------------------------------------------------------

namespace {

double mean_top1(const std::vector<std::vector<double>>& distances, double temperature) {
  double acc = 0.0;
  for (const auto& d : distances) {
    const double dmin = *std::min_element(d.begin(), d.end());
    double sum = 0.0;
    for (double v : d) sum += std::exp(-(v - dmin) / temperature);
    acc += 1.0 / sum;
  }
  return acc / static_cast<double>(distances.size());
}

}  // namespace

EnrollResult enroll(const Corpus& corpus, const MfccConfig& cfg) {
  cfg.validate();
  require(classifier_rate(cfg.sample_rate), "speaker models run at 8000 or 16000 Hz");
  require(corpus.size() >= 2, "insufficient data: enrollment needs at least two speakers");
  for (const auto& [label, utts] : corpus) {
    require(utts.size() >= 3, "insufficient data: speaker '" + label + "' has fewer than 3 utterances");
  }

  std::vector<std::string> labels;
  std::vector<Embedding> centroids;
  std::vector<Embedding> all;
  for (const auto& [label, utts] : corpus) {
    Embedding c;
    for (const auto& u : utts) {
      auto e = embed(u.sample_rate() == cfg.sample_rate ? u : resample(u, cfg.sample_rate), cfg);
      if (c.empty()) c.assign(e.size(), 0.0);
      for (std::size_t i = 0; i < e.size(); ++i) c[i] += e[i];
      all.push_back(std::move(e));
    }
    for (auto& v : c) v /= static_cast<double>(utts.size());
    labels.push_back(label);
    centroids.push_back(std::move(c));
  }

  std::vector<std::string> warnings;
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      if (euclidean_distance(centroids[a], centroids[b]) < 1e-6) {
        warnings.push_back("indistinguishable centroids: '" + labels[a] + "' and '" + labels[b] + "'");
      }
    }
  }

  std::vector<std::vector<double>> distances;
  std::vector<double> flat;
  for (const auto& e : all) {
    std::vector<double> d;
    for (const auto& c : centroids) d.push_back(euclidean_distance(e, c));
    flat.insert(flat.end(), d.begin(), d.end());
    distances.push_back(std::move(d));
  }
  const double scale = std::max(percentile(flat, 0.5), 1e-12);

  // Mean top-1 score decreases monotonically with temperature.
  double lo = std::log(scale * 1e-8), hi = std::log(scale * 1e8);
  double temperature;
  if (mean_top1(distances, std::exp(lo)) < kTargetTop1) {
    temperature = std::exp(lo);
    warnings.push_back("temperature fit could not reach the target top-1 score");
  } else {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mean_top1(distances, std::exp(mid)) > kTargetTop1) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    temperature = std::exp(0.5 * (lo + hi));
  }

  SpeakerModel model(labels, centroids, temperature, cfg);
  const double top1 = mean_top1(distances, temperature);
  return {std::move(model), std::move(warnings), top1};
}

// ---------------------------------------------------------------------------

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AudioBuffer> load_wav_dir(const std::filesystem::path& dir) {
  std::vector<AudioBuffer> out;
  for (const auto& p : list_wavs(dir)) out.push_back(read_wav(p));
  if (out.empty()) fail(ErrorCode::Io, "no .wav files in " + dir.string());
  return out;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, "corpus directory not found: " + dir.string());
  std::vector<fs::path> speakers;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) speakers.push_back(entry.path());
  }
  std::sort(speakers.begin(), speakers.end());
  Corpus corpus;
  for (const auto& s : speakers) {
    auto wavs = list_wavs(s);
    if (wavs.empty()) continue;
    auto& utts = corpus[s.filename().string()];
    for (const auto& w : wavs) utts.push_back(read_wav(w));
  }
  return corpus;
}

json identification_to_json(const Identification& id) {
  json scores = json::object();
  for (std::size_t i = 0; i < id.labels.size(); ++i) scores[id.labels[i]] = id.scores[i];
  return {{"label", id.label}, {"scores", scores}};
}

}  // namespace tubespoof
