#include "tubespoof/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/json_util.hpp"

namespace tubespoof {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double symmetric() { return 2.0 * uniform() - 1.0; }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * uniform());
  }

 private:
  std::mt19937_64 gen_;
};

std::string utt_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%02zu.wav", i);
  return buf;
}

}  // namespace

double voice_envelope(const VoiceProfile& v, double f_hz) {
  const double octaves = std::log2(std::max(f_hz, 50.0) / 100.0);
  const double tilt = std::pow(10.0, v.tilt_db_per_octave * octaves / 20.0);
  double formant = 0.03;
  for (const auto& fm : v.formants) {
    const double x = (f_hz - fm.center_hz) / (0.5 * fm.bandwidth_hz);
    formant += 1.0 / (1.0 + x * x);
  }
  return tilt * formant;
}

AudioBuffer synthesize_utterance(const VoiceProfile& voice, double duration_s, int sample_rate,
                                 std::uint64_t seed, double pad_s, double peak) {
  require(duration_s > 0.0 && sample_rate > 0, "utterance needs positive duration and rate");
  require(pad_s >= 0.0 && peak > 0.0 && peak <= 1.0, "bad padding or peak level");
  Draws rng(seed);
  VoiceProfile v = voice;
  v.f0_hz *= 1.0 + 0.03 * rng.symmetric();
  for (auto& fm : v.formants) fm.center_hz *= 1.0 + 0.02 * rng.symmetric();
  const double vib_phase = kTwoPi * rng.uniform();
  const double syl_phase = kTwoPi * rng.uniform();
  const double int_phase = kTwoPi * rng.uniform();
  const double int_rate = (0.6 + 0.6 * rng.uniform()) / duration_s;

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const auto pad = static_cast<std::size_t>(std::llround(pad_s * sample_rate));
  const double fs = sample_rate;
  const double nyq = 0.5 * fs;
  const double f0_top = v.f0_hz * (1.0 + v.intonation) * (1.0 + v.vibrato_depth);
  const int n_harm = std::max(1, static_cast<int>(0.95 * nyq / f0_top));

  std::vector<double> amp(n_harm), phase0(n_harm);
  for (int k = 0; k < n_harm; ++k) phase0[k] = kTwoPi * rng.uniform();

  std::vector<double> voiced(n, 0.0);
  double phi = 0.0;
  const std::size_t fade = std::min<std::size_t>(n / 4, static_cast<std::size_t>(0.02 * fs));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / fs;
    const double contour = 1.0 + v.intonation * std::sin(kTwoPi * int_rate * t + int_phase);
    const double f_inst = v.f0_hz * contour *
                          (1.0 + v.vibrato_depth * std::sin(kTwoPi * v.vibrato_rate_hz * t + vib_phase));
    // Formants stay put while f0 moves, so harmonic weights follow the contour.
    if (i % 64 == 0)
      for (int k = 0; k < n_harm; ++k) amp[k] = voice_envelope(v, (k + 1) * f_inst);
    double s = 0.0;
    for (int k = 0; k < n_harm; ++k) s += amp[k] * std::sin((k + 1) * phi + phase0[k]);
    double env = 0.6 + 0.4 * std::sin(kTwoPi * v.syllable_rate_hz * t + syl_phase);
    if (i < fade) env *= static_cast<double>(i) / fade;
    if (n - 1 - i < fade) env *= static_cast<double>(n - 1 - i) / fade;
    voiced[i] = env * s;
    phi += kTwoPi * f_inst / fs;
    if (phi > kTwoPi * 1e6) phi = std::fmod(phi, kTwoPi);
  }

  const double voiced_rms = rms(voiced);
  std::vector<double> out(n + 2 * pad, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[pad + i] = voiced[i] + v.breath * voiced_rms * rng.normal();
  double mx = 0.0;
  for (double x : out) mx = std::max(mx, std::abs(x));
  if (mx > 0.0)
    for (double& x : out) x *= peak / mx;
  return AudioBuffer(std::move(out), sample_rate);
}

AudioBuffer harmonic_series(double f0_hz, const std::vector<int>& harmonics, double duration_s,
                            int sample_rate, double amplitude) {
  require(f0_hz > 0.0 && duration_s > 0.0 && sample_rate > 0, "bad harmonic series parameters");
  require(!harmonics.empty(), "harmonic list is empty");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> x(n, 0.0);
  for (int k : harmonics) {
    require(k >= 1 && k * f0_hz < sample_rate / 2.0, "harmonic above Nyquist");
    const double w = kTwoPi * k * f0_hz / sample_rate;
    for (std::size_t i = 0; i < n; ++i) x[i] += amplitude * std::sin(w * static_cast<double>(i));
  }
  return AudioBuffer(std::move(x), sample_rate);
}

std::vector<VoiceProfile> voice_bank(std::size_t n, std::uint64_t seed) {
  // Rough vowel formant targets: a, i, u, e, o, ae.
  static constexpr std::array<std::array<double, 3>, 6> vowels{{{730, 1090, 2440},
                                                                {270, 2290, 3010},
                                                                {300, 870, 2240},
                                                                {530, 1840, 2480},
                                                                {570, 840, 2410},
                                                                {660, 1720, 2410}}};
  Draws rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<VoiceProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    VoiceProfile v;
    v.f0_hz = 105.0 + 120.0 * (n > 1 ? static_cast<double>((i * 7) % n) / (n - 1) : 0.5) +
              5.0 * rng.symmetric();
    v.tilt_db_per_octave = -6.0 - 6.0 * rng.uniform();
    const auto& vw = vowels[i % vowels.size()];
    for (int k = 0; k < 3; ++k) {
      v.formants[k].center_hz = vw[k] * (1.0 + 0.05 * rng.symmetric());
      v.formants[k].bandwidth_hz = 80.0 + 40.0 * k + 30.0 * rng.uniform();
    }
    v.vibrato_depth = 0.005 + 0.01 * rng.uniform();
    v.vibrato_rate_hz = 4.0 + 2.0 * rng.uniform();
    v.breath = 0.15 + 0.1 * rng.uniform();
    v.intonation = 0.08 + 0.06 * rng.uniform();
    v.syllable_rate_hz = 2.5 + 1.5 * rng.uniform();
    out.push_back(v);
  }
  return out;
}

std::vector<AudioBuffer> study_signals(std::size_t count, std::uint64_t seed, int sample_rate,
                                       double duration_s, double f0_lo, double f0_hi,
                                       double breath) {
  require(count >= 1 && f0_lo > 0.0 && f0_lo <= f0_hi, "bad study signal parameters");
  auto voices = voice_bank(count, seed);
  std::vector<AudioBuffer> out;
  for (std::size_t i = 0; i < count; ++i) {
    VoiceProfile v = voices[i];
    v.f0_hz = count > 1 ? f0_lo + (f0_hi - f0_lo) * static_cast<double>(i) / (count - 1) : f0_lo;
    v.intonation = 0.0;
    v.vibrato_depth = 0.0;
    v.breath = breath;
    out.push_back(synthesize_utterance(v, duration_s, sample_rate, seed * 7919 + i, 0.0));
  }
  return out;
}

PlantedFixture planted_fixture(const PlantedSpec& spec, const Environment& env) {
  require(spec.enroll_utts >= 3, "planted fixture needs at least 3 enrollment utterances");
  require(spec.attack_utts >= 1, "planted fixture needs attack utterances");
  require(!spec.tubes.empty(), "planted fixture needs at least one planted tube");
  PlantedFixture f;
  f.env = env;
  f.tubes = spec.tubes;

  const auto voices = voice_bank(1 + spec.distractors, spec.seed);
  const std::uint64_t base = spec.seed * 1000003ULL;
  std::uint64_t next_seed = base;
  auto utterances = [&](const VoiceProfile& v, std::size_t count) {
    std::vector<AudioBuffer> out;
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(synthesize_utterance(v, spec.duration_s, spec.sample_rate, ++next_seed));
    return out;
  };

  f.enrollment[f.attacker_label] = utterances(voices[0], spec.enroll_utts);
  f.attacker_utts = utterances(voices[0], spec.attack_utts);
  for (const auto& t : spec.tubes) {
    require(!f.enrollment.count(t.label), "duplicate planted label " + t.label);
    const auto design = tube_from_resonance(t.f0_hz, t.q0, env);
    const auto profile = resonance_profile_single(design.tube, env, spec.sample_rate / 2.0);
    const auto bank = bank_from_profile(profile, spec.sample_rate);
    std::vector<AudioBuffer> victim;
    if (spec.shared_source) {
      // Cycle the attack takes so short lists still meet the enrollment minimum.
      const std::size_t count = std::max<std::size_t>(3, f.attacker_utts.size());
      for (std::size_t i = 0; i < count; ++i)
        victim.push_back(apply(bank, f.attacker_utts[i % f.attacker_utts.size()]));
    } else {
      for (const auto& u : utterances(voices[0], spec.enroll_utts)) victim.push_back(apply(bank, u));
    }
    f.enrollment[t.label] = std::move(victim);
  }
  for (std::size_t i = 1; i < voices.size(); ++i) {
    char label[32];
    std::snprintf(label, sizeof label, "speaker_%02zu", i);
    require(!f.enrollment.count(label), std::string("duplicate planted label ") + label);
    f.enrollment[label] = utterances(voices[i], spec.enroll_utts);
  }
  return f;
}

json planted_to_json(const PlantedFixture& f) {
  json tubes = json::array();
  for (const auto& t : f.tubes) {
    const auto design = tube_from_resonance(t.f0_hz, t.q0, f.env);
    tubes.push_back({{"label", t.label},
                     {"f0_Hz", t.f0_hz},
                     {"Q0", t.q0},
                     {"length_m", design.tube.length_m()},
                     {"diameter_m", design.tube.diameter_m()},
                     {"saturated", design.saturated}});
  }
  json labels = json::array();
  for (const auto& [label, utts] : f.enrollment) labels.push_back(label);
  const int rate = f.attacker_utts.empty() ? 0 : f.attacker_utts.front().sample_rate();
  return {{"attacker_label", f.attacker_label},
          {"labels", labels},
          {"sample_rate", rate},
          {"temperature_K", f.env.temperature_K()},
          {"attack_utterances", f.attacker_utts.size()},
          {"planted", tubes}};
}

void write_planted_fixture(const PlantedFixture& f, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "corpus", ec);
  fs::create_directories(dir / "attacker", ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [label, utts] : f.enrollment) {
    fs::create_directories(dir / "corpus" / label, ec);
    if (ec) fail(ErrorCode::Io, "cannot create speaker directory " + label);
    for (std::size_t i = 0; i < utts.size(); ++i) write_wav(dir / "corpus" / label / utt_name(i + 1), utts[i]);
  }
  for (std::size_t i = 0; i < f.attacker_utts.size(); ++i)
    write_wav(dir / "attacker" / utt_name(i + 1), f.attacker_utts[i]);
  jsonutil::write_file(dir / "planted.json", planted_to_json(f));
}

PlantedSpec planted_spec_from_json(const json& j) {
  jsonutil::ObjectReader r(j, "planted spec");
  PlantedSpec spec;
  spec.distractors = r.optional_u64("distractors", spec.distractors);
  spec.enroll_utts = r.optional_u64("enroll_utts", spec.enroll_utts);
  spec.attack_utts = r.optional_u64("attack_utts", spec.attack_utts);
  spec.duration_s = r.optional_number("duration_s", spec.duration_s);
  spec.sample_rate = r.optional_int("sample_rate", spec.sample_rate);
  spec.seed = r.optional_u64("seed", spec.seed);
  if (r.has("shared_source")) spec.shared_source = r.get<bool>("shared_source");
  else r.mark("shared_source");
  if (r.has("tubes")) {
    const auto& arr = r.at("tubes");
    if (!arr.is_array()) fail(ErrorCode::Format, "planted spec: tubes must be an array");
    spec.tubes.clear();
    for (const auto& t : arr) {
      jsonutil::ObjectReader tr(t, "planted spec tube");
      PlantedTube pt{tr.string("label"), tr.number("f0_Hz"), tr.number("Q0")};
      tr.finish();
      spec.tubes.push_back(pt);
    }
  } else {
    r.mark("tubes");
  }
  r.finish();
  return spec;
}

}  // namespace tubespoof
