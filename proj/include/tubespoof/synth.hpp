#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubespoof/acoustics.hpp"
#include "tubespoof/asi.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

struct Formant {
  double center_hz;
  double bandwidth_hz;
};

/// Parameters of a synthetic voiced source: harmonics shaped by a spectral
/// tilt and formant envelope, with intonation, vibrato, syllable-rate amplitude
/// modulation and aspiration noise.
struct VoiceProfile {
  double f0_hz = 150.0;
  double tilt_db_per_octave = -9.0;
  std::array<Formant, 3> formants{{{600, 90}, {1400, 120}, {2500, 160}}};
  double vibrato_depth = 0.01;  // fraction of f0
  double vibrato_rate_hz = 5.0;
  double intonation = 0.10;     // depth of the slow f0 contour, fraction of f0
  double breath = 0.02;         // noise RMS relative to the voiced part
  double syllable_rate_hz = 3.0;
};

/// Harmonic amplitude scaling: tilt and formant envelope, normalized so the
/// envelope peaks near 1.
double voice_envelope(const VoiceProfile& v, double f_hz);

/// One utterance. `seed` jitters f0 and formants by a few percent so that no
/// two utterances of a voice are identical. Silence of pad_s seconds is
/// added on both sides.
AudioBuffer synthesize_utterance(const VoiceProfile& v, double duration_s, int sample_rate,
                                 std::uint64_t seed, double pad_s = 0.15, double peak = 0.5);

/// Sum of equal-amplitude sines at k*f0 for the listed harmonic numbers.
AudioBuffer harmonic_series(double f0_hz, const std::vector<int>& harmonics, double duration_s,
                            int sample_rate, double amplitude = 0.1);

/// Steady voiced signals with f0 spread evenly over [f0_lo, f0_hi], used by
/// the pitch-shift study when no corpus is given.
std::vector<AudioBuffer> study_signals(std::size_t count, std::uint64_t seed, int sample_rate,
                                       double duration_s = 1.0, double f0_lo = 120.0,
                                       double f0_hi = 280.0, double breath = 1.0);

/// n deterministic voices spread over pitch, tilt and vowel space.
std::vector<VoiceProfile> voice_bank(std::size_t n, std::uint64_t seed);

struct PlantedTube {
  std::string label;
  double f0_hz;
  double q0;
};

struct PlantedSpec {
  std::size_t distractors = 3;      // unrelated enrolled speakers
  std::size_t enroll_utts = 6;      // per enrolled label
  std::size_t attack_utts = 1;
  double duration_s = 1.5;
  int sample_rate = 8000;
  std::uint64_t seed = 1;
  // Decoys are further attacker-through-tube classes; without them any
  // filtered audio lands nearest the victim and the landscape is flat.
  std::vector<PlantedTube> tubes{{"victim", 300.0, 60.0},
                                 {"decoy_a", 150.0, 70.0},
                                 {"decoy_b", 450.0, 75.0},
                                 {"decoy_c", 700.0, 45.0}};
  // Victims are enrolled from the attack utterances themselves (cycled up to
  // three takes), so the planted tube reproduces the victim exactly. Otherwise
  // fresh attacker takes are used.
  bool shared_source = true;
};

/// Enrollment corpus where each planted victim is the attacker's voice heard
/// through a known tube, alongside the attacker and unrelated distractors.
struct PlantedFixture {
  Corpus enrollment;
  std::vector<AudioBuffer> attacker_utts;  // held out from enrollment
  std::string attacker_label = "attacker";
  std::vector<PlantedTube> tubes;
  Environment env;
};

PlantedFixture planted_fixture(const PlantedSpec& spec, const Environment& env = Environment());

/// Writes <dir>/corpus/<label>/uttNN.wav, <dir>/attacker/uttNN.wav and
/// <dir>/planted.json.
void write_planted_fixture(const PlantedFixture& f, const std::filesystem::path& dir);

nlohmann::json planted_to_json(const PlantedFixture& f);

/// Keys as in PlantedSpec; tubes are [{label, f0_Hz, Q0}]. Unknown keys are rejected.
PlantedSpec planted_spec_from_json(const nlohmann::json& j);

}  // namespace tubespoof
