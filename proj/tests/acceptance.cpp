// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tubespoof/acoustics.hpp"
#include "tubespoof/asi.hpp"
#include "tubespoof/attack.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/pitch.hpp"
#include "tubespoof/run_config.hpp"
#include "tubespoof/signal.hpp"
#include "tubespoof/synth.hpp"

#ifndef TUBESPOOF_CLI_PATH
#error "TUBESPOOF_CLI_PATH must point at the command-line binary"
#endif

namespace fs = std::filesystem;
using namespace tubespoof;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string format(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string run_capture(const std::string& cmd, int* status) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) {
    *status = -1;
    return out;
  }
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int rc = pclose(p);
  *status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TableRow {
  double length_m, diameter_m, f0_hz, q0;
};

const std::vector<TableRow> kTable1 = {
    {0.406, 0.0345, 402.16, 58}, {0.613, 0.040, 270.70, 68}, {0.870, 0.052, 191.48, 77},
    {0.994, 0.0345, 170.89, 64}, {1.203, 0.052, 140.20, 79}, {1.540, 0.052, 110.36, 76},
};

// Worked by hand from the radiation and wall-loss formulas at 303 K.
const std::vector<double> kHandQ0 = {70.445, 87.248, 98.456, 89.222, 107.171, 106.107};

Outcome c1_table1_f0() {
  double worst = 0.0;
  for (const auto& row : kTable1) {
    int status = 0;
    char cmd[512];
    std::snprintf(cmd, sizeof cmd, "%s tube-info --length %.4f --diameter %.4f --temperature 303 --json",
                  TUBESPOOF_CLI_PATH, row.length_m, row.diameter_m);
    const auto out = run_capture(cmd, &status);
    if (status != 0) return {false, "tube-info exited with " + std::to_string(status)};
    const double f0 = json::parse(out).at("f0_Hz").get<double>();
    worst = std::max(worst, std::abs(f0 - row.f0_hz) / row.f0_hz);
  }
  return {worst < 0.005, "max relative error " + format("%.3f%%", 100 * worst)};
}

Outcome c2_table1_q0() {
  const Environment env(303.0);
  double worst_ratio = 1.0, worst_sig = 0.0;
  for (std::size_t i = 0; i < kTable1.size(); ++i) {
    const double q = quality_factor(TubeSpec(kTable1[i].length_m, kTable1[i].diameter_m), env);
    const double ratio = std::max(q / kTable1[i].q0, kTable1[i].q0 / q);
    worst_ratio = std::max(worst_ratio, ratio);
    worst_sig = std::max(worst_sig, std::abs(q - kHandQ0[i]) / kHandQ0[i]);
  }
  // three significant figures: relative agreement better than 5e-3
  const bool pass = worst_ratio <= 1.5 && worst_sig < 5e-3;
  return {pass, "worst ratio to published " + format("%.3f", worst_ratio) + ", hand-computation deviation " +
                    format("%.2e", worst_sig)};
}

// Independent root finder: split at the analytic cotangent poles and scan each
// continuous piece on a 0.01 Hz grid.
std::vector<double> dense_two_tube_roots(const TwoTubeSpec& spec, const Environment& env, double nyquist) {
  const double c = env.c_air();
  const double l1 = spec.first().length_m() + 0.8 * spec.first().diameter_m();
  const double l2 = spec.second().length_m() + 0.8 * spec.second().diameter_m();
  const double a1 = std::numbers::pi * std::pow(spec.first().diameter_m(), 2) / 4;
  const double a2 = std::numbers::pi * std::pow(spec.second().diameter_m(), 2) / 4;
  auto g = [&](double f) {
    const double k = 2 * std::numbers::pi * f / c;
    return a1 / std::tan(k * l1) - a2 / std::tan(k * l2);
  };
  std::vector<double> cuts = {20.0, nyquist};
  for (double l : {l1, l2})
    for (int n = 1; n * c / (2 * l) < nyquist; ++n)
      if (n * c / (2 * l) > 20.0) cuts.push_back(n * c / (2 * l));
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> roots;
  const double step = 0.01;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k] + 1e-7, hi = cuts[k + 1] - 1e-7;
    if (hi <= lo) continue;
    double fa = lo, ga = g(fa);
    for (double fb = std::min(fa + step, hi);; fb = std::min(fb + step, hi)) {
      const double gb = g(fb);
      if ((ga < 0) != (gb < 0)) roots.push_back(fa + (fb - fa) * ga / (ga - gb));
      if (fb >= hi) break;
      fa = fb;
      ga = gb;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

Outcome c3_two_tube_oracle() {
  const Environment env;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> len(0.05, 1.2), dia(0.008, 0.05);
  int mismatched = 0;
  double worst = 0.0;
  std::size_t total_roots = 0;
  for (int i = 0; i < 50; ++i) {
    const TwoTubeSpec spec(TubeSpec(len(rng), dia(rng)), TubeSpec(len(rng), dia(rng)));
    const auto profile = resonances_two_tube(spec, env, 4000.0);
    const auto oracle = dense_two_tube_roots(spec, env, 4000.0);
    if (oracle.size() != profile.harmonics.size()) {
      ++mismatched;
      continue;
    }
    total_roots += oracle.size();
    for (std::size_t k = 0; k < oracle.size(); ++k)
      worst = std::max(worst, std::abs(oracle[k] - profile.harmonics[k].frequency_hz));
  }
  return {mismatched == 0 && worst <= 0.05, std::to_string(mismatched) + " count mismatches, " +
                                                 std::to_string(total_roots) + " roots, max deviation " +
                                                 format("%.4f Hz", worst)};
}

BandPassFilterBank tube1_bank(int rate) {
  const Environment env;
  return bank_from_profile(resonance_profile_single(TubeSpec(0.406, 0.0345), env, rate / 2.0), rate);
}

Outcome c4_filterbank_comb() {
  const int rate = 8000;
  const auto bank = tube1_bank(rate);
  const auto y = apply(bank, chirp(3.0, 100.0, 3700.0, rate));
  const auto spec = fft(y);
  const double df = spec.bin_resolution;
  std::vector<double> mag(spec.bins.size() / 2 + 1);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(spec.bins[i]);
  // average over +-1 Hz so sweep ripple does not create spurious maxima
  const auto half = static_cast<long>(std::round(1.0 / df));
  std::vector<double> sm(mag.size());
  for (long i = 0; i < static_cast<long>(mag.size()); ++i) {
    double s = 0;
    long n = 0;
    for (long j = std::max(0L, i - half); j <= std::min<long>(mag.size() - 1, i + half); ++j, ++n) s += mag[j];
    sm[i] = s / n;
  }
  int checked = 0, hit = 0;
  double worst = 0.0;
  for (const auto& b : bank.bands()) {
    if (b.center_hz >= 3700.0) continue;
    ++checked;
    const long lo = static_cast<long>(b.center_hz * 0.95 / df), hi = static_cast<long>(b.center_hz * 1.05 / df);
    long best = lo;
    for (long i = lo; i <= hi; ++i)
      if (sm[i] > sm[best]) best = i;
    const bool local_max = sm[best] >= sm[best - 1] && sm[best] >= sm[best + 1];
    const double err = std::abs(best * df - b.center_hz) / b.center_hz;
    worst = std::max(worst, err);
    hit += local_max && err <= 0.01;
  }
  return {checked > 0 && hit == checked,
          std::to_string(hit) + "/" + std::to_string(checked) + " harmonics, max error " + format("%.3f%%", 100 * worst)};
}

Outcome c5_linearity() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> length(500, 6000);
  const Environment env;
  double worst_lin = 0.0, worst_imag = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int rate = i % 2 ? 16000 : 8000;
    const auto& row = kTable1[i % kTable1.size()];
    const auto bank =
        bank_from_profile(resonance_profile_single(TubeSpec(row.length_m, row.diameter_m), env, rate / 2.0), rate);
    const int n = length(rng);
    std::vector<double> x(n), z(n), mix(n);
    const double a = gauss(rng), b = gauss(rng);
    for (int k = 0; k < n; ++k) {
      x[k] = 0.3 * gauss(rng);
      z[k] = 0.3 * gauss(rng);
      mix[k] = a * x[k] + b * z[k];
    }
    const auto fx = apply_with_residue(bank, AudioBuffer(x, rate));
    const auto fz = apply_with_residue(bank, AudioBuffer(z, rate));
    const auto fm = apply_with_residue(bank, AudioBuffer(mix, rate));
    double err = 0.0;
    for (int k = 0; k < n; ++k) {
      const double d = fm.audio.data()[k] - (a * fx.audio.data()[k] + b * fz.audio.data()[k]);
      err += d * d;
    }
    worst_lin = std::max(worst_lin, std::sqrt(err / n));
    worst_imag = std::max({worst_imag, fx.imag_rms, fz.imag_rms, fm.imag_rms});
  }
  return {worst_lin < 1e-9 && worst_imag < 1e-9,
          "linearity RMS " + format("%.2e", worst_lin) + ", imaginary RMS " + format("%.2e", worst_imag)};
}

AudioBuffer noisy_harmonic(double f0, int harmonics, int rate, double snr_db, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(0.3, 1.0), phase(0.0, 2 * std::numbers::pi);
  std::normal_distribution<double> gauss;
  const int n = rate;  // one second
  std::vector<double> x(n, 0.0);
  for (int h = 1; h <= harmonics; ++h) {
    const double a = amp(rng), ph = phase(rng);
    for (int k = 0; k < n; ++k) x[k] += a * std::sin(2 * std::numbers::pi * h * f0 * k / rate + ph);
  }
  double p = 0;
  for (double v : x) p += v * v;
  p /= n;
  const double scale = 0.3 / std::sqrt(p);
  const double noise = std::sqrt(std::pow(10.0, -snr_db / 10.0));
  for (double& v : x) v = v * scale + 0.3 * noise * gauss(rng);
  return AudioBuffer(std::move(x), rate);
}

Outcome c6_pitch() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> f0s(80.0, 400.0);
  std::uniform_int_distribution<int> hs(3, 12);
  int good = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double f0 = f0s(rng);
    const int h = hs(rng);
    const int rate = 16000;  // 12 harmonics of 400 Hz stay below Nyquist
    const auto track = pitch_track(noisy_harmonic(f0, h, rate, 30.0, rng));
    const auto est = track.median_hz();
    const double err = est ? std::abs(*est - f0) : 1e9;
    worst = std::max(worst, err);
    good += err <= 1.0;
  }
  return {good >= 48, std::to_string(good) + "/50 within 1 Hz (worst " + format("%.2f Hz)", worst)};
}

Outcome c7_pitch_shift() {
  const int rate = 8000;
  const std::vector<int> harm = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto x = harmonic_series(200.0, harm, 1.0, rate);
  // tube-like sharpness; no band near 200 Hz
  const std::vector<Band> off = {{400.0, 60.0}, {800.0, 60.0}, {1200.0, 60.0}};
  std::vector<Band> aligned;
  for (int h : harm) aligned.push_back({200.0 * h, 100.0});
  const double shift_off = mean_pitch_shift(x, apply(BandPassFilterBank(off, rate), x));
  const double shift_aligned = mean_pitch_shift(x, apply(BandPassFilterBank(aligned, rate), x));
  return {shift_off > 100.0 && std::abs(shift_aligned) < 2.0,
          "excluding bank " + format("%+.1f Hz", shift_off) + ", aligned bank " + format("%+.2f Hz", shift_aligned)};
}

Outcome c8_regression() {
  const auto signals = study_signals(50, 1, 8000);
  const auto tubes = reference_tubes();
  const auto study = pitch_shift_study(signals, tubes, Environment());
  const auto& r = study.report;
  const double p = std::min(r.p_values[1], r.p_values[2]);
  return {p < 0.01 && r.r_squared > 0.1, "R^2 " + format("%.3f", r.r_squared) + ", p(L) " +
                                             format("%.2e", r.p_values[1]) + ", p(d) " + format("%.2e", r.p_values[2])};
}

Outcome c9_surrogate() {
  const auto voices = voice_bank(5, 42);
  Corpus corpus;
  std::uint64_t seed = 900;
  for (std::size_t v = 0; v < voices.size(); ++v) {
    auto& utts = corpus["spk" + std::to_string(v)];
    for (int u = 0; u < 10; ++u) utts.push_back(synthesize_utterance(voices[v], 1.0, 8000, ++seed));
  }
  MfccConfig cfg;
  cfg.sample_rate = 8000;
  const auto model = enroll(corpus, cfg).model;
  int correct = 0, total = 0;
  for (const auto& [label, utts] : corpus)
    for (const auto& u : utts) {
      ++total;
      correct += model.identify(u).label == label;
    }
  return {correct == total, std::to_string(correct) + "/" + std::to_string(total) + " enrollment utterances"};
}

// Planted fixtures shared by criteria 10-12.
struct PlantedRun {
  PlantedFixture fixture;
  std::unique_ptr<SpeakerModel> model;
  AttackResult result;
};

std::vector<PlantedRun>& planted_runs() {
  static std::vector<PlantedRun> runs;
  return runs;
}

MfccConfig rate_mfcc(int rate) {
  MfccConfig m;
  m.sample_rate = rate;
  return m;
}

Outcome c10_planted() {
  auto& runs = planted_runs();
  int recovered = 0;
  std::size_t max_inv = 0;
  for (std::uint64_t fs_seed = 1; fs_seed <= 10; ++fs_seed) {
    PlantedSpec spec;
    spec.seed = fs_seed;
    auto fixture = planted_fixture(spec);
    auto model = std::make_unique<SpeakerModel>(enroll(fixture.enrollment, rate_mfcc(spec.sample_rate)).model);
    SurrogateOracle oracle(*model);
    for (std::uint64_t de_seed = 0; de_seed < 10; ++de_seed) {
      DEConfig cfg;
      cfg.seed = fs_seed * 100 + de_seed;
      auto r = attack_target(fixture.attacker_utts, "victim", oracle, SearchSpace::single_tube(), cfg, fixture.env);
      const double f0 = r.realization.feasible() ? r.realization.profile.fundamental_hz() : 0.0;
      const bool ok = r.success && std::abs(f0 - 300.0) <= 10.0 + 1e-9 && r.invocations <= 600;
      recovered += ok;
      max_inv = std::max(max_inv, r.invocations);
      if (r.success) runs.push_back({fixture, nullptr, std::move(r)});
    }
    // keep the model alive alongside the first run of this fixture
    for (auto& run : runs)
      if (!run.model && run.fixture.enrollment == fixture.enrollment) {
        run.model = std::move(model);
        break;
      }
  }
  return {recovered >= 80, std::to_string(recovered) + "/100 recovered f0 within 10 Hz, max invocations " +
                               std::to_string(max_inv)};
}

const SpeakerModel* model_for(const PlantedRun& run) {
  for (const auto& r : planted_runs())
    if (r.model && r.fixture.enrollment == run.fixture.enrollment) return r.model.get();
  return nullptr;
}

// Victims here are enrolled from separate attacker takes. With the shared-source
// fixture every adversarial utterance is literally an enrollment sample, which
// says nothing about how the model scores out-of-distribution input.
Outcome c11_confidence_gap() {
  std::vector<Identification> clean, adv;
  int attempts = 0, successes = 0;
  for (std::uint64_t fs_seed = 1; fs_seed <= 10; ++fs_seed) {
    PlantedSpec spec;
    spec.seed = fs_seed;
    spec.shared_source = false;
    spec.attack_utts = 3;
    const auto fixture = planted_fixture(spec);
    const auto model = enroll(fixture.enrollment, rate_mfcc(spec.sample_rate)).model;
    SurrogateOracle oracle(model);
    DEConfig cfg;
    cfg.seed = fs_seed * 100;
    ++attempts;
    const auto r = attack_target(fixture.attacker_utts, "victim", oracle, SearchSpace::single_tube(), cfg, fixture.env);
    if (!r.success) continue;
    ++successes;
    for (const auto& u : fixture.attacker_utts) clean.push_back(model.identify(u));
    for (const auto& u : apply_tube(r.realization, fixture.attacker_utts)) adv.push_back(model.identify(u));
  }
  if (clean.empty()) return {false, "no successful planted attacks"};
  const auto c = score_set_summary(clean), a = score_set_summary(adv);
  return {a.mean_gap < c.mean_gap, "mean gap adversarial " + format("%.3f", a.mean_gap) + " vs clean " +
                                       format("%.3f", c.mean_gap) + " over " + std::to_string(adv.size()) +
                                       " utterances from " + std::to_string(successes) + "/" +
                                       std::to_string(attempts) + " successful attacks"};
}

Outcome c12_similarity() {
  double victim = 0.0, nonvictim = 0.0;
  std::size_t n = 0;
  for (const auto& run : planted_runs()) {
    const auto* model = model_for(run);
    if (!model) continue;
    std::vector<std::string> others;
    for (const auto& l : model->labels())
      if (l.rfind("speaker_", 0) == 0) others.push_back(l);
    const auto adv = apply_tube(run.result.realization, run.fixture.attacker_utts);
    const auto s = embedding_similarity_stats(*model, adv, "victim", others);
    victim += s.mean_victim;
    nonvictim += s.mean_nonvictim;
    ++n;
  }
  if (!n) return {false, "no successful planted attacks"};
  victim /= n;
  nonvictim /= n;
  return {victim > nonvictim, "attack-victim cosine " + format("%.3f", victim) + " vs attack-non-victim " +
                                  format("%.3f", nonvictim)};
}

Outcome c13_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("tubespoof_accept_" + std::to_string(getpid()));
  fs::remove_all(dir);
  write_planted_fixture(planted_fixture(PlantedSpec{}), dir);
  std::ofstream(dir / "run.json") << R"({"paths": {"corpus_dir": "corpus"}})";
  std::string outputs[2], stdout_text[2];
  for (int i = 0; i < 2; ++i) {
    const auto out_dir = dir / ("out" + std::to_string(i));
    const std::string cmd = std::string(TUBESPOOF_CLI_PATH) + " attack --config " + (dir / "run.json").string() +
                            " --attacker " + (dir / "attacker").string() + " --target victim --seed 7 --output-dir " +
                            out_dir.string();
    int status = 0;
    stdout_text[i] = run_capture(cmd, &status);
    if (status != 0) return {false, "attack exited with " + std::to_string(status)};
    outputs[i] = read_bytes(out_dir / "attack_victim.json");
  }
  fs::remove_all(dir);
  const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && stdout_text[0] == stdout_text[1];
  return {same, same ? "identical " + std::to_string(outputs[0].size()) + "-byte JSON" : "outputs differ"};
}

Outcome c14_dtw_xcorr() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  std::vector<double> v(4000);
  for (double& s : v) s = gauss(rng) * 0.2;
  const AudioBuffer x(v, 8000);
  const double d = dtw_distance(x, x);
  const auto xc = cross_correlation(x, x);
  const auto k = xc.peak_index();
  const bool pass = d == 0.0 && xc.lags[k] == 0 && std::abs(xc.coeffs[k] - 1.0) < 1e-12;
  return {pass, "dtw(x,x) = " + format("%g", d) + ", autocorrelation peak " + format("%.12f", xc.coeffs[k]) +
                    " at lag " + std::to_string(xc.lags[k])};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "Table 1 f0 reproduction", 1, c1_table1_f0},
      {2, "Table 1 Q0 band", 1, c2_table1_q0},
      {3, "two-tube solver matches dense scan", 30, c3_two_tube_oracle},
      {4, "filterbank comb peaks", 5, c4_filterbank_comb},
      {5, "filter linearity and realness", 10, c5_linearity},
      {6, "pitch estimator accuracy", 20, c6_pitch},
      {7, "pitch-shift effect", 5, c7_pitch_shift},
      {8, "pitch-shift regression study", 120, c8_regression},
      {9, "surrogate fidelity", 30, c9_surrogate},
      {10, "planted attack recovery", 600, c10_planted},
      {11, "confidence-gap direction", 120, c11_confidence_gap},
      {12, "similarity direction", 60, c12_similarity},
      {13, "attack determinism", 600, c13_determinism},
      {14, "DTW and cross-correlation sanity", 5, c14_dtw_xcorr},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : " OVER TIME");
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
