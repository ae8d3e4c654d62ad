#include "tubespoof/tubespoof.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "json.hpp"

#include "tubespoof/acoustics.hpp"
#include "tubespoof/asi.hpp"
#include "tubespoof/attack.hpp"
#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/json_util.hpp"
#include "tubespoof/oracle.hpp"
#include "tubespoof/pitch.hpp"
#include "tubespoof/run_config.hpp"
#include "tubespoof/signal.hpp"
#include "tubespoof/synth.hpp"
#include "tubespoof/validate.hpp"

using nlohmann::json;
namespace ts = tubespoof;

struct tsp_audio {
  ts::AudioBuffer buf;
};
struct tsp_model {
  ts::SpeakerModel model;
};
struct tsp_adapter {
  ts::AdapterClient client;
};
struct tsp_config {
  ts::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

tsp_status fail_with(tsp_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
tsp_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return TSP_OK;
  } catch (const ts::Error& e) {
    return fail_with(static_cast<tsp_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail_with(TSP_FORMAT, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(TSP_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(TSP_INTERNAL, e.what());
  } catch (...) {
    return fail_with(TSP_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  if (!p) ts::fail(ts::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  need(out, "output pointer");
  *out = copy_out(ts::jsonutil::dump(j));
}

json parse(const char* text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) ts::fail(ts::ErrorCode::Format, std::string(what) + " is not valid JSON");
  return j;
}

json tube_json(const ts::TubeSpec& t) { return {{"length_m", t.length_m()}, {"diameter_m", t.diameter_m()}}; }

json harmonics_json(const ts::ResonanceProfile& p) {
  json arr = json::array();
  for (std::size_t i = 0; i < p.harmonics.size(); ++i)
    arr.push_back({{"n", i + 1}, {"f_Hz", p.harmonics[i].frequency_hz}, {"Q", p.harmonics[i].q}});
  return arr;
}

double nyquist_or_default(double nyquist_hz) { return nyquist_hz > 0.0 ? nyquist_hz : 4000.0; }

}  // namespace

extern "C" {

const char* tsp_version(void) { return "0.1.0"; }

const char* tsp_status_name(tsp_status status) {
  switch (status) {
    case TSP_OK: return "ok";
    case TSP_INVALID_ARGUMENT: return "invalid argument";
    case TSP_DOMAIN: return "domain error";
    case TSP_IO: return "i/o error";
    case TSP_FORMAT: return "format error";
    case TSP_NO_SPEECH: return "no speech";
    case TSP_TIMEOUT: return "timeout";
    case TSP_PROTOCOL: return "protocol error";
    case TSP_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* tsp_last_error(void) { return g_last_error.c_str(); }

void tsp_string_free(char* s) { std::free(s); }

tsp_status tsp_audio_create(const double* samples, size_t count, int sample_rate, tsp_audio** out) {
  return guarded([&] {
    need(out, "output pointer");
    if (count) need(samples, "samples");
    std::vector<double> v(samples, samples + count);
    *out = new tsp_audio{ts::AudioBuffer(std::move(v), sample_rate)};
  });
}

tsp_status tsp_audio_read(const char* path, tsp_audio** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output pointer");
    *out = new tsp_audio{ts::read_wav(path)};
  });
}

tsp_status tsp_audio_write(const tsp_audio* audio, const char* path) {
  return guarded([&] {
    need(audio, "audio");
    need(path, "path");
    ts::write_wav(path, audio->buf);
  });
}

tsp_status tsp_audio_chirp(double duration_s, double f_start, double f_end, int sample_rate, tsp_audio** out) {
  return guarded([&] {
    need(out, "output pointer");
    *out = new tsp_audio{ts::chirp(duration_s, f_start, f_end, sample_rate)};
  });
}

size_t tsp_audio_length(const tsp_audio* audio) { return audio ? audio->buf.size() : 0; }
int tsp_audio_sample_rate(const tsp_audio* audio) { return audio ? audio->buf.sample_rate() : 0; }
const double* tsp_audio_samples(const tsp_audio* audio) { return audio ? audio->buf.data().data() : nullptr; }
void tsp_audio_free(tsp_audio* audio) { delete audio; }

tsp_status tsp_dtw_distance(const tsp_audio* a, const tsp_audio* b, double* out) {
  return guarded([&] {
    need(a, "audio");
    need(b, "audio");
    need(out, "output pointer");
    *out = ts::dtw_distance(a->buf, b->buf);
  });
}

tsp_status tsp_cross_correlation(const tsp_audio* a, const tsp_audio* b, char** json_out) {
  return guarded([&] {
    need(a, "audio");
    need(b, "audio");
    const auto xc = ts::cross_correlation(a->buf, b->buf);
    const auto k = xc.peak_index();
    emit(json_out, {{"peak_lag", xc.lags[k]}, {"peak_coefficient", xc.coeffs[k]}, {"lags", xc.lags.size()}});
  });
}

tsp_status tsp_tube_info(double length_m, double diameter_m, double temperature_k, double nyquist_hz,
                         char** json_out) {
  return guarded([&] {
    const ts::Environment env(temperature_k);
    const ts::TubeSpec tube(length_m, diameter_m);
    const double f0 = ts::fundamental_frequency(tube, env);
    const auto d = ts::damping(diameter_m, f0, env);
    const double nyq = nyquist_or_default(nyquist_hz);
    json harmonics = json::array();
    if (f0 < nyq) harmonics = harmonics_json(ts::resonance_profile_single(tube, env, nyq));
    emit(json_out, {{"tube", tube_json(tube)},
                    {"temperature_K", env.temperature_K()},
                    {"speed_of_sound_m_s", env.c_air()},
                    {"effective_length_m", tube.effective_length_m()},
                    {"f0_Hz", f0},
                    {"Q0", ts::quality_factor(tube, env)},
                    {"damping", {{"radiation", d.radiation}, {"wall", d.wall}}},
                    {"nyquist_Hz", nyq},
                    {"harmonics", harmonics}});
  });
}

tsp_status tsp_two_tube(double l1_m, double d1_m, double l2_m, double d2_m, double temperature_k,
                        double nyquist_hz, char** json_out) {
  return guarded([&] {
    const ts::Environment env(temperature_k);
    const ts::TwoTubeSpec spec(ts::TubeSpec(l1_m, d1_m), ts::TubeSpec(l2_m, d2_m));
    const double nyq = nyquist_or_default(nyquist_hz);
    const auto profile = ts::resonances_two_tube(spec, env, nyq);
    emit(json_out, {{"first", tube_json(spec.first())},
                    {"second", tube_json(spec.second())},
                    {"temperature_K", env.temperature_K()},
                    {"nyquist_Hz", nyq},
                    {"roots", harmonics_json(profile)},
                    {"warning", profile.warning ? json(*profile.warning) : json(nullptr)}});
  });
}

tsp_status tsp_tube_from_resonance(double f0_hz, double q0, double temperature_k, char** json_out) {
  return guarded([&] {
    const ts::Environment env(temperature_k);
    const auto design = ts::tube_from_resonance(f0_hz, q0, env);
    emit(json_out, {{"f0_Hz", f0_hz},
                    {"Q0", q0},
                    {"tube", tube_json(design.tube)},
                    {"saturated", design.saturated}});
  });
}

tsp_status tsp_filter_tube(const tsp_audio* in, double length_m, double diameter_m, double temperature_k,
                           tsp_audio** out) {
  return guarded([&] {
    need(in, "audio");
    need(out, "output pointer");
    const ts::Environment env(temperature_k);
    const ts::TubeSpec tube(length_m, diameter_m);
    const auto profile = ts::resonance_profile_single(tube, env, in->buf.nyquist());
    const auto bank = ts::bank_from_profile(profile, in->buf.sample_rate());
    *out = new tsp_audio{ts::apply(bank, in->buf)};
  });
}

tsp_status tsp_validate_tube(double length_m, double diameter_m, double temperature_k, double q0_override,
                             char** json_out) {
  return guarded([&] {
    ts::ValidationSettings s;
    if (q0_override > 0.0) s.q0_override = q0_override;
    const auto report = ts::validate_tube(ts::TubeSpec(length_m, diameter_m), ts::Environment(temperature_k), s);
    emit(json_out, ts::to_json(report));
  });
}

tsp_status tsp_pitch_track(const tsp_audio* audio, char** json_out) {
  return guarded([&] {
    need(audio, "audio");
    const auto track = ts::pitch_track(audio->buf);
    json frames = json::array();
    for (const auto& f : track.frames)
      frames.push_back({{"time_s", f.time_s}, {"pitch_Hz", f.pitch_hz ? json(*f.pitch_hz) : json(nullptr)}});
    const auto median = track.median_hz();
    emit(json_out, {{"frames", frames},
                    {"voiced_frames", track.voiced_count()},
                    {"median_Hz", median ? json(*median) : json(nullptr)}});
  });
}

tsp_status tsp_model_enroll(const char* corpus_dir, const char* mfcc_json, tsp_model** out, char** report_json) {
  return guarded([&] {
    need(corpus_dir, "corpus directory");
    need(out, "output pointer");
    const auto corpus = ts::load_corpus(corpus_dir);
    const auto cfg = mfcc_json ? ts::mfcc_from_json(parse(mfcc_json, "mfcc config")) : ts::default_mfcc_for(corpus);
    auto result = ts::enroll(corpus, cfg);
    json counts = json::object();
    for (const auto& [label, utts] : corpus) counts[label] = utts.size();
    const json report = {{"labels", result.model.labels()},
                         {"utterances", counts},
                         {"temperature", result.model.temperature()},
                         {"mean_top1", result.mean_top1},
                         {"mfcc", ts::mfcc_to_json(cfg)},
                         {"warnings", result.warnings}};
    auto* model = new tsp_model{std::move(result.model)};
    if (report_json) {
      try {
        emit(report_json, report);
      } catch (...) {
        delete model;
        throw;
      }
    }
    *out = model;
  });
}

tsp_status tsp_model_load(const char* path, tsp_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output pointer");
    *out = new tsp_model{ts::SpeakerModel::load(path)};
  });
}

tsp_status tsp_model_save(const tsp_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->model.save(path);
  });
}

tsp_status tsp_model_identify(const tsp_model* model, const tsp_audio* audio, char** json_out) {
  return guarded([&] {
    need(model, "model");
    need(audio, "audio");
    emit(json_out, ts::identification_to_json(model->model.identify(audio->buf)));
  });
}

void tsp_model_free(tsp_model* model) { delete model; }

tsp_status tsp_adapter_open(const char* command, double timeout_s, tsp_adapter** out) {
  return guarded([&] {
    need(command, "command");
    need(out, "output pointer");
    ts::require(std::isfinite(timeout_s) && timeout_s > 0.0, "adapter timeout must be positive");
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(timeout_s * 1000.0)));
    *out = new tsp_adapter{ts::AdapterClient(command, timeout)};
  });
}

tsp_status tsp_adapter_identify(tsp_adapter* adapter, const tsp_audio* audio, char** json_out) {
  return guarded([&] {
    need(adapter, "adapter");
    need(audio, "audio");
    emit(json_out, ts::identification_to_json(adapter->client.identify(audio->buf)));
  });
}

void tsp_adapter_free(tsp_adapter* adapter) { delete adapter; }

tsp_status tsp_config_load(const char* path, tsp_config** out) {
  return guarded([&] {
    need(out, "output pointer");
    if (path) {
      *out = new tsp_config{ts::load_run_config(path)};
    } else {
      *out = new tsp_config{ts::run_config_from_json(json::object(), std::filesystem::current_path())};
    }
  });
}

tsp_status tsp_config_apply(tsp_config* config, const char* overrides_json) {
  return guarded([&] {
    need(config, "config");
    need(overrides_json, "overrides");
    ts::RunConfig next = config->cfg;
    const json overrides = parse(overrides_json, "overrides");
    ts::jsonutil::ObjectReader r(overrides, "overrides");
    if (r.has("seed")) next.de.seed = r.optional_u64("seed", 0);
    if (r.has("jobs")) next.de.jobs = static_cast<unsigned>(r.optional_u64("jobs", 1));
    if (r.has("population")) next.de.population = r.optional_u64("population", 0);
    if (r.has("max_iterations")) next.de.max_iterations = r.optional_u64("max_iterations", 0);
    if (r.has("strategy")) {
      const auto s = r.string("strategy");
      if (s == "printed") next.de.strategy = ts::DEStrategy::Printed;
      else if (s == "best2") next.de.strategy = ts::DEStrategy::Best2;
      else ts::fail(ts::ErrorCode::InvalidArgument, "unknown DE strategy: " + s);
    }
    if (r.has("temperature_K")) next.env = ts::Environment(r.number("temperature_K"));
    if (r.has("output_dir")) next.output_dir = r.string("output_dir");
    if (r.has("corpus_dir")) next.corpus_dir = std::filesystem::path(r.string("corpus_dir"));
    if (r.has("model")) {
      next.oracle.model = std::filesystem::path(r.string("model"));
      next.oracle.adapter.reset();
    }
    if (r.has("adapter")) {
      next.oracle.adapter = r.string("adapter");
      next.oracle.model.reset();
    }
    if (r.has("timeout_s")) {
      const double t = r.number("timeout_s");
      ts::require(t > 0.0, "timeout must be positive");
      next.oracle.timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(t * 1000.0)));
    }
    if (r.has("per_target_budget")) next.per_target_budget = r.optional_u64("per_target_budget", 0);
    const double d1 = r.optional_number("d1_m", next.space.d1_m);
    if (r.has("mode")) {
      const auto m = r.string("mode");
      if (m == "single_tube") next.space = ts::SearchSpace::single_tube();
      else if (m == "two_tube") next.space = ts::SearchSpace::two_tube(d1);
      else ts::fail(ts::ErrorCode::InvalidArgument, "unknown search mode: " + m);
    } else if (next.space.mode == ts::SearchMode::TwoTube && d1 != next.space.d1_m) {
      next.space = ts::SearchSpace::two_tube(d1);
    }
    if (r.has("signals_dir")) next.study.signals_dir = std::filesystem::path(r.string("signals_dir"));
    if (r.has("synthetic_count")) next.study.synthetic_count = r.optional_u64("synthetic_count", 0);
    if (r.has("study_seed")) next.study.seed = r.optional_u64("study_seed", 0);
    r.finish();
    next.space.validate();
    next.de.validate();
    next.check_paths();
    config->cfg = std::move(next);
  });
}

tsp_status tsp_config_to_json(const tsp_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    emit(json_out, ts::run_config_to_json(config->cfg));
  });
}

void tsp_config_free(tsp_config* config) { delete config; }

tsp_status tsp_attack(const tsp_config* config, const char* attacker_dir, const char* target, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(attacker_dir, "attacker directory");
    need(target, "target");
    emit(json_out, ts::run_attack(config->cfg, attacker_dir, target).json);
  });
}

tsp_status tsp_reachable(const tsp_config* config, const char* attacker_dir, const char* exclude,
                         char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(attacker_dir, "attacker directory");
    std::optional<std::string> ex;
    if (exclude) ex = exclude;
    emit(json_out, ts::run_reachable(config->cfg, attacker_dir, ex).json);
  });
}

tsp_status tsp_pitch_study(const tsp_config* config, char** json_out) {
  return guarded([&] {
    need(config, "config");
    emit(json_out, ts::run_pitch_study(config->cfg).json);
  });
}

tsp_status tsp_stats_confidence_gap(const tsp_config* config, const char* clean_dir, const char* adversarial_dir,
                                    char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(clean_dir, "clean directory");
    need(adversarial_dir, "adversarial directory");
    const auto clean = ts::load_wav_dir(clean_dir);
    const auto adv = ts::load_wav_dir(adversarial_dir);
    auto oracle = ts::open_oracle(config->cfg);
    emit(json_out, ts::to_json(ts::confidence_gap_stats(*oracle.oracle, clean, adv)));
  });
}

tsp_status tsp_stats_similarity(const tsp_config* config, const char* attack_dir, const char* victim,
                                const char* nonvictims_json, char** json_out) {
  return guarded([&] {
    need(config, "config");
    need(attack_dir, "attack directory");
    need(victim, "victim");
    const auto utts = ts::load_wav_dir(attack_dir);
    auto oracle = ts::open_oracle(config->cfg);
    if (!oracle.model)
      ts::fail(ts::ErrorCode::InvalidArgument, "similarity needs a surrogate model; adapters expose no embeddings");
    std::vector<std::string> others;
    if (nonvictims_json) {
      const auto j = parse(nonvictims_json, "non-victim labels");
      if (!j.is_array()) ts::fail(ts::ErrorCode::Format, "non-victim labels must be a JSON array");
      for (const auto& l : j) {
        if (!l.is_string()) ts::fail(ts::ErrorCode::Format, "non-victim labels must be strings");
        others.push_back(l.get<std::string>());
      }
    } else {
      for (const auto& l : oracle.model->labels())
        if (l != victim) others.push_back(l);
    }
    auto j = ts::to_json(ts::embedding_similarity_stats(*oracle.model, utts, victim, others));
    j["victim_label"] = victim;
    j["nonvictim_labels"] = others;
    emit(json_out, j);
  });
}

tsp_status tsp_stats_consistency(const char* runs_json, char** json_out) {
  return guarded([&] {
    need(runs_json, "runs");
    const auto j = parse(runs_json, "prediction runs");
    if (!j.is_array()) ts::fail(ts::ErrorCode::Format, "prediction runs must be an array of label arrays");
    std::vector<std::vector<std::string>> runs;
    for (const auto& run : j) {
      if (!run.is_array()) ts::fail(ts::ErrorCode::Format, "each prediction run must be an array");
      auto& r = runs.emplace_back();
      for (const auto& l : run) {
        if (!l.is_string()) ts::fail(ts::ErrorCode::Format, "predictions must be label strings");
        r.push_back(l.get<std::string>());
      }
    }
    const double rate = ts::consistency_rate(runs);
    emit(json_out, {{"runs", runs.size()}, {"positions", runs.front().size()}, {"consistency_percent", rate}});
  });
}

tsp_status tsp_stats_match_rate(const char* simulated_json, const char* second_json, char** json_out) {
  return guarded([&] {
    need(simulated_json, "simulated map");
    need(second_json, "second map");
    auto read_map = [](const char* text, const char* what) {
      const auto j = parse(text, what);
      if (!j.is_object()) ts::fail(ts::ErrorCode::Format, std::string(what) + " must be a JSON object");
      ts::SuccessMap m;
      for (const auto& [k, v] : j.items()) {
        if (v.is_null()) m[k] = std::nullopt;
        else if (v.is_string()) m[k] = v.get<std::string>();
        else ts::fail(ts::ErrorCode::Format, std::string(what) + ": values must be labels or null");
      }
      return m;
    };
    const auto sim = read_map(simulated_json, "simulated map");
    const auto second = read_map(second_json, "second map");
    const double rate = ts::match_rate(sim, second);
    std::size_t successes = 0, matched = 0;
    for (const auto& [k, v] : sim) {
      if (!v) continue;
      ++successes;
      if (second.at(k) == v) ++matched;
    }
    emit(json_out, {{"utterances", sim.size()},
                    {"simulated_successes", successes},
                    {"matched", matched},
                    {"match_rate_percent", rate}});
  });
}

tsp_status tsp_synth_corpus(const char* spec_json, const char* out_dir, char** json_out) {
  return guarded([&] {
    need(out_dir, "output directory");
    const auto spec = spec_json ? ts::planted_spec_from_json(parse(spec_json, "planted spec")) : ts::PlantedSpec{};
    const auto fixture = ts::planted_fixture(spec);
    ts::write_planted_fixture(fixture, out_dir);
    auto j = ts::planted_to_json(fixture);
    j["seed"] = spec.seed;
    emit(json_out, j);
  });
}

}  // extern "C"
