// Command-line front end. Talks to the library only through tubespoof.h.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tubespoof/tubespoof.h"

using nlohmann::json;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Failure {
  tsp_status status;
  std::string message;
};

void check(tsp_status s) {
  if (s != TSP_OK) throw Failure{s, tsp_last_error()};
}

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s ? s : "";
  tsp_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Audio = Handle<tsp_audio, tsp_audio_free>;
using Model = Handle<tsp_model, tsp_model_free>;
using Adapter = Handle<tsp_adapter, tsp_adapter_free>;
using Config = Handle<tsp_config, tsp_config_free>;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Failure{TSP_IO, "cannot read " + path};
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void deliver(const std::string& text, const std::string& out_path) {
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw Failure{TSP_IO, "cannot write " + out_path};
    os << text << "\n";
  }
  std::cout << text << "\n";
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Flags shared by the experiment commands; anything set here wins over the config file.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<double> temperature;
  std::optional<std::string> output_dir, corpus, model, adapter, strategy, mode;
  std::optional<double> timeout;
  std::optional<std::size_t> population, max_iterations;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Run configuration JSON")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--jobs", jobs, "Parallel fitness workers")->check(CLI::Range(1u, 1024u));
    app->add_option("--temperature", temperature, "Air temperature in kelvin");
    app->add_option("--output-dir", output_dir, "Directory for JSON and CSV results");
    app->add_option("--corpus", corpus, "Enrollment corpus: <dir>/<speaker>/<utt>.wav");
    app->add_option("--model", model, "Surrogate model file");
    app->add_option("--adapter", adapter, "External model adapter command line");
    app->add_option("--timeout", timeout, "Adapter timeout in seconds");
    app->add_option("--population", population, "DE population size");
    app->add_option("--max-iterations", max_iterations, "DE generations");
    app->add_option("--strategy", strategy, "DE variant")->check(CLI::IsMember({"printed", "best2"}));
    app->add_option("--mode", mode, "Search space")->check(CLI::IsMember({"single_tube", "two_tube"}));
  }

  json overrides() const {
    json j = json::object();
    if (seed) j["seed"] = *seed;
    if (jobs) j["jobs"] = *jobs;
    if (temperature) j["temperature_K"] = *temperature;
    if (output_dir) j["output_dir"] = *output_dir;
    if (corpus) j["corpus_dir"] = *corpus;
    if (model) j["model"] = *model;
    if (adapter) j["adapter"] = *adapter;
    if (timeout) j["timeout_s"] = *timeout;
    if (population) j["population"] = *population;
    if (max_iterations) j["max_iterations"] = *max_iterations;
    if (strategy) j["strategy"] = *strategy;
    if (mode) j["mode"] = *mode;
    return j;
  }

  void open(Config& cfg, json extra = json::object()) const {
    check(tsp_config_load(config.empty() ? nullptr : config.c_str(), &cfg.p));
    json o = overrides();
    o.update(extra);
    check(tsp_config_apply(cfg.p, o.dump().c_str()));
  }
};

void print_tube_text(const json& j) {
  std::cout << "tube: L = " << fmt("%.4f", j["tube"]["length_m"]) << " m, d = "
            << fmt("%.4f", j["tube"]["diameter_m"]) << " m at " << fmt("%.1f", j["temperature_K"]) << " K\n"
            << "f0 = " << fmt("%.2f", j["f0_Hz"]) << " Hz\n"
            << "Q0 = " << fmt("%.2f", j["Q0"]) << "\n"
            << "  n        f (Hz)        Q\n";
  for (const auto& h : j["harmonics"])
    std::cout << fmt("%3.0f", h["n"].get<double>()) << fmt("  %12.2f", h["f_Hz"]) << fmt("  %8.2f", h["Q"]) << "\n";
}

void print_roots_text(const json& j) {
  std::cout << "two-tube: L1 = " << fmt("%.4f", j["first"]["length_m"]) << " m, d1 = "
            << fmt("%.4f", j["first"]["diameter_m"]) << " m; L2 = " << fmt("%.4f", j["second"]["length_m"])
            << " m, d2 = " << fmt("%.4f", j["second"]["diameter_m"]) << " m\n";
  if (j["roots"].empty()) {
    std::cout << "no roots below " << fmt("%.1f", j["nyquist_Hz"]) << " Hz\n";
    return;
  }
  std::cout << "  n        f (Hz)        Q\n";
  for (const auto& h : j["roots"])
    std::cout << fmt("%3.0f", h["n"].get<double>()) << fmt("  %12.2f", h["f_Hz"]) << fmt("  %8.2f", h["Q"]) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic-tube speaker impersonation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tsp_version()));

  const double T0 = 303.0;

  // tube-info
  double ti_len = 0, ti_dia = 0, ti_temp = T0, ti_nyq = 4000;
  bool ti_json = false;
  auto* ti = app.add_subcommand("tube-info", "Resonances of a single open tube");
  ti->add_option("--length", ti_len, "Tube length in metres")->required();
  ti->add_option("--diameter", ti_dia, "Inner diameter in metres")->required();
  ti->add_option("--temperature", ti_temp, "Air temperature in kelvin");
  ti->add_option("--nyquist", ti_nyq, "Upper frequency limit for the harmonic table");
  ti->add_flag("--json", ti_json, "Print JSON");

  // two-tube
  double tt_l1 = 0, tt_d1 = 0, tt_l2 = 0, tt_d2 = 0, tt_temp = T0, tt_nyq = 4000;
  bool tt_json = false;
  auto* tt = app.add_subcommand("two-tube", "Resonances of two joined tubes");
  tt->add_option("--l1", tt_l1, "First tube length (m)")->required();
  tt->add_option("--d1", tt_d1, "First tube diameter (m)")->required();
  tt->add_option("--l2", tt_l2, "Second tube length (m)")->required();
  tt->add_option("--d2", tt_d2, "Second tube diameter (m)")->required();
  tt->add_option("--temperature", tt_temp, "Air temperature in kelvin");
  tt->add_option("--nyquist", tt_nyq, "Upper frequency limit");
  tt->add_flag("--json", tt_json, "Print JSON");

  // design
  double de_f0 = 0, de_q0 = 0, de_temp = T0;
  auto* des = app.add_subcommand("design", "Tube dimensions for a target resonance");
  des->add_option("--f0", de_f0, "Fundamental in Hz")->required();
  des->add_option("--q0", de_q0, "Quality factor")->required();
  des->add_option("--temperature", de_temp, "Air temperature in kelvin");

  // filter
  std::string fi_in, fi_out;
  double fi_len = 0, fi_dia = 0, fi_temp = T0;
  auto* fil = app.add_subcommand("filter", "Play a recording through a simulated tube");
  fil->add_option("--in", fi_in, "Input WAV")->required();
  fil->add_option("--out", fi_out, "Output WAV")->required();
  fil->add_option("--length", fi_len, "Tube length (m)")->required();
  fil->add_option("--diameter", fi_dia, "Tube diameter (m)")->required();
  fil->add_option("--temperature", fi_temp, "Air temperature in kelvin");

  // validate
  double va_len = 0, va_dia = 0, va_temp = T0, va_q0 = 0;
  std::string va_out;
  auto* val = app.add_subcommand("validate", "Chirp self-test of a tube filterbank");
  val->add_option("--length", va_len, "Tube length (m)")->required();
  val->add_option("--diameter", va_dia, "Tube diameter (m)")->required();
  val->add_option("--temperature", va_temp, "Air temperature in kelvin");
  val->add_option("--q0", va_q0, "Override the physical Q0");
  val->add_option("--out", va_out, "Also write the report here");

  // enroll / identify
  std::string en_corpus, en_out, en_mfcc;
  auto* enr = app.add_subcommand("enroll", "Build a surrogate speaker model from a corpus");
  enr->add_option("--corpus", en_corpus, "<dir>/<speaker>/<utt>.wav")->required();
  enr->add_option("--out", en_out, "Model file to write")->required();
  enr->add_option("--mfcc", en_mfcc, "MFCC settings JSON file")->check(CLI::ExistingFile);

  std::string id_model, id_adapter, id_in;
  double id_timeout = 30.0;
  auto* idf = app.add_subcommand("identify", "Score one recording");
  auto* id_model_opt = idf->add_option("--model", id_model, "Surrogate model file");
  idf->add_option("--adapter", id_adapter, "External model adapter command")->excludes(id_model_opt);
  idf->add_option("--timeout", id_timeout, "Adapter timeout in seconds");
  idf->add_option("--in", id_in, "Input WAV")->required();

  // attack / reachable
  RunFlags at_flags;
  std::string at_attacker, at_target;
  auto* att = app.add_subcommand("attack", "Search tube parameters that impersonate a target");
  at_flags.add(att);
  att->add_option("--attacker", at_attacker, "Directory of attacker utterances")->required();
  att->add_option("--target", at_target, "Target label")->required();

  RunFlags re_flags;
  std::string re_attacker, re_exclude;
  std::optional<std::size_t> re_budget;
  auto* rea = app.add_subcommand("reachable", "Attack every enrolled label");
  re_flags.add(rea);
  rea->add_option("--attacker", re_attacker, "Directory of attacker utterances")->required();
  rea->add_option("--exclude", re_exclude, "Label to skip, usually the attacker's own");
  rea->add_option("--budget", re_budget, "Oracle invocations per target");

  // study
  auto* stu = app.add_subcommand("study", "Batch studies");
  stu->require_subcommand(1);
  RunFlags ps_flags;
  std::string ps_signals;
  std::optional<std::size_t> ps_count;
  auto* ps = stu->add_subcommand("pitch-shift", "Regress pitch shift on tube dimensions");
  ps_flags.add(ps);
  ps->add_option("--signals", ps_signals, "Directory of voiced recordings")->check(CLI::ExistingDirectory);
  ps->add_option("--synthetic-count", ps_count, "Synthetic signals when no directory is given");

  // stats
  auto* sta = app.add_subcommand("stats", "Attack analysis statistics");
  sta->require_subcommand(1);
  RunFlags cg_flags;
  std::string cg_clean, cg_adv, cg_out;
  auto* cg = sta->add_subcommand("confidence-gap", "Top-1/top-2 score gap, clean vs adversarial");
  cg_flags.add(cg);
  cg->add_option("--clean", cg_clean, "Clean utterances")->required();
  cg->add_option("--adversarial", cg_adv, "Adversarial utterances")->required();
  cg->add_option("--out", cg_out, "Also write the summary here");

  RunFlags si_flags;
  std::string si_attack, si_victim, si_out;
  std::vector<std::string> si_nonvictims;
  auto* sim = sta->add_subcommand("similarity", "Embedding cosine to victim and non-victims");
  si_flags.add(sim);
  sim->add_option("--attack", si_attack, "Adversarial utterances")->required();
  sim->add_option("--victim", si_victim, "Victim label")->required();
  sim->add_option("--nonvictim", si_nonvictims, "Non-victim labels (default: all others)");
  sim->add_option("--out", si_out, "Also write the summary here");

  std::string co_runs, co_out;
  auto* con = sta->add_subcommand("consistency", "Agreement across repeated prediction runs");
  con->add_option("--runs", co_runs, "JSON file: array of label arrays")->required()->check(CLI::ExistingFile);
  con->add_option("--out", co_out, "Also write the summary here");

  std::string mr_sim, mr_second, mr_out;
  auto* mat = sta->add_subcommand("match-rate", "Share of simulated successes reproduced elsewhere");
  mat->add_option("--simulated", mr_sim, "JSON object utterance -> label|null")->required()->check(CLI::ExistingFile);
  mat->add_option("--second", mr_second, "JSON object utterance -> label|null")->required()->check(CLI::ExistingFile);
  mat->add_option("--out", mr_out, "Also write the summary here");

  // synth-corpus
  std::string sy_out;
  std::optional<std::uint64_t> sy_seed;
  std::optional<std::size_t> sy_distractors, sy_enroll, sy_attack;
  std::optional<double> sy_duration;
  std::optional<int> sy_rate;
  std::vector<std::string> sy_plants;
  auto* syn = app.add_subcommand("synth-corpus", "Write a planted-instance fixture");
  syn->add_option("--out", sy_out, "Output directory")->required();
  syn->add_option("--seed", sy_seed, "Fixture seed");
  syn->add_option("--distractors", sy_distractors, "Unrelated enrolled speakers");
  syn->add_option("--enroll-utts", sy_enroll, "Utterances per enrolled label");
  syn->add_option("--attack-utts", sy_attack, "Held-out attacker utterances");
  syn->add_option("--duration", sy_duration, "Utterance length in seconds");
  syn->add_option("--rate", sy_rate, "Sample rate")->check(CLI::IsMember({8000, 16000}));
  syn->add_option("--plant", sy_plants, "label:f0:q0, repeatable");

  // small signal utilities
  std::string pi_in;
  auto* pit = app.add_subcommand("pitch", "Pitch track of a recording");
  pit->add_option("--in", pi_in, "Input WAV")->required();

  std::string cmp_a, cmp_b;
  auto* cmp = app.add_subcommand("compare", "DTW distance and cross-correlation peak of two recordings");
  cmp->add_option("--a", cmp_a, "First WAV")->required();
  cmp->add_option("--b", cmp_b, "Second WAV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ti) {
      const auto j = json::parse(take([&] {
        char* s = nullptr;
        check(tsp_tube_info(ti_len, ti_dia, ti_temp, ti_nyq, &s));
        return s;
      }()));
      if (ti_json) std::cout << j.dump(2) << "\n";
      else print_tube_text(j);
    } else if (*tt) {
      char* s = nullptr;
      check(tsp_two_tube(tt_l1, tt_d1, tt_l2, tt_d2, tt_temp, tt_nyq, &s));
      const auto j = json::parse(take(s));
      if (tt_json) std::cout << j.dump(2) << "\n";
      else print_roots_text(j);
    } else if (*des) {
      char* s = nullptr;
      check(tsp_tube_from_resonance(de_f0, de_q0, de_temp, &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*fil) {
      Audio in, out;
      check(tsp_audio_read(fi_in.c_str(), &in.p));
      check(tsp_filter_tube(in.p, fi_len, fi_dia, fi_temp, &out.p));
      check(tsp_audio_write(out.p, fi_out.c_str()));
      std::cout << json{{"in", fi_in}, {"out", fi_out}, {"sample_rate", tsp_audio_sample_rate(out.p)},
                        {"samples", tsp_audio_length(out.p)}}.dump(2)
                << "\n";
    } else if (*val) {
      char* s = nullptr;
      check(tsp_validate_tube(va_len, va_dia, va_temp, va_q0, &s));
      const auto j = json::parse(take(s));
      deliver(j.dump(2), va_out);
      if (j["result"] != "PASS") {
        std::cerr << "validation FAILED\n";
        for (const auto& d : j["diagnostics"]) std::cerr << "  " << d.get<std::string>() << "\n";
        return kExitDomain;
      }
    } else if (*enr) {
      Model m;
      char* report = nullptr;
      const std::string mfcc = en_mfcc.empty() ? "" : slurp(en_mfcc);
      check(tsp_model_enroll(en_corpus.c_str(), en_mfcc.empty() ? nullptr : mfcc.c_str(), &m.p, &report));
      const auto j = json::parse(take(report));
      check(tsp_model_save(m.p, en_out.c_str()));
      std::cout << j.dump(2) << "\n";
    } else if (*idf) {
      if (id_model.empty() == id_adapter.empty()) {
        std::cerr << "identify: give exactly one of --model or --adapter\n";
        return kExitUsage;
      }
      Audio in;
      check(tsp_audio_read(id_in.c_str(), &in.p));
      char* s = nullptr;
      if (!id_model.empty()) {
        Model m;
        check(tsp_model_load(id_model.c_str(), &m.p));
        check(tsp_model_identify(m.p, in.p, &s));
      } else {
        Adapter a;
        check(tsp_adapter_open(id_adapter.c_str(), id_timeout, &a.p));
        check(tsp_adapter_identify(a.p, in.p, &s));
      }
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*att) {
      Config cfg;
      at_flags.open(cfg);
      char* s = nullptr;
      check(tsp_attack(cfg.p, at_attacker.c_str(), at_target.c_str(), &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*rea) {
      Config cfg;
      json extra = json::object();
      if (re_budget) extra["per_target_budget"] = *re_budget;
      re_flags.open(cfg, extra);
      char* s = nullptr;
      check(tsp_reachable(cfg.p, re_attacker.c_str(), re_exclude.empty() ? nullptr : re_exclude.c_str(), &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*ps) {
      Config cfg;
      json extra = json::object();
      if (!ps_signals.empty()) extra["signals_dir"] = ps_signals;
      if (ps_count) extra["synthetic_count"] = *ps_count;
      ps_flags.open(cfg, extra);
      char* s = nullptr;
      check(tsp_pitch_study(cfg.p, &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*cg) {
      Config cfg;
      cg_flags.open(cfg);
      char* s = nullptr;
      check(tsp_stats_confidence_gap(cfg.p, cg_clean.c_str(), cg_adv.c_str(), &s));
      deliver(json::parse(take(s)).dump(2), cg_out);
    } else if (*sim) {
      Config cfg;
      si_flags.open(cfg);
      const std::string others = json(si_nonvictims).dump();
      char* s = nullptr;
      check(tsp_stats_similarity(cfg.p, si_attack.c_str(), si_victim.c_str(),
                                 si_nonvictims.empty() ? nullptr : others.c_str(), &s));
      deliver(json::parse(take(s)).dump(2), si_out);
    } else if (*con) {
      char* s = nullptr;
      check(tsp_stats_consistency(slurp(co_runs).c_str(), &s));
      deliver(json::parse(take(s)).dump(2), co_out);
    } else if (*mat) {
      char* s = nullptr;
      check(tsp_stats_match_rate(slurp(mr_sim).c_str(), slurp(mr_second).c_str(), &s));
      deliver(json::parse(take(s)).dump(2), mr_out);
    } else if (*syn) {
      json spec = json::object();
      if (sy_seed) spec["seed"] = *sy_seed;
      if (sy_distractors) spec["distractors"] = *sy_distractors;
      if (sy_enroll) spec["enroll_utts"] = *sy_enroll;
      if (sy_attack) spec["attack_utts"] = *sy_attack;
      if (sy_duration) spec["duration_s"] = *sy_duration;
      if (sy_rate) spec["sample_rate"] = *sy_rate;
      if (!sy_plants.empty()) {
        json tubes = json::array();
        for (const auto& p : sy_plants) {
          const auto a = p.find(':'), b = p.rfind(':');
          if (a == std::string::npos || a == b || a == 0) {
            std::cerr << "--plant expects label:f0:q0, got '" << p << "'\n";
            return kExitUsage;
          }
          try {
            tubes.push_back({{"label", p.substr(0, a)},
                             {"f0_Hz", std::stod(p.substr(a + 1, b - a - 1))},
                             {"Q0", std::stod(p.substr(b + 1))}});
          } catch (const std::exception&) {
            std::cerr << "--plant expects numeric f0 and q0, got '" << p << "'\n";
            return kExitUsage;
          }
        }
        spec["tubes"] = tubes;
      }
      char* s = nullptr;
      check(tsp_synth_corpus(spec.dump().c_str(), sy_out.c_str(), &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*pit) {
      Audio in;
      check(tsp_audio_read(pi_in.c_str(), &in.p));
      char* s = nullptr;
      check(tsp_pitch_track(in.p, &s));
      std::cout << json::parse(take(s)).dump(2) << "\n";
    } else if (*cmp) {
      Audio a, b;
      check(tsp_audio_read(cmp_a.c_str(), &a.p));
      check(tsp_audio_read(cmp_b.c_str(), &b.p));
      double dtw = 0;
      check(tsp_dtw_distance(a.p, b.p, &dtw));
      char* s = nullptr;
      check(tsp_cross_correlation(a.p, b.p, &s));
      auto j = json::parse(take(s));
      j["dtw_distance"] = dtw;
      std::cout << j.dump(2) << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << tsp_status_name(f.status) << "): " << f.message << "\n";
    return kExitDomain;
  }
  return 0;
}
