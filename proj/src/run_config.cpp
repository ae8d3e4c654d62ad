#include "tubespoof/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "tubespoof/error.hpp"
#include "tubespoof/json_util.hpp"
#include "tubespoof/synth.hpp"

namespace tubespoof {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<TubeSpec> reference_tubes() {
  return {{0.406, 0.0345}, {0.613, 0.040}, {0.870, 0.052},
          {0.994, 0.0345}, {1.203, 0.052}, {1.540, 0.052}};
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void need_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) fail(ErrorCode::Io, std::string(what) + " not found: " + p.string());
}

void need_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) fail(ErrorCode::Io, std::string(what) + " not found: " + p.string());
}

// Keeps file names portable whatever the label contains.
std::string file_safe(const std::string& label) {
  std::string out;
  for (unsigned char c : label) out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? char(c) : '_';
  return out.empty() ? "_" : out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorCode::Io, "write failed: " + path.string());
}

void ensure_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::Io, "cannot create output directory " + dir.string());
}

std::vector<AudioBuffer> collect_signals(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<AudioBuffer> out;
  for (const auto& f : files) out.push_back(read_wav(f));
  return out;
}

}  // namespace

void RunConfig::check_paths() const {
  if (corpus_dir) need_dir(*corpus_dir, "corpus directory");
  if (oracle.model) need_file(*oracle.model, "model file");
  if (study.signals_dir) need_dir(*study.signals_dir, "signals directory");
  if (fs::exists(output_dir) && !fs::is_directory(output_dir))
    fail(ErrorCode::Io, "output path is not a directory: " + output_dir.string());
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  jsonutil::ObjectReader r(j, "run config");
  RunConfig cfg;
  if (r.has("environment")) {
    jsonutil::ObjectReader e(r.at("environment"), "environment");
    cfg.env = Environment(e.optional_number("temperature_K", Environment::kDefaultTemperatureK));
    e.finish();
  } else {
    r.mark("environment");
  }
  if (r.has("mfcc")) cfg.mfcc = mfcc_from_json(r.at("mfcc"));
  else r.mark("mfcc");
  if (r.has("search_space")) cfg.space = search_space_from_json(r.at("search_space"));
  else r.mark("search_space");
  if (r.has("de")) cfg.de = de_config_from_json(r.at("de"));
  else r.mark("de");

  if (r.has("paths")) {
    jsonutil::ObjectReader p(r.at("paths"), "paths");
    if (p.has("corpus_dir")) cfg.corpus_dir = resolve(base_dir, p.string("corpus_dir"));
    else p.mark("corpus_dir");
    cfg.output_dir = resolve(base_dir, p.optional_string("output_dir", "."));
    p.finish();
  } else {
    r.mark("paths");
    cfg.output_dir = base_dir;
  }

  if (r.has("oracle")) {
    jsonutil::ObjectReader o(r.at("oracle"), "oracle");
    if (o.has("model")) cfg.oracle.model = resolve(base_dir, o.string("model"));
    else o.mark("model");
    if (o.has("adapter")) cfg.oracle.adapter = o.string("adapter");
    else o.mark("adapter");
    const double timeout_s = o.optional_number("timeout_s", 30.0);
    if (timeout_s <= 0.0) fail(ErrorCode::Format, "oracle: timeout_s must be positive");
    cfg.oracle.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    o.finish();
    if (cfg.oracle.model && cfg.oracle.adapter)
      fail(ErrorCode::Format, "oracle: choose either model or adapter, not both");
  } else {
    r.mark("oracle");
  }

  cfg.study.tubes = reference_tubes();
  if (r.has("study")) {
    jsonutil::ObjectReader s(r.at("study"), "study");
    if (s.has("tubes")) {
      const auto& arr = s.at("tubes");
      if (!arr.is_array()) fail(ErrorCode::Format, "study: tubes must be an array");
      cfg.study.tubes.clear();
      for (const auto& t : arr) {
        jsonutil::ObjectReader tr(t, "study.tubes");
        const double len = tr.number("length_m");
        const double dia = tr.number("diameter_m");
        tr.finish();
        cfg.study.tubes.emplace_back(len, dia);
      }
    } else {
      s.mark("tubes");
    }
    if (s.has("signals_dir")) cfg.study.signals_dir = resolve(base_dir, s.string("signals_dir"));
    else s.mark("signals_dir");
    cfg.study.synthetic_count = s.optional_u64("synthetic_count", cfg.study.synthetic_count);
    cfg.study.seed = s.optional_u64("seed", cfg.study.seed);
    cfg.study.sample_rate = s.optional_int("sample_rate", cfg.study.sample_rate);
    cfg.study.duration_s = s.optional_number("duration_s", cfg.study.duration_s);
    s.finish();
    if (cfg.study.sample_rate <= 0 || cfg.study.duration_s <= 0.0)
      fail(ErrorCode::Format, "study: sample_rate and duration_s must be positive");
  } else {
    r.mark("study");
  }

  if (r.has("jobs")) {
    const auto jobs = r.optional_u64("jobs", 1);
    if (jobs < 1) fail(ErrorCode::Format, "jobs must be at least 1");
    cfg.de.jobs = static_cast<unsigned>(jobs);
  } else {
    r.mark("jobs");
  }
  if (r.has("per_target_budget")) cfg.per_target_budget = r.optional_u64("per_target_budget", 0);
  else r.mark("per_target_budget");
  r.finish();

  cfg.check_paths();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  need_file(path, "config file");
  const auto base = fs::absolute(path).parent_path();
  return run_config_from_json(jsonutil::read_file(path), base);
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["environment"] = {{"temperature_K", cfg.env.temperature_K()}};
  if (cfg.mfcc) j["mfcc"] = mfcc_to_json(*cfg.mfcc);
  j["search_space"] = search_space_to_json(cfg.space);
  j["de"] = de_config_to_json(cfg.de);
  json paths = {{"output_dir", cfg.output_dir.string()}};
  if (cfg.corpus_dir) paths["corpus_dir"] = cfg.corpus_dir->string();
  j["paths"] = paths;
  json oracle = {{"timeout_s", cfg.oracle.timeout.count() / 1000.0}};
  if (cfg.oracle.model) oracle["model"] = cfg.oracle.model->string();
  if (cfg.oracle.adapter) oracle["adapter"] = *cfg.oracle.adapter;
  j["oracle"] = oracle;
  json tubes = json::array();
  for (const auto& t : cfg.study.tubes) tubes.push_back({{"length_m", t.length_m()}, {"diameter_m", t.diameter_m()}});
  j["study"] = {{"tubes", tubes},
                {"synthetic_count", cfg.study.synthetic_count},
                {"seed", cfg.study.seed},
                {"sample_rate", cfg.study.sample_rate},
                {"duration_s", cfg.study.duration_s}};
  if (cfg.study.signals_dir) j["study"]["signals_dir"] = cfg.study.signals_dir->string();
  if (cfg.per_target_budget) j["per_target_budget"] = *cfg.per_target_budget;
  return j;
}

MfccConfig default_mfcc_for(const Corpus& corpus) {
  MfccConfig m;
  for (const auto& [label, utts] : corpus) {
    if (!utts.empty()) {
      const int rate = utts.front().sample_rate();
      if (rate == 8000 || rate == 16000) m.sample_rate = rate;
      break;
    }
  }
  return m;
}

OpenOracle open_oracle(const RunConfig& cfg) {
  OpenOracle out;
  if (cfg.oracle.adapter) {
    out.oracle = std::make_unique<AdapterClient>(*cfg.oracle.adapter, cfg.oracle.timeout);
    return out;
  }
  if (cfg.oracle.model) {
    out.model = std::make_unique<SpeakerModel>(SpeakerModel::load(*cfg.oracle.model));
  } else if (cfg.corpus_dir) {
    const auto corpus = load_corpus(*cfg.corpus_dir);
    out.model = std::make_unique<SpeakerModel>(enroll(corpus, cfg.mfcc.value_or(default_mfcc_for(corpus))).model);
  } else {
    fail(ErrorCode::InvalidArgument, "no oracle: set oracle.model, oracle.adapter or paths.corpus_dir");
  }
  out.oracle = std::make_unique<SurrogateOracle>(*out.model);
  return out;
}

RunOutput run_attack(const RunConfig& cfg, const fs::path& attacker_dir, const std::string& target) {
  const auto utts = load_wav_dir(attacker_dir);
  auto oracle = open_oracle(cfg);
  const auto result = attack_target(utts, target, *oracle.oracle, cfg.space, cfg.de, cfg.env);

  RunOutput out;
  out.json = to_json(result);
  out.json["seed"] = cfg.de.seed;
  out.csv = attack_csv_header() + attack_csv_row(result);
  ensure_output_dir(cfg.output_dir);
  out.json_path = cfg.output_dir / ("attack_" + file_safe(target) + ".json");
  out.csv_path = cfg.output_dir / ("attack_" + file_safe(target) + ".csv");
  write_text(out.json_path, jsonutil::dump(out.json) + "\n");
  write_text(out.csv_path, out.csv);
  return out;
}

RunOutput run_reachable(const RunConfig& cfg, const fs::path& attacker_dir,
                        const std::optional<std::string>& exclude) {
  const auto utts = load_wav_dir(attacker_dir);
  auto oracle = open_oracle(cfg);
  const auto summary = reachable_set(utts, *oracle.oracle, cfg.space, cfg.de, cfg.env,
                                     cfg.per_target_budget, exclude);
  RunOutput out;
  out.json = to_json(summary);
  out.json["seed"] = cfg.de.seed;
  out.csv = attack_csv_header();
  for (const auto& [label, r] : summary.results) out.csv += attack_csv_row(r);
  ensure_output_dir(cfg.output_dir);
  out.json_path = cfg.output_dir / "reachable.json";
  out.csv_path = cfg.output_dir / "reachable.csv";
  write_text(out.json_path, jsonutil::dump(out.json) + "\n");
  write_text(out.csv_path, out.csv);
  return out;
}

json regression_to_json(const RegressionReport& r, const std::vector<std::string>& names) {
  return {{"regressors", names},          {"coefficients", r.coefficients},
          {"std_errors", r.std_errors},   {"t_values", r.t_values},
          {"p_values", r.p_values},       {"r_squared", r.r_squared},
          {"n_samples", r.n_samples}};
}

RunOutput run_pitch_study(const RunConfig& cfg) {
  std::vector<AudioBuffer> signals;
  if (cfg.study.signals_dir) {
    signals = collect_signals(*cfg.study.signals_dir);
    if (signals.empty()) fail(ErrorCode::Io, "no .wav files below " + cfg.study.signals_dir->string());
  } else {
    signals = study_signals(cfg.study.synthetic_count, cfg.study.seed, cfg.study.sample_rate,
                            cfg.study.duration_s);
  }
  const auto study = pitch_shift_study(signals, cfg.study.tubes, cfg.env);

  RunOutput out;
  out.json = regression_to_json(study.report, {"intercept", "L_m", "d_m"});
  out.json["signals"] = signals.size();
  out.json["tubes"] = cfg.study.tubes.size();
  out.json["temperature_K"] = cfg.env.temperature_K();
  out.csv = pitch_shift_csv(study);
  ensure_output_dir(cfg.output_dir);
  out.json_path = cfg.output_dir / "pitch_shift.json";
  out.csv_path = cfg.output_dir / "pitch_shift.csv";
  write_text(out.json_path, jsonutil::dump(out.json) + "\n");
  write_text(out.csv_path, out.csv);
  return out;
}

}  // namespace tubespoof
