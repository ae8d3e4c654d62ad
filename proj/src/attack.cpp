#include "tubespoof/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/json_util.hpp"

namespace tubespoof {

using nlohmann::json;

double Dimension::snap(double x) const {
  const double k = std::round((x - lo) / step);
  return std::clamp(lo + k * step, lo, hi);
}

std::size_t Dimension::grid_size() const {
  return static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
}

SearchSpace SearchSpace::single_tube() {
  SearchSpace s;
  s.mode = SearchMode::SingleTube;
  s.dims = {{"f0_Hz", 50.0, 1000.0, 10.0}, {"Q0", 5.0, 100.0, 5.0}};
  return s;
}

SearchSpace SearchSpace::two_tube(double d1_m) {
  SearchSpace s;
  s.mode = SearchMode::TwoTube;
  s.dims = {{"L1_m", 0.05, 1.20, 0.05}, {"L2_m", 0.05, 1.20, 0.05}, {"area_ratio", 1.0, 10.0, 1.0}};
  s.d1_m = d1_m;
  return s;
}

std::vector<double> SearchSpace::snap(std::span<const double> x) const {
  require(x.size() == dims.size(), "parameter vector has the wrong dimension");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = dims[i].snap(x[i]);
  return out;
}

bool SearchSpace::on_grid(std::span<const double> x) const {
  if (x.size() != dims.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& d = dims[i];
    if (x[i] < d.lo || x[i] > d.hi) return false;
    const double k = (x[i] - d.lo) / d.step;
    if (std::abs(k - std::round(k)) > 1e-9) return false;
  }
  return true;
}

void SearchSpace::validate_grid() const {
  require(!dims.empty(), "search space has no dimensions");
  for (const auto& d : dims) {
    require(std::isfinite(d.lo) && std::isfinite(d.hi) && d.lo < d.hi,
            "dimension " + d.name + " needs finite min < max");
    require(d.step > 0.0, "dimension " + d.name + " needs a positive step");
    const double k = (d.hi - d.lo) / d.step;
    require(std::abs(k - std::round(k)) < 1e-9, "step of " + d.name + " must divide its range");
  }
}

void SearchSpace::validate() const {
  const std::size_t want = mode == SearchMode::SingleTube ? 2 : 3;
  require(dims.size() == want, "search space has the wrong number of dimensions for its mode");
  validate_grid();
  if (mode == SearchMode::TwoTube) {
    require(d1_m >= TubeSpec::kMinDiameter && d1_m <= TubeSpec::kMaxDiameter,
            "d1_m outside the tube diameter range");
    require(dims[2].lo >= 1.0, "area ratio must be at least 1");
  }
}

void DEConfig::validate() const {
  require(population >= 5, "DE population must be at least 5");
  require(max_iterations >= 0, "max_iterations must be non-negative");
  require(std::isfinite(tolerance) && tolerance >= 0.0, "tolerance must be non-negative");
  require(crossover > 0.0 && crossover <= 1.0, "crossover must lie in (0, 1]");
  require(mutation > 0.0 && mutation < 2.0, "mutation must lie in (0, 2)");
  require(jobs >= 1, "jobs must be at least 1");
  if (max_evaluations) require(*max_evaluations >= population, "evaluation budget is below the population size");
}

namespace {

// Portable draws: libstdc++ and libc++ distributions differ, these do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do v = gen_();
    while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }

 private:
  std::mt19937_64 gen_;
};

std::vector<double> evaluate_all(const Fitness& fitness, const std::vector<Params>& pts,
                                 unsigned jobs) {
  std::vector<double> out(pts.size());
  const unsigned workers = std::min<std::size_t>(jobs, pts.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = fitness(pts[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < pts.size();) {
      try {
        out[i] = fitness(pts[i]);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next = pts.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double population_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / v.size());
}

// Distinct indices from [0, n) excluding `skip`.
std::vector<std::size_t> pick_distinct(Rng& rng, std::size_t n, std::size_t count, std::size_t skip) {
  std::vector<std::size_t> out;
  while (out.size() < count) {
    const std::size_t r = rng.below(n);
    if (r == skip || std::find(out.begin(), out.end(), r) != out.end()) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace

DEResult differential_evolution(const Fitness& fitness, const SearchSpace& space,
                                const DEConfig& cfg, const std::vector<Params>* initial) {
  space.validate_grid();
  cfg.validate();
  const std::size_t n = cfg.population;
  const std::size_t dim = space.dims.size();
  Rng rng(cfg.seed);

  std::vector<Params> pop(n, Params(dim));
  if (initial) {
    require(initial->size() == n, "initial population size must equal the DE population");
    for (std::size_t j = 0; j < n; ++j) {
      require((*initial)[j].size() == dim, "initial point has the wrong dimension");
      for (std::size_t d = 0; d < dim; ++d)
        pop[j][d] = std::clamp((*initial)[j][d], space.dims[d].lo, space.dims[d].hi);
    }
  } else {
    for (auto& x : pop)
      for (std::size_t d = 0; d < dim; ++d)
        x[d] = space.dims[d].lo + rng.uniform() * (space.dims[d].hi - space.dims[d].lo);
  }

  auto snapped = [&](const std::vector<Params>& pts) {
    std::vector<Params> s;
    s.reserve(pts.size());
    for (const auto& p : pts) s.push_back(space.snap(p));
    return s;
  };

  DEResult res;
  std::vector<double> fit = evaluate_all(fitness, snapped(pop), cfg.jobs);
  res.evaluations = n;
  std::size_t best = argmax(fit);
  res.trace.push_back(fit[best]);

  const std::size_t budget = cfg.max_evaluations.value_or(std::numeric_limits<std::size_t>::max());
  const std::size_t n_diff = cfg.strategy == DEStrategy::Printed ? 2 : 4;

  for (int gen = 0; gen < cfg.max_iterations && res.evaluations < budget; ++gen) {
    const std::size_t k = std::min(n, budget - res.evaluations);
    const Params anchor = pop[best];
    std::vector<Params> trials(k, Params(dim));
    for (std::size_t j = 0; j < k; ++j) {
      const auto r = pick_distinct(rng, n, n_diff, j);
      const std::size_t forced = rng.below(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        double diff = pop[r[0]][d] - pop[r[1]][d];
        if (n_diff == 4) diff += pop[r[2]][d] - pop[r[3]][d];
        const double mutant =
            std::clamp(anchor[d] + cfg.mutation * diff, space.dims[d].lo, space.dims[d].hi);
        const bool take = rng.uniform() < cfg.crossover || d == forced;
        trials[j][d] = take ? mutant : pop[j][d];
      }
    }
    const auto trial_fit = evaluate_all(fitness, snapped(trials), cfg.jobs);
    res.evaluations += k;
    for (std::size_t j = 0; j < k; ++j) {
      if (trial_fit[j] > fit[j]) {
        pop[j] = trials[j];
        fit[j] = trial_fit[j];
      }
    }
    best = argmax(fit);
    res.trace.push_back(fit[best]);
    ++res.generations;
    if (population_std(fit) < cfg.tolerance) break;
  }

  res.best = space.snap(pop[best]);
  res.best_fitness = fit[best];
  return res;
}

Realization realize(const Params& p, const SearchSpace& space, const Environment& env,
                    double nyquist_hz) {
  Realization r;
  try {
    if (space.mode == SearchMode::SingleTube) {
      const auto design = tube_from_resonance(p.at(0), p.at(1), env);
      r.tube = design.tube;
      r.saturated = design.saturated;
      r.profile = resonance_profile_single(design.tube, env, nyquist_hz);
    } else {
      const double l1 = p.at(0), l2 = p.at(1), ratio = p.at(2);
      const double d2 = space.d1_m / std::sqrt(ratio);
      if (std::abs(l1 - l2) < 1e-6 && std::abs(ratio - 1.0) < 1e-6) {
        // Identical halves form one straight tube.
        r.tube = TubeSpec(l1 + l2, space.d1_m);
        r.profile = resonance_profile_single(*r.tube, env, nyquist_hz);
      } else {
        r.two_tube = TwoTubeSpec(TubeSpec(l1, space.d1_m), TubeSpec(l2, d2));
        r.profile = resonances_two_tube(*r.two_tube, env, nyquist_hz);
        if (r.profile.empty()) r.error = r.profile.warning.value_or("no resonances below Nyquist");
      }
    }
  } catch (const Error& e) {
    r.error = e.what();
    r.profile = {};
  }
  return r;
}

std::vector<AudioBuffer> apply_tube(const Realization& r, std::span<const AudioBuffer> utts) {
  if (!r.feasible()) fail(ErrorCode::Domain, "tube parameters are not realizable: " + r.error);
  std::vector<AudioBuffer> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(apply(bank_from_profile(r.profile, u.sample_rate()), u));
  return out;
}

namespace {

double max_nyquist(std::span<const AudioBuffer> utts) {
  double ny = 0.0;
  for (const auto& u : utts) ny = std::max(ny, u.nyquist());
  return ny;
}

struct Evaluation {
  double score = 0.0;
  std::vector<std::string> labels;
  std::size_t queries = 0;
};

Evaluation evaluate_point(std::span<const AudioBuffer> utts, const std::string& target,
                          Oracle& oracle, const SearchSpace& space, const Params& p,
                          const Environment& env) {
  Evaluation ev;
  ev.labels.assign(utts.size(), "");
  const Realization r = realize(p, space, env, max_nyquist(utts));
  if (!r.feasible()) return ev;
  double total = 0.0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    AudioBuffer filtered;
    try {
      filtered = apply(bank_from_profile(r.profile, utts[i].sample_rate()), utts[i]);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Domain) continue;  // no band below this utterance's Nyquist
      throw;
    }
    try {
      ++ev.queries;
      const auto id = oracle.identify(filtered);
      total += id.score_of(target);
      ev.labels[i] = id.label;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoSpeech) throw;
    }
  }
  ev.score = total / static_cast<double>(utts.size());
  return ev;
}

void check_attack_inputs(std::span<const AudioBuffer> utts, const std::string& target, Oracle& oracle) {
  require(!utts.empty(), "attacker utterance list is empty");
  for (const auto& u : utts) require(!u.empty(), "attacker utterance is empty");
  const auto& labels = oracle.labels();
  if (std::find(labels.begin(), labels.end(), target) == labels.end()) {
    fail(ErrorCode::Domain, "unknown target label: " + target);
  }
}

}  // namespace

double attack_fitness(std::span<const AudioBuffer> attacker_utts, const std::string& target,
                      Oracle& oracle, const SearchSpace& space, const Params& p,
                      const Environment& env) {
  check_attack_inputs(attacker_utts, target, oracle);
  return evaluate_point(attacker_utts, target, oracle, space, space.snap(p), env).score;
}

AttackResult attack_target(std::span<const AudioBuffer> attacker_utts, const std::string& target,
                           Oracle& oracle, const SearchSpace& space, const DEConfig& cfg,
                           const Environment& env) {
  check_attack_inputs(attacker_utts, target, oracle);
  space.validate();
  cfg.validate();

  // The grid is finite and the fitness deterministic, so repeated points are
  // answered from the cache instead of querying the model again.
  std::mutex mu;
  std::map<Params, Evaluation> memo;
  std::atomic<std::size_t> queries{0};
  Fitness fitness = [&](const Params& p) {
    {
      std::lock_guard lock(mu);
      if (auto it = memo.find(p); it != memo.end()) return it->second.score;
    }
    Evaluation ev = evaluate_point(attacker_utts, target, oracle, space, p, env);
    queries += ev.queries;
    const double score = ev.score;
    std::lock_guard lock(mu);
    memo.emplace(p, std::move(ev));
    return score;
  };

  const DEResult de = differential_evolution(fitness, space, cfg);

  AttackResult res;
  res.target = target;
  res.mode = space.mode;
  for (const auto& d : space.dims) res.param_names.push_back(d.name);
  res.best_params = de.best;
  res.realization = realize(de.best, space, env, max_nyquist(attacker_utts));
  res.best_score = de.best_fitness;
  res.invocations = de.evaluations;
  res.oracle_queries = queries;
  res.generations = de.generations;
  res.score_trace = de.trace;
  res.final_labels = memo.at(de.best).labels;
  const auto hits = std::count(res.final_labels.begin(), res.final_labels.end(), target);
  res.success = 2 * static_cast<std::size_t>(hits) > res.final_labels.size();
  return res;
}

ReachableSummary reachable_set(std::span<const AudioBuffer> attacker_utts, Oracle& oracle,
                               const SearchSpace& space, const DEConfig& cfg,
                               const Environment& env, std::optional<std::size_t> per_target_budget,
                               const std::optional<std::string>& exclude) {
  ReachableSummary out;
  out.per_target_budget = per_target_budget;
  DEConfig c = cfg;
  if (per_target_budget) {
    require(*per_target_budget >= cfg.population, "per-target budget is below the population size");
    c.max_evaluations = per_target_budget;
    const std::size_t extra = *per_target_budget - cfg.population;
    c.max_iterations = static_cast<int>((extra + cfg.population - 1) / cfg.population);
  }
  const auto labels = oracle.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (exclude && labels[i] == *exclude) continue;
    c.seed = cfg.seed + i;
    auto r = attack_target(attacker_utts, labels[i], oracle, space, c, env);
    if (r.success) ++out.success_count;
    out.results.emplace(labels[i], std::move(r));
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ScoreSetSummary score_set_summary(const std::vector<Identification>& ids) {
  require(!ids.empty(), "score set is empty");
  ScoreSetSummary s;
  s.n = ids.size();
  std::vector<double> gaps;
  for (const auto& id : ids) {
    auto sc = id.scores;
    std::sort(sc.begin(), sc.end(), std::greater<>());
    s.top1.push_back(sc.at(0));
    s.top2.push_back(sc.size() > 1 ? sc[1] : 0.0);
    gaps.push_back(s.top1.back() - s.top2.back());
  }
  s.mean_top1 = mean(s.top1);
  s.median_top1 = median(s.top1);
  s.mean_top2 = mean(s.top2);
  s.median_top2 = median(s.top2);
  s.mean_gap = mean(gaps);
  s.median_gap = median(gaps);
  return s;
}

ConfidenceGapSummary confidence_gap_stats(Oracle& oracle, std::span<const AudioBuffer> clean,
                                          std::span<const AudioBuffer> adversarial) {
  require(!clean.empty() && !adversarial.empty(), "confidence-gap sets must be non-empty");
  auto run = [&](std::span<const AudioBuffer> set) {
    std::vector<Identification> ids;
    for (const auto& b : set) ids.push_back(oracle.identify(b));
    return score_set_summary(ids);
  };
  return {run(clean), run(adversarial)};
}

SimilaritySummary embedding_similarity_stats(const SpeakerModel& model,
                                             std::span<const AudioBuffer> attack_utts,
                                             const std::string& victim,
                                             const std::vector<std::string>& nonvictims,
                                             bool centered) {
  require(!attack_utts.empty(), "attack utterance list is empty");
  require(!nonvictims.empty(), "non-victim label list is empty");
  auto known = [&](const std::string& l) {
    if (!model.has_label(l)) fail(ErrorCode::Domain, "unknown label: " + l);
  };
  known(victim);
  for (const auto& l : nonvictims) known(l);

  Embedding origin(model.centroids().front().size(), 0.0);
  if (centered) {
    for (const auto& c : model.centroids())
      for (std::size_t i = 0; i < c.size(); ++i) origin[i] += c[i] / model.centroids().size();
  }
  auto shift = [&](Embedding e) {
    for (std::size_t i = 0; i < e.size(); ++i) e[i] -= origin[i];
    return e;
  };

  SimilaritySummary s;
  double nv_total = 0.0;
  for (const auto& u : attack_utts) {
    const Embedding e = shift(model.embed(u));
    s.victim.push_back(cosine_similarity(e, shift(model.centroid(victim))));
    std::vector<double> row;
    for (const auto& l : nonvictims) {
      row.push_back(cosine_similarity(e, shift(model.centroid(l))));
      nv_total += row.back();
    }
    s.nonvictim.push_back(std::move(row));
  }
  s.mean_victim = mean(s.victim);
  s.mean_nonvictim = nv_total / static_cast<double>(attack_utts.size() * nonvictims.size());
  return s;
}

double consistency_rate(const std::vector<std::vector<std::string>>& runs) {
  require(runs.size() >= 2, "consistency needs at least two runs");
  const std::size_t n = runs.front().size();
  require(n > 0, "prediction runs are empty");
  for (const auto& r : runs) require(r.size() == n, "prediction runs differ in length");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool same = true;
    for (const auto& r : runs) same = same && r[i] == runs.front()[i];
    agree += same;
  }
  return 100.0 * static_cast<double>(agree) / static_cast<double>(n);
}

double match_rate(const SuccessMap& simulated, const SuccessMap& second) {
  require(simulated.size() == second.size(), "match-rate maps have different key sets");
  std::size_t successes = 0, matched = 0;
  for (const auto& [utt, target] : simulated) {
    auto it = second.find(utt);
    require(it != second.end(), "match-rate maps have different key sets: " + utt);
    if (!target) continue;
    ++successes;
    if (it->second == target) ++matched;
  }
  return successes ? 100.0 * static_cast<double>(matched) / static_cast<double>(successes) : 0.0;
}

const char* mode_name(SearchMode m) { return m == SearchMode::SingleTube ? "single_tube" : "two_tube"; }
const char* strategy_name(DEStrategy s) { return s == DEStrategy::Printed ? "printed" : "best2"; }

namespace {

json tube_json(const TubeSpec& t) { return {{"length_m", t.length_m()}, {"diameter_m", t.diameter_m()}}; }

json realization_json(const Realization& r) {
  json j;
  if (r.two_tube) {
    j["kind"] = "two_tube";
    j["first"] = tube_json(r.two_tube->first());
    j["second"] = tube_json(r.two_tube->second());
  } else if (r.tube) {
    j["kind"] = "single_tube";
    j["tube"] = tube_json(*r.tube);
  } else {
    j["kind"] = "none";
  }
  j["saturated"] = r.saturated;
  json h = json::array();
  for (const auto& x : r.profile.harmonics) h.push_back({{"f_Hz", x.frequency_hz}, {"Q", x.q}});
  j["harmonics"] = h;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

json set_json(const ScoreSetSummary& s) {
  return {{"n", s.n},
          {"mean_top1", s.mean_top1},
          {"median_top1", s.median_top1},
          {"mean_top2", s.mean_top2},
          {"median_top2", s.median_top2},
          {"mean_gap", s.mean_gap},
          {"median_gap", s.median_gap},
          {"top1", s.top1},
          {"top2", s.top2}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

json to_json(const AttackResult& r) {
  json params = json::object();
  for (std::size_t i = 0; i < r.param_names.size(); ++i) params[r.param_names[i]] = r.best_params[i];
  return {{"target", r.target},
          {"mode", mode_name(r.mode)},
          {"params", params},
          {"realization", realization_json(r.realization)},
          {"best_score", r.best_score},
          {"success", r.success},
          {"invocations", r.invocations},
          {"oracle_queries", r.oracle_queries},
          {"generations", r.generations},
          {"score_trace", r.score_trace},
          {"final_labels", r.final_labels}};
}

json to_json(const ReachableSummary& s) {
  json results = json::object();
  for (const auto& [label, r] : s.results) results[label] = to_json(r);
  json j = {{"targets", s.results.size()}, {"success_count", s.success_count}, {"results", results}};
  j["per_target_budget"] = s.per_target_budget ? json(*s.per_target_budget) : json(nullptr);
  return j;
}

json to_json(const ConfidenceGapSummary& s) {
  return {{"clean", set_json(s.clean)},
          {"adversarial", set_json(s.adversarial)},
          {"gap_difference", s.adversarial.mean_gap - s.clean.mean_gap}};
}

json to_json(const SimilaritySummary& s) {
  return {{"mean_victim", s.mean_victim},
          {"mean_nonvictim", s.mean_nonvictim},
          {"victim", s.victim},
          {"nonvictim", s.nonvictim}};
}

std::string attack_csv_header() { return "target,success,best_score,invocations,f0_Hz,Q0,L_m,d_m\n"; }

std::string attack_csv_row(const AttackResult& r) {
  std::ostringstream os;
  os << r.target << ',' << (r.success ? "true" : "false") << ',' << fmt(r.best_score) << ','
     << r.invocations << ',';
  const auto& real = r.realization;
  if (real.feasible()) {
    os << fmt(real.profile.fundamental_hz()) << ',' << fmt(real.profile.fundamental_q()) << ',';
    if (real.two_tube) {
      // Two-tube rows report the total length and the first tube's diameter.
      os << fmt(real.two_tube->first().length_m() + real.two_tube->second().length_m()) << ','
         << fmt(real.two_tube->first().diameter_m());
    } else {
      os << fmt(real.tube->length_m()) << ',' << fmt(real.tube->diameter_m());
    }
  } else {
    os << ",,,";
  }
  os << '\n';
  return os.str();
}

json search_space_to_json(const SearchSpace& s) {
  json dims = json::array();
  for (const auto& d : s.dims) dims.push_back({{"name", d.name}, {"min", d.lo}, {"max", d.hi}, {"step", d.step}});
  json j = {{"mode", mode_name(s.mode)}, {"dimensions", dims}};
  if (s.mode == SearchMode::TwoTube) j["d1_m"] = s.d1_m;
  return j;
}

SearchSpace search_space_from_json(const json& j) {
  jsonutil::ObjectReader r(j, "search_space");
  const std::string mode = r.optional_string("mode", "single_tube");
  SearchSpace s;
  if (mode == "single_tube") {
    s = SearchSpace::single_tube();
  } else if (mode == "two_tube") {
    s = SearchSpace::two_tube(r.optional_number("d1_m", 0.021));
  } else {
    fail(ErrorCode::Format, "search_space: mode must be single_tube or two_tube");
  }
  if (r.has("dimensions")) {
    const auto& arr = r.at("dimensions");
    if (!arr.is_array() || arr.size() != s.dims.size())
      fail(ErrorCode::Format, "search_space: dimensions must list every parameter of the mode");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      jsonutil::ObjectReader d(arr[i], "search_space.dimensions");
      const std::string name = d.string("name");
      if (name != s.dims[i].name)
        fail(ErrorCode::Format, "search_space: expected dimension " + s.dims[i].name + ", got " + name);
      s.dims[i].lo = d.number("min");
      s.dims[i].hi = d.number("max");
      s.dims[i].step = d.number("step");
      d.finish();
    }
  }
  r.finish();
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Format, std::string("search_space: ") + e.what());
  }
  return s;
}

json de_config_to_json(const DEConfig& c) {
  json j = {{"population", c.population}, {"max_iterations", c.max_iterations},
            {"tolerance", c.tolerance},   {"crossover", c.crossover},
            {"mutation", c.mutation},     {"seed", c.seed},
            {"strategy", strategy_name(c.strategy)}, {"jobs", c.jobs}};
  if (c.max_evaluations) j["max_evaluations"] = *c.max_evaluations;
  return j;
}

DEConfig de_config_from_json(const json& j) {
  jsonutil::ObjectReader r(j, "de");
  DEConfig c;
  c.population = r.optional_u64("population", c.population);
  c.max_iterations = r.optional_int("max_iterations", c.max_iterations);
  c.tolerance = r.optional_number("tolerance", c.tolerance);
  c.crossover = r.optional_number("crossover", c.crossover);
  c.mutation = r.optional_number("mutation", c.mutation);
  c.seed = r.optional_u64("seed", c.seed);
  const std::string strategy = r.optional_string("strategy", "printed");
  if (strategy == "printed") c.strategy = DEStrategy::Printed;
  else if (strategy == "best2") c.strategy = DEStrategy::Best2;
  else fail(ErrorCode::Format, "de: strategy must be printed or best2");
  if (r.has("max_evaluations")) c.max_evaluations = r.optional_u64("max_evaluations", 0);
  else r.mark("max_evaluations");
  c.jobs = static_cast<unsigned>(r.optional_u64("jobs", c.jobs));
  r.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Format, std::string("de: ") + e.what());
  }
  return c;
}

}  // namespace tubespoof
