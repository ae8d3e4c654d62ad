#include "tubespoof/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "tubespoof/error.hpp"

namespace tubespoof {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt_m(double v) {
  std::ostringstream os;
  os << v << " m";
  return os.str();
}

}  // namespace

Environment::Environment(double temperature_K) : temperature_K_(temperature_K) {
  require(temperature_K >= 200.0 && temperature_K <= 350.0,
          "temperature must lie in [200, 350] K");
}

double Environment::c_air() const noexcept { return 20.05 * std::sqrt(temperature_K_); }

TubeSpec::TubeSpec(double length_m, double diameter_m)
    : length_m_(length_m), diameter_m_(diameter_m) {
  require(std::isfinite(length_m) && length_m >= kMinLength && length_m <= kMaxLength,
          "tube length " + fmt_m(length_m) + " outside [0.05, 3.0] m");
  require(std::isfinite(diameter_m) && diameter_m >= kMinDiameter && diameter_m <= kMaxDiameter,
          "tube diameter " + fmt_m(diameter_m) + " outside [0.005, 0.15] m");
  require(diameter_m < length_m, "tube diameter must be smaller than its length");
}

TubeSpec TubeSpec::unchecked(double length_m, double diameter_m) {
  return TubeSpec(length_m, diameter_m, true);
}

double TubeSpec::area_m2() const noexcept {
  return kPi * diameter_m_ * diameter_m_ / 4.0;
}

double TubeSpec::effective_length_m() const noexcept {
  return length_m_ + air::kEndCorrection * diameter_m_;
}

TwoTubeSpec::TwoTubeSpec(TubeSpec first, TubeSpec second) : first_(first), second_(second) {
  const bool same_length = std::abs(first.length_m() - second.length_m()) < 1e-6;
  const bool same_area = std::abs(first.area_m2() - second.area_m2()) < 1e-6 * first.area_m2();
  require(!(same_length && same_area),
          "degenerate two-tube spec (identical tubes); model it as a single tube of length L1+L2");
}

double fundamental_frequency(const TubeSpec& tube, const Environment& env) {
  return env.c_air() / (2.0 * tube.effective_length_m());
}

Damping damping(double diameter_m, double f0_hz, const Environment& env) {
  const double area = kPi * diameter_m * diameter_m / 4.0;
  const double c = env.c_air();
  return {2.0 * kPi * area * f0_hz * f0_hz / (c * c),
          std::sqrt(air::kViscosity / (air::kDensity * area * f0_hz))};
}

double quality_factor(const TubeSpec& tube, const Environment& env) {
  const auto d = damping(tube.diameter_m(), fundamental_frequency(tube, env), env);
  return 1.0 / (d.radiation + d.wall);
}

double harmonic_q(double q0, int harmonic) {
  return q0 / std::pow(static_cast<double>(harmonic), 0.25);
}

ResonanceProfile resonance_profile_single(const TubeSpec& tube, const Environment& env,
                                          double nyquist_hz) {
  const double f0 = fundamental_frequency(tube, env);
  require(f0 < nyquist_hz, "fundamental frequency at or above Nyquist", ErrorCode::Domain);
  const double q0 = quality_factor(tube, env);
  ResonanceProfile p;
  p.nyquist_hz = nyquist_hz;
  const auto count = static_cast<int>(std::floor(nyquist_hz / f0));
  for (int i = 1; i <= count; ++i) {
    const double f = i * f0;
    if (f >= nyquist_hz) break;
    p.harmonics.push_back({f, harmonic_q(q0, i)});
  }
  return p;
}

namespace {

struct CotTerm {
  double area;
  double scale;  // radians per Hz
};

std::pair<CotTerm, CotTerm> cot_terms(const TwoTubeSpec& spec, const Environment& env) {
  const double c = env.c_air();
  return {{spec.first().area_m2(), 2.0 * kPi * spec.first().effective_length_m() / c},
          {spec.second().area_m2(), 2.0 * kPi * spec.second().effective_length_m() / c}};
}

}  // namespace

double two_tube_mismatch(const TwoTubeSpec& spec, const Environment& env, double f_hz) {
  const auto [t1, t2] = cot_terms(spec, env);
  return t1.area / std::tan(t1.scale * f_hz) - t2.area / std::tan(t2.scale * f_hz);
}

ResonanceProfile resonances_two_tube(const TwoTubeSpec& spec, const Environment& env,
                                     double nyquist_hz) {
  constexpr double kLowHz = 20.0;
  constexpr double kGridHz = 0.5;
  const auto [t1, t2] = cot_terms(spec, env);
  auto g = [&](double f) { return two_tube_mismatch(spec, env, f); };

  // Cut the band at every cotangent pole so each piece is continuous; a grid
  // cell straddling a pole would otherwise hide the root next to it.
  std::vector<double> cuts = {kLowHz, nyquist_hz};
  for (const double scale : {t1.scale, t2.scale})
    for (long n = static_cast<long>(std::ceil(kLowHz * scale / kPi)); n * kPi / scale < nyquist_hz; ++n)
      if (n > 0) cuts.push_back(n * kPi / scale);
  std::sort(cuts.begin(), cuts.end());

  auto refine = [&](double lo, double hi, double glo) {
    for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gm = g(mid);
      if (gm == 0.0) return mid;
      if ((gm < 0.0) == (glo < 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  std::vector<double> roots;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double margin = 1e-9 * cuts[k + 1];
    const double lo = cuts[k] + margin, hi = cuts[k + 1] - margin;
    if (hi <= lo) continue;
    const auto steps = static_cast<long>(std::ceil((hi - lo) / kGridHz));
    double fa = lo, ga = g(fa);
    for (long j = 1; j <= steps; ++j) {
      const double fb = j == steps ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(steps);
      const double gb = g(fb);
      if (std::isfinite(ga) && std::isfinite(gb)) {
        if (gb == 0.0)
          roots.push_back(fb);
        else if (ga != 0.0 && (ga < 0.0) != (gb < 0.0))
          roots.push_back(refine(fa, fb, ga));
      }
      fa = fb;
      ga = gb;
    }
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(), [](double x, double y) { return y - x < 1e-6; }), roots.end());

  const double a1 = spec.first().area_m2(), a2 = spec.second().area_m2();
  const double d1 = spec.first().diameter_m(), d2 = spec.second().diameter_m();
  const auto equivalent =
      TubeSpec::unchecked(spec.first().effective_length_m() + spec.second().effective_length_m(),
                          (a1 * d1 + a2 * d2) / (a1 + a2));
  const double q0 = quality_factor(equivalent, env);

  ResonanceProfile p;
  p.nyquist_hz = nyquist_hz;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    p.harmonics.push_back({roots[i], harmonic_q(q0, static_cast<int>(i + 1))});
  }
  if (p.harmonics.empty()) p.warning = "no resonances between 20 Hz and Nyquist";
  return p;
}

double q_maximizing_diameter(double f0_hz, const Environment& env) {
  // Q^-1 = a d^2 + b / d with f0 fixed; minimum at d^3 = b / (2a).
  const double c = env.c_air();
  const double a = 2.0 * kPi * (kPi / 4.0) * f0_hz * f0_hz / (c * c);
  const double b = std::sqrt(4.0 * air::kViscosity / (kPi * air::kDensity * f0_hz));
  return std::cbrt(b / (2.0 * a));
}

InverseDesign tube_from_resonance(double f0_hz, double q0, const Environment& env) {
  require(f0_hz >= 50.0 && f0_hz <= 1000.0, "f0 must lie in [50, 1000] Hz");
  require(q0 >= 5.0 && q0 <= 100.0, "Q0 must lie in [5, 100]");

  auto q_at = [&](double d) {
    const auto dm = damping(d, f0_hz, env);
    return 1.0 / (dm.radiation + dm.wall);
  };

  const double d_star = q_maximizing_diameter(f0_hz, env);
  double d = d_star;
  bool saturated = false;
  if (q_at(d_star) <= q0) {
    saturated = q_at(d_star) < q0;
  } else {
    double lo = d_star, hi = 2.0 * d_star;
    while (q_at(hi) > q0) {
      lo = hi;
      hi *= 2.0;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (q_at(mid) > q0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    d = 0.5 * (lo + hi);
  }

  const double length = env.c_air() / (2.0 * f0_hz) - air::kEndCorrection * d;
  return {TubeSpec(length, d), saturated};
}

}  // namespace tubespoof
