#include "tubespoof/validate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Short moving average to flatten the chirp's own spectral ripple.
std::vector<double> smooth(const std::vector<double>& x, std::size_t half) {
  std::vector<double> out(x.size());
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size(), i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::vector<double> find_spectral_peaks(const std::vector<double>& magnitude, double bin_hz,
                                        const std::vector<double>& expected_hz, double window) {
  std::vector<double> found;
  const auto last = static_cast<long>(magnitude.size()) - 1;
  for (std::size_t k = 0; k < expected_hz.size(); ++k) {
    const double f = expected_hz[k];
    double lo_hz = f * (1.0 - window), hi_hz = f * (1.0 + window);
    if (k > 0) lo_hz = std::max(lo_hz, 0.5 * (f + expected_hz[k - 1]));
    if (k + 1 < expected_hz.size()) hi_hz = std::min(hi_hz, 0.5 * (f + expected_hz[k + 1]));
    const long lo = std::max(1L, static_cast<long>(std::ceil(lo_hz / bin_hz)));
    const long hi = std::min(last - 1, static_cast<long>(std::floor(hi_hz / bin_hz)));
    long best = -1;
    for (long i = lo; i <= hi; ++i) {
      const double m = magnitude[i];
      if (m >= magnitude[i - 1] && m > magnitude[i + 1] && (best < 0 || m > magnitude[best])) best = i;
    }
    if (best < 0) {
      found.push_back(kNaN);
      continue;
    }
    const double a = magnitude[best - 1], b = magnitude[best], c = magnitude[best + 1];
    const double denom = a - 2.0 * b + c;
    const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
    found.push_back((static_cast<double>(best) + delta) * bin_hz);
  }
  return found;
}

ValidationReport validate_tube(const TubeSpec& tube, const Environment& env,
                               const ValidationSettings& s) {
  require(s.tolerance > 0.0, "validation tolerance must be positive");
  ValidationReport r{tube.length_m(), tube.diameter_m(), env.temperature_K(), 0.0, 0.0, s, {}, 0.0, 0.0,
                     false, {}};
  r.f0_hz = fundamental_frequency(tube, env);
  r.q0 = s.q0_override ? *s.q0_override : quality_factor(tube, env);
  require(std::isfinite(r.q0) && r.q0 > 0.0, "Q0 must be positive", ErrorCode::Domain);

  const double nyquist = s.sample_rate / 2.0;
  ResonanceProfile profile;
  profile.nyquist_hz = nyquist;
  for (int i = 1; i * r.f0_hz < nyquist; ++i) profile.harmonics.push_back({i * r.f0_hz, harmonic_q(r.q0, i)});
  if (profile.empty()) fail(ErrorCode::Domain, "fundamental frequency at or above Nyquist");

  const auto bank = bank_from_profile(profile, s.sample_rate);
  const auto x = chirp(s.chirp_s, s.f_lo_hz, s.f_hi_hz, s.sample_rate);
  const auto out = apply_with_residue(bank, x);
  r.imag_rms = out.imag_rms;

  const auto spec = fft(out.audio);
  std::vector<double> mag(spec.bins.size() / 2 + 1);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(spec.bins[i]);
  const auto half = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / spec.bin_resolution)));
  mag = smooth(mag, half);

  std::vector<double> expected;
  for (const auto& h : profile.harmonics)
    if (h.frequency_hz >= s.f_lo_hz && h.frequency_hz <= s.f_hi_hz) expected.push_back(h.frequency_hz);
  const auto measured = find_spectral_peaks(mag, spec.bin_resolution, expected, 0.05);

  bool peaks_ok = !expected.empty();
  if (expected.empty()) r.diagnostics.push_back("no harmonic inside the chirp band");
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const int harmonic = static_cast<int>(std::lround(expected[k] / r.f0_hz));
    PeakCheck pc{harmonic, expected[k], measured[k], kNaN, false};
    if (std::isfinite(measured[k])) {
      pc.rel_error = std::abs(measured[k] - expected[k]) / expected[k];
      pc.ok = pc.rel_error <= s.tolerance;
      r.max_rel_error = std::max(r.max_rel_error, pc.rel_error);
      if (!pc.ok)
        r.diagnostics.push_back("harmonic " + std::to_string(harmonic) + ": peak at " + fmt(measured[k]) +
                                " Hz, expected " + fmt(expected[k]) + " Hz");
    } else {
      r.max_rel_error = std::numeric_limits<double>::infinity();
      r.diagnostics.push_back("harmonic " + std::to_string(harmonic) + ": no spectral peak near " +
                              fmt(expected[k]) + " Hz");
    }
    peaks_ok = peaks_ok && pc.ok;
    r.peaks.push_back(pc);
  }

  const bool q_ok = r.q0 >= s.q_min && r.q0 <= s.q_max;
  if (!q_ok)
    r.diagnostics.push_back("Q0 = " + fmt(r.q0) + " outside the plausible range [" + fmt(s.q_min) + ", " +
                            fmt(s.q_max) + "]");
  const double in_rms = rms(x.samples());
  const bool real_ok = r.imag_rms <= 1e-9 * std::max(in_rms, 1e-300);
  if (!real_ok) r.diagnostics.push_back("filter output has an imaginary residue of " + fmt(r.imag_rms));
  r.pass = peaks_ok && q_ok && real_ok;
  return r;
}

nlohmann::json to_json(const ValidationReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json peaks = nlohmann::json::array();
  for (const auto& p : r.peaks)
    peaks.push_back({{"harmonic", p.harmonic},
                     {"expected_Hz", p.expected_hz},
                     {"measured_Hz", num(p.measured_hz)},
                     {"rel_error", num(p.rel_error)},
                     {"ok", p.ok}});
  return {{"tube", {{"length_m", r.length_m}, {"diameter_m", r.diameter_m}}},
          {"temperature_K", r.temperature_K},
          {"f0_Hz", r.f0_hz},
          {"Q0", r.q0},
          {"q0_override", r.settings.q0_override.has_value()},
          {"chirp", {{"duration_s", r.settings.chirp_s},
                     {"f_start_Hz", r.settings.f_lo_hz},
                     {"f_end_Hz", r.settings.f_hi_hz},
                     {"sample_rate", r.settings.sample_rate}}},
          {"tolerance", r.settings.tolerance},
          {"peaks", peaks},
          {"max_rel_error", num(r.max_rel_error)},
          {"imag_rms", r.imag_rms},
          {"result", r.pass ? "PASS" : "FAIL"},
          {"diagnostics", r.diagnostics}};
}

}  // namespace tubespoof
