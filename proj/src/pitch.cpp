#include "tubespoof/pitch.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"

namespace tubespoof {

namespace {
constexpr double kPi = std::numbers::pi;
}

SinePeaks stft_peaks(std::span<const double> frame) {
  const std::size_t n = frame.size();
  require(n >= kMinPeakFrame, "analysis frame must hold at least 256 samples");

  std::vector<double> windowed(n);
  double window_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    windowed[i] = frame[i] * w;
    window_sum += w;
  }
  const auto spec = dft_real(windowed);
  const std::size_t half = n / 2;
  std::vector<double> mag(half + 1);
  for (std::size_t k = 0; k <= half; ++k) mag[k] = std::abs(spec[k]);

  std::vector<double> sorted = mag;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double peak_mag = *std::max_element(mag.begin(), mag.end());
  const double threshold = std::max(4.0 * median, peak_mag * std::pow(10.0, -kPeakRangeDb / 20.0));

  SinePeaks out;
  out.bin_width = 2.0 * kPi / static_cast<double>(n);
  if (peak_mag <= 0.0) return out;

  const double amp_scale = 2.0 / window_sum;
  for (std::size_t k = 1; k < half; ++k) {
    if (!(mag[k] > threshold && mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])) continue;
    double offset = 0.0;
    double log_peak = std::log(mag[k]);
    if (mag[k - 1] > 0.0 && mag[k + 1] > 0.0) {
      const double a = std::log(mag[k - 1]);
      const double b = log_peak;
      const double c = std::log(mag[k + 1]);
      const double denom = a - 2.0 * b + c;
      if (denom < 0.0) {
        offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
        log_peak = b - 0.25 * (a - c) * offset;
      }
    }
    out.peaks.push_back({std::exp(log_peak) * amp_scale,
                         (static_cast<double>(k) + offset) * out.bin_width, std::arg(spec[k])});
  }

  if (out.peaks.size() > kMaxPeaks) {
    std::stable_sort(out.peaks.begin(), out.peaks.end(),
                     [](const SinePeak& a, const SinePeak& b) { return a.amplitude > b.amplitude; });
    out.peaks.resize(kMaxPeaks);
    std::sort(out.peaks.begin(), out.peaks.end(),
              [](const SinePeak& a, const SinePeak& b) { return a.omega < b.omega; });
  }
  return out;
}

PitchSearch PitchSearch::from_hz(double f_min, double f_max, double step_hz, int sample_rate) {
  require(sample_rate > 0, "sample rate must be positive");
  const double to_omega = 2.0 * kPi / sample_rate;
  return {f_min * to_omega, f_max * to_omega, step_hz * to_omega};
}

namespace {

// Piecewise-linear envelope through the peaks, flat beyond the end points.
double envelope_at(const SinePeaks& peaks, double omega) {
  const auto& p = peaks.peaks;
  if (omega <= p.front().omega) return p.front().amplitude;
  if (omega >= p.back().omega) return p.back().amplitude;
  auto hi = std::upper_bound(p.begin(), p.end(), omega,
                             [](double w, const SinePeak& s) { return w < s.omega; });
  auto lo = hi - 1;
  const double t = (omega - lo->omega) / (hi->omega - lo->omega);
  return lo->amplitude + t * (hi->amplitude - lo->amplitude);
}

// Precomputed sin/cos of pi * omega_l / bin so |sinc| of a difference needs
// only products: sin(pi(a - b)) = sin(pi a) cos(pi b) - cos(pi a) sin(pi b).
struct PeakTable {
  std::vector<double> amp, pos, sin_pos, cos_pos;
  double top = 0.0;
  double bin = 0.0;

  explicit PeakTable(const SinePeaks& peaks) : bin(peaks.bin_width) {
    for (const auto& s : peaks.peaks) {
      const double a = s.omega / bin;
      amp.push_back(s.amplitude);
      pos.push_back(a);
      sin_pos.push_back(std::sin(kPi * a));
      cos_pos.push_back(std::cos(kPi * a));
    }
    top = peaks.peaks.back().omega + 0.5 * bin;
  }
};

double fit_objective(const SinePeaks& peaks, const PeakTable& table, double omega0) {
  const auto harmonics = static_cast<long>(std::floor(table.top / omega0));
  if (harmonics < 1) return -std::numeric_limits<double>::infinity();
  double rho = 0.0;
  for (long k = 1; k <= harmonics; ++k) {
    const double omega_k = static_cast<double>(k) * omega0;
    const double b = omega_k / table.bin;
    const double sb = std::sin(kPi * b), cb = std::cos(kPi * b);
    double match = 0.0;
    for (std::size_t l = 0; l < table.amp.size(); ++l) {
      const double x = table.pos[l] - b;
      double sinc;
      if (std::abs(x) < 1e-9) {
        sinc = 1.0;
      } else {
        sinc = (table.sin_pos[l] * cb - table.cos_pos[l] * sb) / (kPi * x);
      }
      match += table.amp[l] * std::abs(sinc);
    }
    const double env = envelope_at(peaks, omega_k);
    rho += env * (match - 0.5 * env);
  }
  return rho;
}

}  // namespace

double harmonic_fit(const SinePeaks& peaks, double omega0) {
  require(!peaks.empty(), "no spectral peaks");
  require(omega0 > 0.0, "candidate fundamental must be positive");
  return fit_objective(peaks, PeakTable(peaks), omega0);
}

double estimate_pitch(const SinePeaks& peaks, const PitchSearch& search) {
  require(!peaks.empty(), "no spectral peaks", ErrorCode::Domain);
  require(search.omega_min > 0.0 && search.omega_min < search.omega_max &&
              search.omega_max < kPi && search.step > 0.0,
          "pitch search needs 0 < omega_min < omega_max < pi and a positive step");
  const PeakTable table(peaks);
  const auto steps =
      static_cast<long>(std::floor((search.omega_max - search.omega_min) / search.step + 1e-9));
  double best_omega = search.omega_min;
  double best = -std::numeric_limits<double>::infinity();
  for (long i = 0; i <= steps; ++i) {
    const double omega0 = search.omega_min + static_cast<double>(i) * search.step;
    const double rho = fit_objective(peaks, table, omega0);
    if (rho > best) {
      best = rho;
      best_omega = omega0;
    }
  }
  return best_omega;
}

std::size_t PitchTrack::voiced_count() const {
  return static_cast<std::size_t>(
      std::count_if(frames.begin(), frames.end(), [](const PitchFrame& f) { return f.pitch_hz.has_value(); }));
}

std::optional<double> PitchTrack::median_hz() const {
  std::vector<double> v;
  for (const auto& f : frames) {
    if (f.pitch_hz) v.push_back(*f.pitch_hz);
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

PitchTrack pitch_track(const AudioBuffer& buf) {
  require(!buf.empty(), "pitch tracking of an empty buffer");
  const int fs = buf.sample_rate();
  const auto frame = std::max<std::size_t>(
      kMinPeakFrame, static_cast<std::size_t>(std::llround(kPitchFrameS * fs)));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kPitchHopS * fs)));
  const auto search = PitchSearch::standard(fs);
  const double to_hz = fs / (2.0 * kPi);

  std::vector<double> x(buf.samples().begin(), buf.samples().end());
  if (x.size() < frame) x.resize(frame, 0.0);

  PitchTrack track;
  const std::span<const double> all(x);
  for (std::size_t start = 0; start + frame <= x.size(); start += hop) {
    const auto seg = all.subspan(start, frame);
    PitchFrame pf{(static_cast<double>(start) + frame / 2.0) / fs, std::nullopt};
    if (rms(seg) >= kVoicingRms) {
      const auto peaks = stft_peaks(seg);
      if (!peaks.empty()) pf.pitch_hz = estimate_pitch(peaks, search) * to_hz;
    }
    track.frames.push_back(pf);
  }
  return track;
}

double mean_pitch_shift(const PitchTrack& original, const PitchTrack& filtered) {
  const std::size_t n = std::min(original.frames.size(), filtered.frames.size());
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = original.frames[i].pitch_hz;
    const auto& b = filtered.frames[i].pitch_hz;
    if (a && b) {
      acc += *b - *a;
      ++count;
    }
  }
  require(count >= 5, "insufficient voiced overlap between tracks", ErrorCode::Domain);
  return acc / static_cast<double>(count);
}

double mean_pitch_shift(const AudioBuffer& original, const AudioBuffer& filtered) {
  require(original.sample_rate() == filtered.sample_rate(), "sample rates differ");
  const auto frame = static_cast<std::size_t>(std::llround(kPitchFrameS * original.sample_rate()));
  const std::size_t diff = original.size() > filtered.size() ? original.size() - filtered.size()
                                                             : filtered.size() - original.size();
  require(diff <= frame, "signals differ in duration by more than one frame");
  if (original == filtered) {
    // Identical inputs give identical tracks; still enforce the overlap rule.
    const auto t = pitch_track(original);
    return mean_pitch_shift(t, t);
  }
  return mean_pitch_shift(pitch_track(original), pitch_track(filtered));
}

double t_two_sided_p(double t, double df) {
  require(df > 0.0, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) return 1.0;
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

RegressionReport ols_regression(const DesignMatrix& design, std::span<const double> response) {
  const std::size_t n = design.rows, p = design.cols;
  require(design.values.size() == n * p, "design matrix size mismatch");
  require(response.size() == n, "response length must equal design rows");
  require(p >= 1 && n >= p + 1, "regression needs at least cols + 1 rows");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < p; ++c) x(r, c) = design(r, c);
    y(r) = response[r];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  require(static_cast<std::size_t>(qr.rank()) == p, "design matrix is rank deficient",
          ErrorCode::Domain);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  const double ss_res = resid.squaredNorm();
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();

  RegressionReport rep;
  rep.n_samples = n;
  if (ss_tot > 0.0) {
    rep.r_squared = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
  } else {
    rep.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
  }

  const double df = static_cast<double>(n - p);
  const double sigma2 = ss_res / df;
  const Eigen::MatrixXd xtx_inv =
      (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                                  static_cast<Eigen::Index>(p)));
  for (std::size_t c = 0; c < p; ++c) {
    const double b = beta(c);
    const double se = std::sqrt(std::max(0.0, sigma2 * xtx_inv(c, c)));
    double t, pv;
    if (se > 0.0) {
      t = b / se;
      pv = t_two_sided_p(t, df);
    } else {
      t = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
      pv = b == 0.0 ? 1.0 : 0.0;
    }
    rep.coefficients.push_back(b);
    rep.std_errors.push_back(se);
    rep.t_values.push_back(t);
    rep.p_values.push_back(pv);
  }
  return rep;
}

PitchShiftStudy pitch_shift_study(std::span<const AudioBuffer> signals,
                                  std::span<const TubeSpec> tubes, const Environment& env) {
  require(signals.size() >= 10, "pitch-shift study needs at least 10 signals");
  require(tubes.size() >= 3, "pitch-shift study needs at least 3 tubes");

  std::vector<PitchTrack> originals;
  originals.reserve(signals.size());
  for (const auto& s : signals) originals.push_back(pitch_track(s));

  PitchShiftStudy study;
  std::vector<double> design, response;
  for (const auto& tube : tubes) {
    for (std::size_t i = 0; i < signals.size(); ++i) {
      const auto& sig = signals[i];
      const auto bank =
          bank_from_profile(resonance_profile_single(tube, env, sig.nyquist()), sig.sample_rate());
      auto filtered = apply(bank, sig);
      const double gain_in = rms(sig.samples()), gain_out = rms(filtered.samples());
      if (gain_out > 0.0) {
        std::vector<double> scaled(filtered.samples().begin(), filtered.samples().end());
        for (auto& v : scaled) v *= gain_in / gain_out;
        filtered = AudioBuffer(std::move(scaled), sig.sample_rate());
      }
      const double shift = mean_pitch_shift(originals[i], pitch_track(filtered));
      study.rows.push_back({tube.length_m(), tube.diameter_m(), i, shift});
      design.insert(design.end(), {1.0, tube.length_m(), tube.diameter_m()});
      response.push_back(shift);
    }
  }
  study.report = ols_regression({response.size(), 3, std::move(design)}, response);
  return study;
}

std::string pitch_shift_csv(const PitchShiftStudy& study) {
  std::ostringstream os;
  os.precision(17);
  os << "tube_L_m,tube_d_m,signal_id,mean_shift_Hz\n";
  for (const auto& r : study.rows) {
    os << r.tube_length_m << ',' << r.tube_diameter_m << ',' << r.signal_id << ','
       << r.mean_shift_hz << '\n';
  }
  return os.str();
}

}  // namespace tubespoof
