#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tubespoof/acoustics.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

struct SinePeak {
  double amplitude;
  double omega;  // rad/sample, in (0, pi)
  double phase;
};

/// Sinusoidal peaks of one analysis frame, sorted by frequency.
struct SinePeaks {
  std::vector<SinePeak> peaks;
  double bin_width = 0.0;  // rad/sample of the analysis transform

  bool empty() const noexcept { return peaks.empty(); }
};

inline constexpr std::size_t kMinPeakFrame = 256;
inline constexpr std::size_t kMaxPeaks = 60;
// Peaks this far below the strongest one count as absent. Off-resonance
// leakage of a tube filterbank sits around -35 dB and must not vote for a
// subharmonic.
inline constexpr double kPeakRangeDb = 30.0;

/// Hann-windowed spectrum peaks above 4x the median magnitude and within
/// kPeakRangeDb of the largest bin, refined by parabolic interpolation of the
/// log magnitude.
SinePeaks stft_peaks(std::span<const double> frame);

struct PitchSearch {
  double omega_min;
  double omega_max;
  double step;

  static PitchSearch from_hz(double f_min, double f_max, double step_hz, int sample_rate);
  /// 50-500 Hz in 1 Hz steps.
  static PitchSearch standard(int sample_rate) { return from_hz(50.0, 500.0, 1.0, sample_rate); }
};

/// Harmonic-fit objective rho(w0) for one candidate fundamental.
double harmonic_fit(const SinePeaks& peaks, double omega0);

/// Grid-search maximizer of harmonic_fit; ties go to the lower candidate.
double estimate_pitch(const SinePeaks& peaks, const PitchSearch& search);

struct PitchFrame {
  double time_s;
  std::optional<double> pitch_hz;  // nullopt when unvoiced
};

struct PitchTrack {
  std::vector<PitchFrame> frames;

  std::size_t voiced_count() const;
  std::optional<double> median_hz() const;
};

inline constexpr double kPitchFrameS = 0.064;
inline constexpr double kPitchHopS = 0.016;
inline constexpr double kVoicingRms = 0.01;

PitchTrack pitch_track(const AudioBuffer& buf);

/// Mean of (filtered - original) pitch over frames voiced in both tracks.
double mean_pitch_shift(const AudioBuffer& original, const AudioBuffer& filtered);
double mean_pitch_shift(const PitchTrack& original, const PitchTrack& filtered);

struct RegressionReport {
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  double r_squared = 0.0;
  std::size_t n_samples = 0;
};

/// Row-major design matrix; include a column of ones for an intercept.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

RegressionReport ols_regression(const DesignMatrix& design, std::span<const double> response);

/// Two-sided p-value of a t statistic with df degrees of freedom.
double t_two_sided_p(double t, double df);

struct PitchShiftRow {
  double tube_length_m;
  double tube_diameter_m;
  std::size_t signal_id;
  double mean_shift_hz;
};

struct PitchShiftStudy {
  RegressionReport report;  // regressors: intercept, L, d
  std::vector<PitchShiftRow> rows;
};

/// Filters every signal through every tube and regresses the mean pitch
/// shift on [1, L, d]. Filtered audio is rescaled to the input RMS before
/// tracking so voicing decisions do not depend on tube attenuation.
PitchShiftStudy pitch_shift_study(std::span<const AudioBuffer> signals,
                                  std::span<const TubeSpec> tubes, const Environment& env);

std::string pitch_shift_csv(const PitchShiftStudy& study);

}  // namespace tubespoof
