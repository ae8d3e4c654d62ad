#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubespoof/acoustics.hpp"

namespace tubespoof {

struct ValidationSettings {
  double chirp_s = 3.0;
  double f_lo_hz = 100.0;
  double f_hi_hz = 3700.0;
  int sample_rate = 8000;
  double tolerance = 0.01;             // relative peak-frequency error
  std::optional<double> q0_override;   // replaces the physical Q0 when set
  double q_min = 2.0;                  // plausible resonance sharpness
  double q_max = 500.0;
};

struct PeakCheck {
  int harmonic;
  double expected_hz;
  double measured_hz;  // NaN when no local maximum was found
  double rel_error;
  bool ok;
};

struct ValidationReport {
  double length_m, diameter_m, temperature_K;
  double f0_hz, q0;
  ValidationSettings settings;
  std::vector<PeakCheck> peaks;
  double max_rel_error = 0.0;
  double imag_rms = 0.0;
  bool pass = false;
  std::vector<std::string> diagnostics;
};

/// Sweeps a chirp through the tube's filterbank and checks that the output
/// spectrum peaks at every harmonic below the chirp's upper edge.
ValidationReport validate_tube(const TubeSpec& tube, const Environment& env,
                               const ValidationSettings& settings = {});

std::vector<double> find_spectral_peaks(const std::vector<double>& magnitude, double bin_hz,
                                        const std::vector<double>& expected_hz, double window);

nlohmann::json to_json(const ValidationReport& r);

}  // namespace tubespoof
