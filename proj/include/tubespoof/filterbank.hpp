#pragma once

#include <complex>
#include <span>
#include <vector>

#include "tubespoof/acoustics.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

struct Band {
  double center_hz;
  double q;
};

/// Sum of unit-peak two-pole resonators, one per tube harmonic.
class BandPassFilterBank {
 public:
  BandPassFilterBank(std::vector<Band> bands, int sample_rate);

  const std::vector<Band>& bands() const noexcept { return bands_; }
  int sample_rate() const noexcept { return sample_rate_; }

 private:
  std::vector<Band> bands_;
  int sample_rate_;
};

enum class TransferMode {
  Complex,    // resonator response including phase
  Magnitude,  // |H| only, zero phase
};

BandPassFilterBank bank_from_profile(const ResonanceProfile& profile, int sample_rate);

/// H_i(f) = (j f f_i/Q_i) / (f_i^2 - f^2 + j f f_i/Q_i).
std::complex<double> band_response(const Band& band, double f_hz);

std::vector<std::complex<double>> transfer_function(const BandPassFilterBank& bank,
                                                    std::span<const double> freqs_hz);

struct FilterOutput {
  AudioBuffer audio;
  double imag_rms = 0.0;  // residue discarded when taking the real part
};

/// Frequency-domain filtering of the whole signal.
FilterOutput apply_with_residue(const BandPassFilterBank& bank, const AudioBuffer& input,
                                TransferMode mode = TransferMode::Complex);

AudioBuffer apply(const BandPassFilterBank& bank, const AudioBuffer& input,
                  TransferMode mode = TransferMode::Complex);

/// Fraction of spectral energy inside the bands' half-power intervals.
double band_energy_ratio(const AudioBuffer& buf, const BandPassFilterBank& bank);

}  // namespace tubespoof
