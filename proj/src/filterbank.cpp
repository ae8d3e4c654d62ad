#include "tubespoof/filterbank.hpp"

#include <algorithm>
#include <cmath>

#include "tubespoof/error.hpp"

namespace tubespoof {

BandPassFilterBank::BandPassFilterBank(std::vector<Band> bands, int sample_rate)
    : bands_(std::move(bands)), sample_rate_(sample_rate) {
  require(sample_rate > 0, "sample rate must be positive");
  require(!bands_.empty(), "filter bank needs at least one band");
  for (const auto& b : bands_) {
    require(b.center_hz > 0.0 && b.center_hz < sample_rate / 2.0,
            "band center must lie in (0, Nyquist)");
    require(b.q > 0.0, "band Q must be positive");
  }
}

BandPassFilterBank bank_from_profile(const ResonanceProfile& profile, int sample_rate) {
  require(!profile.empty(), "empty resonance profile", ErrorCode::Domain);
  const double nyquist = sample_rate / 2.0;
  std::vector<Band> bands;
  for (const auto& h : profile.harmonics) {
    if (h.frequency_hz < nyquist) bands.push_back({h.frequency_hz, h.q});
  }
  require(!bands.empty(), "every harmonic lies at or above Nyquist", ErrorCode::Domain);
  return BandPassFilterBank(std::move(bands), sample_rate);
}

std::complex<double> band_response(const Band& band, double f_hz) {
  const std::complex<double> damp(0.0, f_hz * band.center_hz / band.q);
  return damp / (band.center_hz * band.center_hz - f_hz * f_hz + damp);
}

std::vector<std::complex<double>> transfer_function(const BandPassFilterBank& bank,
                                                    std::span<const double> freqs_hz) {
  std::vector<std::complex<double>> h(freqs_hz.size());
  for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (const auto& band : bank.bands()) acc += band_response(band, freqs_hz[k]);
    h[k] = acc;
  }
  return h;
}

FilterOutput apply_with_residue(const BandPassFilterBank& bank, const AudioBuffer& input,
                                TransferMode mode) {
  require(!input.empty(), "cannot filter an empty buffer");
  require(input.sample_rate() == bank.sample_rate(),
          "sample-rate mismatch between filter bank and input");
  const std::size_t n = input.size();
  const double res = static_cast<double>(input.sample_rate()) / static_cast<double>(n);

  // Evaluate H on the non-negative bins and mirror with conjugates so the
  // product stays Hermitian.
  std::vector<double> freqs(n / 2 + 1);
  for (std::size_t k = 0; k < freqs.size(); ++k) freqs[k] = static_cast<double>(k) * res;
  auto h = transfer_function(bank, freqs);
  if (mode == TransferMode::Magnitude) {
    for (auto& v : h) v = std::abs(v);
  }
  h[0] = h[0].real();
  if (n % 2 == 0) h[n / 2] = h[n / 2].real();

  auto spec = dft_real(input.samples());
  for (std::size_t k = 0; k < n; ++k) {
    const auto hk = k <= n / 2 ? h[k] : std::conj(h[n - k]);
    spec[k] *= hk;
  }
  auto y = idft(spec);

  std::vector<double> out(n);
  double imag_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = y[i].real();
    imag_sq += y[i].imag() * y[i].imag();
  }
  return {AudioBuffer(std::move(out), input.sample_rate()),
          std::sqrt(imag_sq / static_cast<double>(n))};
}

AudioBuffer apply(const BandPassFilterBank& bank, const AudioBuffer& input, TransferMode mode) {
  return apply_with_residue(bank, input, mode).audio;
}

double band_energy_ratio(const AudioBuffer& buf, const BandPassFilterBank& bank) {
  require(buf.sample_rate() == bank.sample_rate(),
          "sample-rate mismatch between filter bank and input");
  const auto spec = fft(buf);
  const std::size_t half = spec.bins.size() / 2;
  double total = 0.0, inside = 0.0;
  for (std::size_t k = 0; k <= half; ++k) {
    const double e = std::norm(spec.bins[k]);
    const double f = static_cast<double>(k) * spec.bin_resolution;
    total += e;
    const bool in_band = std::any_of(bank.bands().begin(), bank.bands().end(), [&](const Band& b) {
      const double hw = b.center_hz / (2.0 * b.q);
      return f >= b.center_hz - hw && f <= b.center_hz + hw;
    });
    if (in_band) inside += e;
  }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace tubespoof
