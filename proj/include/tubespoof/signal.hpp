#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace tubespoof {

/// Mono audio with its sample rate in Hz. Samples are nominally in [-1, 1].
class AudioBuffer {
 public:
  AudioBuffer() = default;
  AudioBuffer(std::vector<double> samples, int sample_rate);

  std::span<const double> samples() const noexcept { return samples_; }
  const std::vector<double>& data() const noexcept { return samples_; }
  int sample_rate() const noexcept { return sample_rate_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  double duration_s() const noexcept {
    return sample_rate_ > 0 ? static_cast<double>(samples_.size()) / sample_rate_ : 0.0;
  }
  double nyquist() const noexcept { return sample_rate_ / 2.0; }

  bool operator==(const AudioBuffer&) const = default;

 private:
  std::vector<double> samples_;
  int sample_rate_ = 0;
};

/// Full-length DFT of a real signal. bins.size() == origin_length.
struct Spectrum {
  std::vector<std::complex<double>> bins;
  double bin_resolution = 0.0;  // Hz per bin
  std::size_t origin_length = 0;
  int sample_rate = 0;
};

AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& buf);

AudioBuffer resample(const AudioBuffer& buf, int target_rate);

/// Exponential sine sweep from f_start to f_end over duration_s.
AudioBuffer chirp(double duration_s, double f_start, double f_end, int sample_rate);

Spectrum fft(const AudioBuffer& buf);
/// Inverse transform; the real part is returned, imaginary residue is dropped.
AudioBuffer ifft(const Spectrum& spec);

// Raw complex transforms. Unnormalized forward, 1/N-scaled inverse.
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);
std::vector<std::complex<double>> idft(std::span<const std::complex<double>> x);
std::vector<std::complex<double>> dft_real(std::span<const double> x);

struct CrossCorrelation {
  std::vector<long> lags;
  std::vector<double> coeffs;

  /// Index of the coefficient with the largest magnitude (first on ties).
  std::size_t peak_index() const;
};

/// coeffs[k] = sum_n a[n] * b[n + lags[k]] / sqrt(Ea * Eb).
CrossCorrelation cross_correlation(const AudioBuffer& a, const AudioBuffer& b);

/// Frame RMS envelope, frame_ms/hop_ms framing. A signal shorter than one
/// frame yields a single frame over the whole signal.
std::vector<double> rms_envelope(const AudioBuffer& buf, double frame_ms = 25.0,
                                 double hop_ms = 10.0);

/// DTW over 25 ms / 10 ms RMS envelopes with absolute-difference cost and the
/// symmetric step pattern (diagonal steps weigh 2), normalized by n + m.
double dtw_distance(const AudioBuffer& a, const AudioBuffer& b);

double rms(std::span<const double> x);

}  // namespace tubespoof
