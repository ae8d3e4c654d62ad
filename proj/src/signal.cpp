#include "tubespoof/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "tubespoof/error.hpp"

namespace tubespoof {

AudioBuffer::AudioBuffer(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  require(sample_rate > 0, "sample rate must be positive");
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::Format, "not a RIFF/WAVE file" + where);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::size_t len = le32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16 || len > avail) fail(ErrorCode::Format, "truncated fmt chunk" + where);
      const unsigned char* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == kFormatExtensible) {
        if (len < 26) fail(ErrorCode::Format, "truncated extensible fmt chunk" + where);
        format = le16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min(len, avail);
    }
    pos = body + len + (len & 1);
  }

  if (!have_fmt) fail(ErrorCode::Format, "missing fmt chunk" + where);
  if (!((format == kFormatPcm && bits == 16) || (format == kFormatFloat && bits == 32))) {
    fail(ErrorCode::Format, "unsupported WAV encoding (need 16-bit PCM or 32-bit float)" + where);
  }
  if (channels == 0 || rate == 0) fail(ErrorCode::Format, "invalid channel count or rate" + where);
  if (data == nullptr || data_len == 0) fail(ErrorCode::Format, "empty data chunk" + where);

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) fail(ErrorCode::Format, "empty data chunk" + where);

  std::vector<double> out(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + i * frame_bytes + ch * (bits / 8);
      if (format == kFormatPcm) {
        acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        std::uint32_t raw = le32(p);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        acc += v;
      }
    }
    out[i] = acc / channels;
  }
  return AudioBuffer(std::move(out), static_cast<int>(rate));
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf) {
  require(!buf.empty(), "cannot write an empty buffer");
  const auto n = static_cast<std::uint32_t>(buf.size());
  std::string out;
  out.reserve(44 + 2 * buf.size());
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(buf.sample_rate()));
  put32(out, static_cast<std::uint32_t>(buf.sample_rate()) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (double x : buf.samples()) {
    double c = std::clamp(x, -1.0, 1.0);
    long q = std::lround(c * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot write WAV file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::Io, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling: Kaiser-windowed sinc, ~80 dB stopband starting at the lower
// Nyquist frequency.

AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
  require(target_rate > 0, "target rate must be positive");
  if (target_rate == buf.sample_rate()) return buf;
  require(!buf.empty(), "cannot resample an empty buffer");

  const double ratio = static_cast<double>(target_rate) / buf.sample_rate();
  const double low = std::min(1.0, ratio);  // lower Nyquist relative to input Nyquist
  const double cutoff = 0.5 * low * 0.95;   // cycles per input sample
  const double transition = 0.5 * low * 0.1;
  constexpr double kAttenuationDb = 80.0;
  const double beta = 0.1102 * (kAttenuationDb - 8.7);
  const double half =
      std::ceil((kAttenuationDb - 8.0) / (2.285 * 2.0 * std::numbers::pi * transition) / 2.0);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);

  const auto in = buf.samples();
  const auto n_in = static_cast<long>(in.size());
  const auto n_out = static_cast<std::size_t>(std::llround(in.size() * ratio));
  std::vector<double> out(n_out, 0.0);
  for (std::size_t m = 0; m < n_out; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const long k0 = std::max(0L, static_cast<long>(std::ceil(t - half)));
    const long k1 = std::min(n_in - 1, static_cast<long>(std::floor(t + half)));
    double acc = 0.0;
    for (long k = k0; k <= k1; ++k) {
      const double tau = t - static_cast<double>(k);
      const double r = tau / half;
      if (std::abs(r) > 1.0) continue;
      const double x = 2.0 * cutoff * tau;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0_beta;
      acc += in[static_cast<std::size_t>(k)] * 2.0 * cutoff * sinc * w;
    }
    out[m] = acc;
  }
  return AudioBuffer(std::move(out), target_rate);
}

AudioBuffer chirp(double duration_s, double f_start, double f_end, int sample_rate) {
  require(sample_rate > 0, "sample rate must be positive");
  require(duration_s > 0.0, "chirp duration must be positive");
  require(f_start > 0.0 && f_start < f_end && f_end < sample_rate / 2.0,
          "chirp requires 0 < f_start < f_end < sample_rate/2");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  require(n >= 2, "chirp too short");
  const double r = f_end / f_start;
  const double k = 2.0 * std::numbers::pi * f_start * duration_s / std::log(r);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
    x[i] = std::sin(k * (std::pow(r, frac) - 1.0));
  }
  return AudioBuffer(std::move(x), sample_rate);
}

// ---------------------------------------------------------------------------
// FFT

namespace {

enum class PlanKind { Forward, Backward, RealForward };

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwArray = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwArray<T> fftw_array(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) fail(ErrorCode::Internal, "fftw_malloc failed");
  return FftwArray<T>(p);
}

// FFTW's planner is not thread-safe; execution on fresh arrays is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n, PlanKind kind) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(n, kind);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_plan plan = nullptr;
    const int len = static_cast<int>(n);
    if (kind == PlanKind::RealForward) {
      auto in = fftw_array<double>(n);
      auto out = fftw_array<fftw_complex>(n / 2 + 1);
      plan = fftw_plan_dft_r2c_1d(len, in.get(), out.get(), FFTW_ESTIMATE);
    } else {
      auto in = fftw_array<fftw_complex>(n);
      auto out = fftw_array<fftw_complex>(n);
      plan = fftw_plan_dft_1d(len, in.get(), out.get(),
                              kind == PlanKind::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                              FFTW_ESTIMATE);
    }
    if (plan == nullptr) fail(ErrorCode::Internal, "FFTW planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::size_t, PlanKind>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

std::vector<std::complex<double>> complex_transform(std::span<const std::complex<double>> x,
                                                    PlanKind kind) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  fftw_plan plan = plan_cache().get(n, kind);
  auto in = fftw_array<fftw_complex>(n);
  auto out = fftw_array<fftw_complex>(n);
  std::memcpy(in.get(), x.data(), n * sizeof(fftw_complex));
  fftw_execute_dft(plan, in.get(), out.get());
  std::vector<std::complex<double>> result(n);
  std::memcpy(static_cast<void*>(result.data()), out.get(), n * sizeof(fftw_complex));
  return result;
}

}  // namespace

std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x) {
  return complex_transform(x, PlanKind::Forward);
}

std::vector<std::complex<double>> idft(std::span<const std::complex<double>> x) {
  auto y = complex_transform(x, PlanKind::Backward);
  const double scale = y.empty() ? 1.0 : 1.0 / static_cast<double>(y.size());
  for (auto& v : y) v *= scale;
  return y;
}

std::vector<std::complex<double>> dft_real(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  fftw_plan plan = plan_cache().get(n, PlanKind::RealForward);
  auto in = fftw_array<double>(n);
  auto out = fftw_array<fftw_complex>(n / 2 + 1);
  std::memcpy(in.get(), x.data(), n * sizeof(double));
  fftw_execute_dft_r2c(plan, in.get(), out.get());
  std::vector<std::complex<double>> result(n);
  for (std::size_t k = 0; k <= n / 2; ++k) result[k] = {out[k][0], out[k][1]};
  for (std::size_t k = n / 2 + 1; k < n; ++k) result[k] = std::conj(result[n - k]);
  return result;
}

Spectrum fft(const AudioBuffer& buf) {
  require(!buf.empty(), "fft of an empty buffer");
  Spectrum s;
  s.bins = dft_real(buf.samples());
  s.origin_length = buf.size();
  s.sample_rate = buf.sample_rate();
  s.bin_resolution = static_cast<double>(buf.sample_rate()) / static_cast<double>(buf.size());
  return s;
}

AudioBuffer ifft(const Spectrum& spec) {
  require(!spec.bins.empty(), "ifft of an empty spectrum");
  require(spec.bins.size() == spec.origin_length, "spectrum length mismatch");
  auto y = idft(spec.bins);
  std::vector<double> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [](auto v) { return v.real(); });
  return AudioBuffer(std::move(out), spec.sample_rate);
}

// ---------------------------------------------------------------------------
// Similarity measures

std::size_t CrossCorrelation::peak_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < coeffs.size(); ++i) {
    if (std::abs(coeffs[i]) > std::abs(coeffs[best])) best = i;
  }
  return best;
}

CrossCorrelation cross_correlation(const AudioBuffer& a, const AudioBuffer& b) {
  require(!a.empty() && !b.empty(), "cross-correlation of an empty buffer");
  require(a.sample_rate() == b.sample_rate(), "cross-correlation needs equal sample rates");
  const std::size_t na = a.size(), nb = b.size();
  const std::size_t len = na + nb - 1;

  std::vector<double> pa(len, 0.0), pb(len, 0.0);
  std::copy(a.samples().begin(), a.samples().end(), pa.begin());
  std::copy(b.samples().begin(), b.samples().end(), pb.begin());
  auto fa = dft_real(pa);
  auto fb = dft_real(pb);
  for (std::size_t k = 0; k < len; ++k) fa[k] = std::conj(fa[k]) * fb[k];
  auto corr = idft(fa);

  double ea = 0.0, eb = 0.0;
  for (double v : a.samples()) ea += v * v;
  for (double v : b.samples()) eb += v * v;
  const double norm = std::sqrt(ea * eb);

  CrossCorrelation out;
  out.lags.reserve(len);
  out.coeffs.reserve(len);
  for (long lag = -static_cast<long>(na - 1); lag <= static_cast<long>(nb - 1); ++lag) {
    const std::size_t idx = lag >= 0 ? static_cast<std::size_t>(lag)
                                     : len - static_cast<std::size_t>(-lag);
    double c = norm > 0.0 ? corr[idx].real() / norm : 0.0;
    out.lags.push_back(lag);
    out.coeffs.push_back(std::clamp(c, -1.0, 1.0));
  }
  return out;
}

std::vector<double> rms_envelope(const AudioBuffer& buf, double frame_ms, double hop_ms) {
  require(!buf.empty(), "envelope of an empty buffer");
  const auto frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(frame_ms * 1e-3 * buf.sample_rate())));
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(hop_ms * 1e-3 * buf.sample_rate())));
  const auto x = buf.samples();
  if (x.size() <= frame) return {rms(x)};
  std::vector<double> env;
  for (std::size_t start = 0; start + frame <= x.size(); start += hop) {
    env.push_back(rms(x.subspan(start, frame)));
  }
  return env;
}

double dtw_distance(const AudioBuffer& a, const AudioBuffer& b) {
  require(!a.empty() && !b.empty(), "dtw of an empty buffer");
  require(a.sample_rate() == b.sample_rate(), "dtw needs equal sample rates");
  const auto ea = rms_envelope(a);
  const auto eb = rms_envelope(b);
  const std::size_t n = ea.size(), m = eb.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, kInf), cur(m, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double cost = std::abs(ea[i] - eb[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 2.0 * cost;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1] + 2.0 * cost);
        if (i > 0) best = std::min(best, prev[j] + cost);
        if (j > 0) best = std::min(best, cur[j - 1] + cost);
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1] / static_cast<double>(n + m);
}

}  // namespace tubespoof
