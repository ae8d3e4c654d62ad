#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "tubespoof/acoustics.hpp"
#include "tubespoof/error.hpp"
#include "tubespoof/filterbank.hpp"
#include "tubespoof/signal.hpp"

using namespace tubespoof;

namespace {

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.2);
  std::vector<double> v(n);
  for (auto& s : v) s = g(rng);
  return v;
}

AudioBuffer tone(double f, std::size_t n, int rate) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.5 * std::sin(2 * std::numbers::pi * f * i / rate);
  return AudioBuffer(v, rate);
}

BandPassFilterBank tube1(int rate) {
  return bank_from_profile(resonance_profile_single(TubeSpec(0.406, 0.0345), Environment(), rate / 2.0), rate);
}

}  // namespace

TEST_CASE("bank from profile") {
  const Environment env;
  const auto p = resonance_profile_single(TubeSpec(0.406, 0.0345), env, 4000.0);
  CHECK(bank_from_profile(p, 8000).bands().size() == 9);
  const auto wide = bank_from_profile(resonance_profile_single(TubeSpec(0.406, 0.0345), env, 8000.0), 16000);
  CHECK(wide.bands().front().center_hz == doctest::Approx(402.454).epsilon(1e-5));

  ResonanceProfile at_nyquist;
  at_nyquist.nyquist_hz = 8000;
  at_nyquist.harmonics = {{1000.0, 20.0}, {4000.0, 20.0}};
  CHECK(bank_from_profile(at_nyquist, 8000).bands().size() == 1);

  ResonanceProfile above;
  above.harmonics = {{4000.0, 20.0}};
  CHECK_THROWS_AS(bank_from_profile(above, 8000), Error);
  CHECK_THROWS_AS(bank_from_profile(ResonanceProfile{}, 8000), Error);
  CHECK_THROWS_AS(BandPassFilterBank({{100.0, -1.0}}, 8000), Error);
}

TEST_CASE("one band matches the rationalized closed form") {
  const Band b{500.0, 25.0};
  CHECK(std::abs(band_response(b, 500.0) - std::complex<double>(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(band_response(b, 0.0)) == 0.0);
  const BandPassFilterBank bank({b}, 8000);
  std::vector<double> probes;
  for (int i = 0; i < 20; ++i) probes.push_back(37.0 + 199.0 * i);
  const auto h = transfer_function(bank, probes);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    // H = jb / (a + jb) = (b^2 + j a b) / (a^2 + b^2)
    const double f = probes[i];
    const double a = b.center_hz * b.center_hz - f * f, bb = f * b.center_hz / b.q;
    const double den = a * a + bb * bb;
    CHECK(h[i].real() == doctest::Approx(bb * bb / den).epsilon(1e-12));
    CHECK(h[i].imag() == doctest::Approx(a * bb / den).epsilon(1e-12));
  }
}

TEST_CASE("half-power points sit at f_i (1 +- 1/2Q)") {
  for (double q : {20.0, 40.0, 80.0}) {
    const Band b{1000.0, q};
    auto solve = [&](double lo, double hi) {
      // |H|^2 - 1/2 changes sign once on each flank
      auto g = [&](double f) { return std::norm(band_response(b, f)) - 0.5; };
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        ((g(lo) < 0) == (g(mid) < 0) ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    const double lower = solve(500.0, 1000.0), upper = solve(1000.0, 1500.0);
    CHECK(lower == doctest::Approx(1000.0 * (1 - 1 / (2 * q))).epsilon(0.02));
    CHECK(upper == doctest::Approx(1000.0 * (1 + 1 / (2 * q))).epsilon(0.02));
  }
}

TEST_CASE("white noise through the tube-1 bank peaks where |H| does") {
  const int rate = 8000;
  const auto bank = tube1(rate);
  const std::size_t n = 8000;
  const double df = static_cast<double>(rate) / n;
  const AudioBuffer x(white(n, 42), rate);
  const auto sx = fft(x), sy = fft(apply(bank, x));
  std::vector<double> freqs(n / 2 + 1);
  for (std::size_t i = 0; i < freqs.size(); ++i) freqs[i] = i * df;
  const auto h = transfer_function(bank, freqs);
  for (const auto& band : bank.bands()) {
    const auto lo = static_cast<std::size_t>(band.center_hz * 0.97 / df);
    const auto hi = std::min(freqs.size() - 1, static_cast<std::size_t>(band.center_hz * 1.03 / df));
    std::size_t measured = lo, model = lo;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (std::abs(sy.bins[i] / sx.bins[i]) > std::abs(sy.bins[measured] / sx.bins[measured])) measured = i;
      if (std::abs(h[i]) > std::abs(h[model])) model = i;
    }
    CHECK(std::abs(static_cast<long>(measured) - static_cast<long>(model)) <= 1);
    // summed neighbours pull the maxima slightly off the nominal centres
    CHECK(std::abs(model * df - band.center_hz) / band.center_hz < 0.003);
  }
}

TEST_CASE("tone far from every band is rejected") {
  const int rate = 8000;
  const BandPassFilterBank bank({{2000.0, 80.0}}, rate);
  const auto x = tone(100.0, 8000, rate);
  CHECK(std::abs(band_response(bank.bands()[0], 100.0)) < 1e-3);
  CHECK(rms(apply(bank, x).samples()) < 1e-3 * rms(x.samples()));
}

TEST_CASE("apply is linear, real, length preserving and gain bounded") {
  const int rate = 8000;
  const auto bank = tube1(rate);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::size_t n = 3000 + 37 * s;
    const AudioBuffer x(white(n, 2 * s), rate), y(white(n, 2 * s + 1), rate);
    const double a = coef(rng), b = coef(rng);
    std::vector<double> mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = a * x.data()[i] + b * y.data()[i];
    const auto fm = apply_with_residue(bank, AudioBuffer(mix, rate));
    const auto fx = apply(bank, x), fy = apply(bank, y);
    REQUIRE(fm.audio.size() == n);
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = fm.audio.data()[i] - (a * fx.data()[i] + b * fy.data()[i]);
      err += d * d;
    }
    CHECK(std::sqrt(err / n) < 1e-9);
    CHECK(fm.imag_rms < 1e-9);

    std::vector<double> freqs(n / 2 + 1);
    for (std::size_t i = 0; i < freqs.size(); ++i) freqs[i] = static_cast<double>(i) * rate / n;
    double peak = 0;
    for (const auto& h : transfer_function(bank, freqs)) peak = std::max(peak, std::abs(h));
    CHECK(rms(fx.samples()) <= peak * rms(x.samples()) * (1 + 1e-6));
  }
  CHECK_THROWS_AS(apply(bank, AudioBuffer(white(100, 1), 16000)), Error);
}

TEST_CASE("magnitude mode drops phase only") {
  const int rate = 8000;
  const auto bank = tube1(rate);
  const AudioBuffer x(white(4000, 9), rate);
  const auto c = fft(apply(bank, x, TransferMode::Complex));
  const auto m = fft(apply(bank, x, TransferMode::Magnitude));
  double worst = 0;
  for (std::size_t i = 1; i < c.bins.size() / 2; ++i)
    worst = std::max(worst, std::abs(std::abs(c.bins[i]) - std::abs(m.bins[i])));
  CHECK(worst < 1e-9);
}

TEST_CASE("band energy ratio") {
  const int rate = 8000;
  const auto bank = tube1(rate);
  for (std::uint64_t s = 0; s < 10; ++s)
    CHECK(band_energy_ratio(apply(bank, AudioBuffer(white(8000, 100 + s), rate)), bank) > 0.5);
  const double centre = bank.bands()[2].center_hz;
  // 8000 samples at 8 kHz put every integer Hz on a bin
  const BandPassFilterBank exact({{1000.0, 30.0}}, rate);
  CHECK(band_energy_ratio(tone(1000.0, 8000, rate), exact) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(band_energy_ratio(tone(std::round(centre * 1.5), 8000, rate), bank) < 0.01);
}
