#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tubespoof {

namespace air {
inline constexpr double kViscosity = 1.81e-5;  // kg/(m*s)
inline constexpr double kDensity = 1.18;       // kg/m^3
inline constexpr double kEndCorrection = 0.8;  // end correction per unit diameter
}  // namespace air

/// Ambient conditions. Default temperature reproduces the six PVC tube
/// measurements used for calibration.
class Environment {
 public:
  static constexpr double kDefaultTemperatureK = 303.0;

  explicit Environment(double temperature_K = kDefaultTemperatureK);

  double temperature_K() const noexcept { return temperature_K_; }
  /// Speed of sound in dry air, m/s.
  double c_air() const noexcept;

 private:
  double temperature_K_;
};

/// Open-ended cylindrical tube.
class TubeSpec {
 public:
  static constexpr double kMinLength = 0.05, kMaxLength = 3.0;
  static constexpr double kMinDiameter = 0.005, kMaxDiameter = 0.15;

  TubeSpec(double length_m, double diameter_m);

  /// Skips the dimension checks. Used to probe limiting cases such as d = 0.
  static TubeSpec unchecked(double length_m, double diameter_m);

  double length_m() const noexcept { return length_m_; }
  double diameter_m() const noexcept { return diameter_m_; }
  double area_m2() const noexcept;
  /// Length including the 0.8 d end correction.
  double effective_length_m() const noexcept;

  bool operator==(const TubeSpec&) const = default;

 private:
  TubeSpec(double length_m, double diameter_m, bool /*unchecked*/)
      : length_m_(length_m), diameter_m_(diameter_m) {}

  double length_m_;
  double diameter_m_;
};

/// Two open tubes joined end to end.
class TwoTubeSpec {
 public:
  TwoTubeSpec(TubeSpec first, TubeSpec second);

  const TubeSpec& first() const noexcept { return first_; }
  const TubeSpec& second() const noexcept { return second_; }

 private:
  TubeSpec first_;
  TubeSpec second_;
};

struct Harmonic {
  double frequency_hz;
  double q;
};

struct ResonanceProfile {
  std::vector<Harmonic> harmonics;
  double nyquist_hz = 0.0;
  std::optional<std::string> warning;

  bool empty() const noexcept { return harmonics.empty(); }
  double fundamental_hz() const { return harmonics.at(0).frequency_hz; }
  double fundamental_q() const { return harmonics.at(0).q; }
};

double fundamental_frequency(const TubeSpec& tube, const Environment& env);

/// Radiation and wall damping at a given fundamental.
struct Damping {
  double radiation;
  double wall;
};
Damping damping(double diameter_m, double f0_hz, const Environment& env);

double quality_factor(const TubeSpec& tube, const Environment& env);

/// Q_i decay with harmonic number.
double harmonic_q(double q0, int harmonic);

ResonanceProfile resonance_profile_single(const TubeSpec& tube, const Environment& env,
                                          double nyquist_hz);

/// g(f) = A1 cot(2 pi f L1'/c) - A2 cot(2 pi f L2'/c); roots are resonances.
double two_tube_mismatch(const TwoTubeSpec& spec, const Environment& env, double f_hz);

ResonanceProfile resonances_two_tube(const TwoTubeSpec& spec, const Environment& env,
                                     double nyquist_hz);

struct InverseDesign {
  TubeSpec tube;
  bool saturated = false;
};

/// Diameter maximizing Q at a fixed fundamental.
double q_maximizing_diameter(double f0_hz, const Environment& env);

/// Tube dimensions realizing (f0, Q0), taking the decreasing-Q diameter branch.
InverseDesign tube_from_resonance(double f0_hz, double q0, const Environment& env);

}  // namespace tubespoof
