#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "chainnet/modem/modem.hpp"

namespace chainnet::channel {

using modem::cplx;
using modem::Signal;

// Tapped delay line. unity_fading replaces every tap process with the
// constant 1, leaving only gains and delays.
struct ChannelProfile {
  std::vector<double> delays_ns;
  std::vector<double> gains_db;
  double max_doppler_hz = 10.0;
  double sample_rate_hz = 100e6;
  bool unity_fading = false;

  static ChannelProfile epa(double sample_rate_hz = 100e6, double max_doppler_hz = 10.0);
  static ChannelProfile single_tap(double sample_rate_hz = 100e6, double max_doppler_hz = 0.0);

  void validate() const;
  std::vector<double> delay_samples() const;
  std::vector<double> linear_amplitudes() const;
  // Samples of history needed before a frame so the longest path is filled.
  std::size_t guard_samples() const;
};

inline constexpr std::size_t kDefaultOscillators = 16;

// Sum-of-sinusoids Rayleigh process with unit mean power:
//   c(t) = sum_n w_n exp(j 2 pi f_D cos(2 pi (n + theta) / M) t),
// with w_n ~ CN(0, 1/M) and theta ~ U[0, 1).
class SosFading {
 public:
  SosFading(double max_doppler_hz, double sample_rate_hz, std::uint64_t seed,
            std::size_t oscillators = kDefaultOscillators);

  // Coefficients for samples [0, n).
  Signal generate(std::size_t n) const;

 private:
  std::vector<cplx> weights_;
  std::vector<double> omega_;  // radians per sample
};

// Per-tap coefficient series c_p[0..n).
struct FadingRealization {
  std::vector<Signal> taps;
  std::uint64_t seed = 0;
};

FadingRealization realize_fading(const ChannelProfile& profile, std::size_t n, std::uint64_t seed);

// y[n] = sum_p g_p c_p[n] x(n - d_p), x(.) linearly interpolated and zero
// before the first sample.
Signal apply_multipath(std::span<const cplx> x, const ChannelProfile& profile, std::uint64_t seed);

Signal apply_flat_fading(std::span<const cplx> x, double max_doppler_hz, std::uint64_t seed,
                         double sample_rate_hz = 100e6);

struct NoiseConfig {
  static constexpr double kBypass = std::numeric_limits<double>::infinity();
  double snr_db = kBypass;
  std::uint64_t seed = 0;
};

// Noise variance is set from the measured mean power of x.
Signal add_awgn(std::span<const cplx> x, const NoiseConfig& cfg);

enum class Scenario : std::uint8_t { None = 0, Flat = 1, Epa = 2 };

std::string_view scenario_name(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view name);

}  // namespace chainnet::channel
