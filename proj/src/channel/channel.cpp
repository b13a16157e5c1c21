#include "chainnet/channel/channel.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "chainnet/errors.hpp"
#include "chainnet/seed.hpp"

namespace chainnet::channel {
namespace {

constexpr double kPi = std::numbers::pi;
// Phasors are recomputed exactly at this interval to bound drift in the
// rotation recurrence.
constexpr std::size_t kResync = 1024;

}  // namespace

ChannelProfile ChannelProfile::epa(double sample_rate_hz, double max_doppler_hz) {
  ChannelProfile p;
  p.delays_ns = {0, 30, 70, 90, 110, 190, 410};
  p.gains_db = {0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8};
  p.sample_rate_hz = sample_rate_hz;
  p.max_doppler_hz = max_doppler_hz;
  return p;
}

ChannelProfile ChannelProfile::single_tap(double sample_rate_hz, double max_doppler_hz) {
  ChannelProfile p;
  p.delays_ns = {0};
  p.gains_db = {0.0};
  p.sample_rate_hz = sample_rate_hz;
  p.max_doppler_hz = max_doppler_hz;
  return p;
}

void ChannelProfile::validate() const {
  if (delays_ns.empty()) throw ConfigError("channel profile: at least one path is required");
  if (delays_ns.size() != gains_db.size())
    throw ConfigError("channel profile: " + std::to_string(delays_ns.size()) + " delays but " +
                      std::to_string(gains_db.size()) + " gains");
  if (delays_ns.front() != 0.0) throw ConfigError("channel profile: first path delay must be 0 ns");
  for (std::size_t i = 1; i < delays_ns.size(); ++i)
    if (delays_ns[i] < delays_ns[i - 1]) throw ConfigError("channel profile: delays must be non-decreasing");
  for (double g : gains_db)
    if (!std::isfinite(g)) throw ConfigError("channel profile: path gains must be finite");
  if (!(max_doppler_hz >= 0.0) || !std::isfinite(max_doppler_hz))
    throw ConfigError("channel profile: max_doppler_hz must be >= 0");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ConfigError("channel profile: sample_rate_hz must be positive");
}

std::vector<double> ChannelProfile::delay_samples() const {
  std::vector<double> d(delays_ns.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = delays_ns[i] * sample_rate_hz / 1e9;
    const double whole = std::round(d[i]);
    if (std::abs(d[i] - whole) < 1e-9) d[i] = whole;
  }
  return d;
}

std::vector<double> ChannelProfile::linear_amplitudes() const {
  std::vector<double> a(gains_db.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::pow(10.0, gains_db[i] / 20.0);
  return a;
}

std::size_t ChannelProfile::guard_samples() const {
  validate();
  return static_cast<std::size_t>(std::ceil(delay_samples().back())) + 1;
}

SosFading::SosFading(double max_doppler_hz, double sample_rate_hz, std::uint64_t seed, std::size_t oscillators) {
  if (oscillators == 0) throw ConfigError("fading: oscillator count must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("fading: sample rate must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double theta = unit(rng);
  const double m = static_cast<double>(oscillators);
  const double sd = std::sqrt(0.5 / m);
  weights_.resize(oscillators);
  omega_.resize(oscillators);
  for (std::size_t n = 0; n < oscillators; ++n) {
    const double re = normal(rng);
    const double im = normal(rng);
    weights_[n] = cplx(sd * re, sd * im);
    const double alpha = 2.0 * kPi * (static_cast<double>(n) + theta) / m;
    omega_[n] = 2.0 * kPi * max_doppler_hz * std::cos(alpha) / sample_rate_hz;
  }
}

Signal SosFading::generate(std::size_t n) const {
  Signal out(n, cplx(0.0, 0.0));
  for (std::size_t o = 0; o < weights_.size(); ++o) {
    const cplx step = std::polar(1.0, omega_[o]);
    cplx z;
    for (std::size_t k = 0; k < n; ++k) {
      if (k % kResync == 0) z = weights_[o] * std::polar(1.0, omega_[o] * static_cast<double>(k));
      out[k] += z;
      z *= step;
    }
  }
  return out;
}

FadingRealization realize_fading(const ChannelProfile& profile, std::size_t n, std::uint64_t seed) {
  profile.validate();
  FadingRealization r;
  r.seed = seed;
  r.taps.reserve(profile.delays_ns.size());
  for (std::size_t p = 0; p < profile.delays_ns.size(); ++p) {
    if (profile.unity_fading) {
      r.taps.emplace_back(n, cplx(1.0, 0.0));
    } else {
      SosFading gen(profile.max_doppler_hz, profile.sample_rate_hz, derive_seed(seed, {p}));
      r.taps.push_back(gen.generate(n));
    }
  }
  return r;
}

Signal apply_multipath(std::span<const cplx> x, const ChannelProfile& profile, std::uint64_t seed) {
  if (x.empty()) throw LengthError("apply_multipath: input sequence is empty");
  const FadingRealization fading = realize_fading(profile, x.size(), seed);
  const std::vector<double> delays = profile.delay_samples();
  const std::vector<double> amps = profile.linear_amplitudes();
  const std::size_t n = x.size();
  Signal y(n, cplx(0.0, 0.0));
  for (std::size_t p = 0; p < delays.size(); ++p) {
    const double whole = std::floor(delays[p]);
    const double frac = delays[p] - whole;
    const std::size_t d = static_cast<std::size_t>(whole);
    const Signal& c = fading.taps[p];
    for (std::size_t k = d; k < n; ++k) {
      cplx v = (1.0 - frac) * x[k - d];
      if (frac > 0.0 && k >= d + 1) v += frac * x[k - d - 1];
      y[k] += amps[p] * c[k] * v;
    }
  }
  return y;
}

Signal apply_flat_fading(std::span<const cplx> x, double max_doppler_hz, std::uint64_t seed, double sample_rate_hz) {
  if (!(max_doppler_hz >= 0.0)) throw ConfigError("apply_flat_fading: max_doppler_hz must be >= 0");
  const SosFading gen(max_doppler_hz, sample_rate_hz, derive_seed(seed, {0}));
  const Signal c = gen.generate(x.size());
  Signal y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = c[k] * x[k];
  return y;
}

Signal add_awgn(std::span<const cplx> x, const NoiseConfig& cfg) {
  if (cfg.snr_db == NoiseConfig::kBypass) return Signal(x.begin(), x.end());
  if (std::isnan(cfg.snr_db)) throw ConfigError("add_awgn: snr_db is NaN");
  const double p = modem::mean_power(x);
  if (!(p > 0.0)) throw DegenerateSignalError("add_awgn: input has zero power, SNR is undefined");
  const double sd = std::sqrt(p / std::pow(10.0, cfg.snr_db / 10.0) / 2.0);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, sd);
  Signal y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double re = normal(rng);
    const double im = normal(rng);
    y[k] = x[k] + cplx(re, im);
  }
  return y;
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::None: return "none";
    case Scenario::Flat: return "flat";
    case Scenario::Epa: return "epa";
  }
  throw UsageError("unknown channel scenario " + std::to_string(static_cast<int>(s)));
}

std::optional<Scenario> parse_scenario(std::string_view name) {
  if (name == "none") return Scenario::None;
  if (name == "flat") return Scenario::Flat;
  if (name == "epa") return Scenario::Epa;
  return std::nullopt;
}

}  // namespace chainnet::channel
