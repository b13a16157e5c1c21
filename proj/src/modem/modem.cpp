#include "chainnet/modem/modem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "chainnet/errors.hpp"
#include "chainnet/seed.hpp"

namespace chainnet::modem {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kAnalogAttempts = 16;

constexpr std::array<std::string_view, kSchemeCount> kNames = {
    "128APSK", "128QAM", "16APSK", "16PAM", "16QAM", "32APSK", "32QAM",
    "64APSK", "64QAM", "AM-DSB-SC", "AM-DSB-WC", "AM-SSB-SC", "AM-SSB-WC", "FM",
};

unsigned gray_decode(unsigned g) {
  unsigned b = g;
  while (g >>= 1) b ^= g;
  return b;
}

void normalize_power(std::vector<cplx>& pts) {
  const double p = mean_power(pts);
  const double s = 1.0 / std::sqrt(p);
  for (cplx& z : pts) z *= s;
}

ConstellationSpec pam(unsigned bits) {
  const unsigned m = 1u << bits;
  ConstellationSpec c;
  c.bits_per_symbol = bits;
  for (unsigned b = 0; b < m; ++b)
    c.points.emplace_back(2.0 * gray_decode(b) - (m - 1.0), 0.0);
  normalize_power(c.points);
  return c;
}

// High half of the bits selects the in-phase level, low half the quadrature
// level, each Gray-coded.
ConstellationSpec square_qam(unsigned bits) {
  const unsigned half = bits / 2;
  const unsigned side = 1u << half;
  const unsigned mask = side - 1;
  ConstellationSpec c;
  c.bits_per_symbol = bits;
  for (unsigned b = 0; b < (1u << bits); ++b) {
    const double i = 2.0 * gray_decode(b >> half) - (side - 1.0);
    const double q = 2.0 * gray_decode(b & mask) - (side - 1.0);
    c.points.emplace_back(i, q);
  }
  normalize_power(c.points);
  return c;
}

// side x side grid with a corner x corner block removed at each corner,
// enumerated row by row.
ConstellationSpec cross_qam(unsigned bits, int side, int corner) {
  ConstellationSpec c;
  c.bits_per_symbol = bits;
  const int edge = side - 1;
  const int cut = edge - 2 * corner;
  for (int y = edge; y >= -edge; y -= 2)
    for (int x = -edge; x <= edge; x += 2) {
      if (std::abs(x) > cut && std::abs(y) > cut) continue;
      c.points.emplace_back(x, y);
    }
  normalize_power(c.points);
  return c;
}

ConstellationSpec apsk(unsigned bits, const std::vector<std::size_t>& rings, const std::vector<double>& ratios,
                       const char* name) {
  if (ratios.size() + 1 != rings.size())
    throw ConfigError(std::string(name) + ": expected " + std::to_string(rings.size() - 1) +
                      " radius ratios, got " + std::to_string(ratios.size()));
  double prev = 1.0;
  for (double r : ratios) {
    if (!(r > prev))
      throw ConfigError(std::string(name) + ": radius ratios must increase and exceed 1");
    prev = r;
  }
  ConstellationSpec c;
  c.bits_per_symbol = bits;
  for (std::size_t k = 0; k < rings.size(); ++k) {
    const double radius = k == 0 ? 1.0 : ratios[k - 1];
    const std::size_t n = rings[k];
    for (std::size_t j = 0; j < n; ++j)
      c.points.push_back(std::polar(radius, (2.0 * j + 1.0) * kPi / static_cast<double>(n)));
  }
  normalize_power(c.points);
  return c;
}

double rrc_at(double t, double beta) {
  if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / kPi;
  if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
    const double a = kPi / (4.0 * beta);
    return beta / std::sqrt(2.0) * ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
  }
  const double x = 4.0 * beta * t;
  return (std::sin(kPi * t * (1.0 - beta)) + x * std::cos(kPi * t * (1.0 + beta))) / (kPi * t * (1.0 - x * x));
}

void require_digital(Scheme s, const char* op) {
  if (!is_digital(s))
    throw UsageError(std::string(op) + ": " + std::string(scheme_name(s)) + " is an analog scheme");
}

}  // namespace

const std::array<Scheme, kSchemeCount>& all_schemes() {
  static const std::array<Scheme, kSchemeCount> all = [] {
    std::array<Scheme, kSchemeCount> a{};
    for (std::size_t i = 0; i < kSchemeCount; ++i) a[i] = static_cast<Scheme>(i);
    return a;
  }();
  return all;
}

std::string_view scheme_name(Scheme s) {
  const auto i = static_cast<std::size_t>(s);
  if (i >= kSchemeCount) throw UsageError("unknown modulation label " + std::to_string(i));
  return kNames[i];
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  for (std::size_t i = 0; i < kSchemeCount; ++i)
    if (kNames[i] == name) return static_cast<Scheme>(i);
  return std::nullopt;
}

bool is_digital(Scheme s) { return static_cast<std::size_t>(s) < static_cast<std::size_t>(Scheme::AmDsbSc); }

ConstellationSpec make_constellation(Scheme s, const ApskRadii& radii) {
  require_digital(s, "make_constellation");
  switch (s) {
    case Scheme::Pam16: return pam(4);
    case Scheme::Qam16: return square_qam(4);
    case Scheme::Qam64: return square_qam(6);
    case Scheme::Qam32: return cross_qam(5, 6, 1);
    case Scheme::Qam128: return cross_qam(7, 12, 2);
    case Scheme::Apsk16: return apsk(4, {4, 12}, radii.apsk16, "16APSK");
    case Scheme::Apsk32: return apsk(5, {4, 12, 16}, radii.apsk32, "32APSK");
    case Scheme::Apsk64: return apsk(6, {4, 12, 20, 28}, radii.apsk64, "64APSK");
    case Scheme::Apsk128: return apsk(7, {8, 16, 20, 36, 48}, radii.apsk128, "128APSK");
    default: break;
  }
  throw UsageError("make_constellation: unhandled scheme");
}

std::size_t nearest_point(const ConstellationSpec& c, cplx z) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const double d = std::norm(z - c.points[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void PulseShapeConfig::validate() const {
  if (samples_per_symbol == 0) throw ConfigError("pulse: samples_per_symbol must be >= 1");
  if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ConfigError("pulse: rolloff must lie in (0, 1]");
  if (span == 0) throw ConfigError("pulse: span must be >= 1");
}

std::vector<double> rrc_taps(const PulseShapeConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.tap_count();
  const double mid = static_cast<double>(n - 1) / 2.0;
  std::vector<double> h(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = rrc_at((static_cast<double>(i) - mid) / static_cast<double>(cfg.samples_per_symbol), cfg.rolloff);
    energy += h[i] * h[i];
  }
  const double s = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= s;
  return h;
}

std::size_t symbols_required(std::size_t steady, const PulseShapeConfig& cfg) {
  cfg.validate();
  const std::size_t sps = cfg.samples_per_symbol;
  const std::size_t extra = steady == 0 ? 0 : (steady - 1 + sps - 1) / sps;
  return cfg.span + 1 + extra;
}

ShapedSignal pulse_shape(std::span<const cplx> symbols, const PulseShapeConfig& cfg, std::size_t steady) {
  const std::size_t need = symbols_required(steady, cfg);
  if (symbols.size() < need)
    throw LengthError("pulse_shape: " + std::to_string(symbols.size()) + " symbols cannot yield " +
                      std::to_string(steady) + " steady-state samples; " + std::to_string(need) +
                      " symbols are required");
  const std::vector<double> h = rrc_taps(cfg);
  const std::size_t sps = cfg.samples_per_symbol;
  ShapedSignal out;
  out.samples.assign((symbols.size() - 1) * sps + h.size(), cplx(0.0, 0.0));
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    cplx* dst = out.samples.data() + k * sps;
    const cplx s = symbols[k];
    for (std::size_t t = 0; t < h.size(); ++t) dst[t] += s * h[t];
  }
  const double p = mean_power(out.samples);
  if (!(p > 0.0)) throw DegenerateSignalError("pulse_shape: symbol sequence has zero power");
  out.gain = 1.0 / std::sqrt(p);
  for (cplx& z : out.samples) z *= out.gain;
  return out;
}

void AnalogSourceConfig::validate() const {
  if (!(carrier_hz > 0.0)) throw ConfigError("analog: carrier_hz must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("analog: sample_rate_hz must be positive");
  if (!(tone_min_hz > 0.0 && tone_max_hz >= tone_min_hz))
    throw ConfigError("analog: tone band must satisfy 0 < tone_min_hz <= tone_max_hz");
  if (!(sample_rate_hz > 2.0 * tone_max_hz))
    throw ConfigError("analog: sample_rate_hz must exceed twice the envelope bandwidth");
  if (!(am_index > 0.0 && am_index < 1.0)) throw ConfigError("analog: am_index must lie in (0, 1)");
  if (!(fm_deviation_hz > 0.0)) throw ConfigError("analog: fm_deviation_hz must be positive");
}

Signal modulate_analog(Scheme s, const AnalogSourceConfig& cfg, std::size_t n, std::uint64_t seed) {
  if (is_digital(s))
    throw UsageError("modulate_analog: " + std::string(scheme_name(s)) + " is a digital scheme");
  cfg.validate();
  if (n == 0) throw LengthError("modulate_analog: n_samples must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(cfg.tone_min_hz, cfg.tone_max_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<double> f(cfg.tone_count), phi(cfg.tone_count);
  for (std::size_t i = 0; i < cfg.tone_count; ++i) {
    f[i] = freq(rng);
    phi[i] = phase(rng);
  }

  // Message, its Hilbert transform and its running integral, all in
  // closed form per tone.
  std::vector<double> m(n, 0.0), mh(n, 0.0), mi(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / cfg.sample_rate_hz;
    for (std::size_t i = 0; i < cfg.tone_count; ++i) {
      const double w = 2.0 * kPi * f[i];
      const double a = w * t + phi[i];
      m[k] += std::cos(a);
      mh[k] += std::sin(a);
      mi[k] += (std::sin(a) - std::sin(phi[i])) / w;
    }
  }
  double peak = 0.0;
  for (double v : m) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      m[k] /= peak;
      mh[k] /= peak;
      mi[k] /= peak;
    }
  }

  Signal out(n);
  for (std::size_t k = 0; k < n; ++k) {
    switch (s) {
      case Scheme::AmDsbWc: out[k] = cplx(1.0 + cfg.am_index * m[k], 0.0); break;
      case Scheme::AmDsbSc: out[k] = cplx(m[k], 0.0); break;
      case Scheme::AmSsbSc: out[k] = cplx(m[k], mh[k]); break;
      case Scheme::AmSsbWc: out[k] = cplx(1.0 + m[k], mh[k]); break;
      case Scheme::Fm: out[k] = std::polar(1.0, 2.0 * kPi * cfg.fm_deviation_hz * mi[k]); break;
      default: break;
    }
  }
  const double p = mean_power(out);
  if (!(p > 0.0) || !std::isfinite(p))
    throw DegenerateSignalError("modulate_analog: " + std::string(scheme_name(s)) + " frame has zero power");
  const double g = 1.0 / std::sqrt(p);
  for (cplx& z : out) z *= g;
  return out;
}

DigitalFrame generate_digital_frame(Scheme s, std::size_t frame_len, std::uint64_t seed, const ModemConfig& cfg) {
  require_digital(s, "generate_digital_frame");
  if (frame_len == 0) throw LengthError("generate_digital_frame: frame_len must be >= 1");
  const ConstellationSpec c = make_constellation(s, cfg.apsk);
  const std::size_t count = symbols_required(frame_len, cfg.pulse);

  DigitalFrame f;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
  f.indices.resize(count);
  f.symbols.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    f.indices[k] = pick(rng);
    f.symbols[k] = c.points[f.indices[k]];
  }

  const ShapedSignal shaped = pulse_shape(f.symbols, cfg.pulse, frame_len);
  const std::size_t cut = cfg.pulse.transient();
  f.samples.assign(shaped.samples.begin() + static_cast<std::ptrdiff_t>(cut),
                   shaped.samples.begin() + static_cast<std::ptrdiff_t>(cut + frame_len));
  const double p = mean_power(f.samples);
  if (!(p > 0.0)) throw DegenerateSignalError("generate_digital_frame: frame has zero power");
  const double g = 1.0 / std::sqrt(p);
  for (cplx& z : f.samples) z *= g;
  f.amplitude = shaped.gain * g;
  // Pulse k peaks at full-convolution index k * sps + (taps - 1) / 2.
  f.offset = cut - (cfg.pulse.tap_count() - 1) / 2;
  return f;
}

Signal generate_clean_frame(Scheme s, std::size_t frame_len, std::uint64_t seed, const ModemConfig& cfg) {
  if (is_digital(s)) return generate_digital_frame(s, frame_len, seed, cfg).samples;
  for (int attempt = 0; attempt < kAnalogAttempts; ++attempt) {
    const std::uint64_t draw = attempt == 0 ? seed : derive_seed(seed, {static_cast<std::uint64_t>(attempt)});
    try {
      return modulate_analog(s, cfg.analog, frame_len, draw);
    } catch (const DegenerateSignalError&) {
      if (attempt + 1 == kAnalogAttempts) throw;
    }
  }
  throw DegenerateSignalError("generate_clean_frame: no usable draw");
}

double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const cplx& z : x) acc += std::norm(z);
  return acc / static_cast<double>(x.size());
}

}  // namespace chainnet::modem
