#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace chainnet::modem {

using cplx = std::complex<double>;
using Signal = std::vector<cplx>;

// Labels are the ASCII order of the scheme names.
enum class Scheme : std::uint8_t {
  Apsk128 = 0,
  Qam128,
  Apsk16,
  Pam16,
  Qam16,
  Apsk32,
  Qam32,
  Apsk64,
  Qam64,
  AmDsbSc,
  AmDsbWc,
  AmSsbSc,
  AmSsbWc,
  Fm,
};

inline constexpr std::size_t kSchemeCount = 14;

const std::array<Scheme, kSchemeCount>& all_schemes();
std::string_view scheme_name(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view name);
bool is_digital(Scheme s);
inline std::uint8_t label_of(Scheme s) { return static_cast<std::uint8_t>(s); }

// points[i] is the symbol for bit pattern i.
struct ConstellationSpec {
  std::vector<cplx> points;
  unsigned bits_per_symbol = 0;

  std::size_t size() const { return points.size(); }
};

// Outer-to-inner radius ratios relative to the innermost ring.
struct ApskRadii {
  std::vector<double> apsk16{2.57};
  std::vector<double> apsk32{2.53, 4.30};
  std::vector<double> apsk64{2.4, 4.3, 7.0};
  std::vector<double> apsk128{2.0, 3.0, 4.0, 5.0};
};

ConstellationSpec make_constellation(Scheme s, const ApskRadii& radii = {});

// Index of the constellation point nearest to z.
std::size_t nearest_point(const ConstellationSpec& c, cplx z);

struct PulseShapeConfig {
  std::size_t samples_per_symbol = 8;
  double rolloff = 0.35;
  std::size_t span = 10;

  void validate() const;
  std::size_t tap_count() const { return span * samples_per_symbol + 1; }
  // Samples discarded at each end of the filtered sequence.
  std::size_t transient() const { return span * samples_per_symbol; }
};

// Root-raised-cosine taps, symmetric, scaled to unit energy.
std::vector<double> rrc_taps(const PulseShapeConfig& cfg);

// Symbols needed for `steady` transient-free samples.
std::size_t symbols_required(std::size_t steady, const PulseShapeConfig& cfg);

// samples = gain * (upsampled symbols convolved with rrc_taps), full
// convolution, with gain chosen for unit mean power.
struct ShapedSignal {
  Signal samples;
  double gain = 1.0;
};

// Throws LengthError when `symbols` cannot cover `steady` transient-free
// samples.
ShapedSignal pulse_shape(std::span<const cplx> symbols, const PulseShapeConfig& cfg, std::size_t steady = 1024);

struct AnalogSourceConfig {
  double carrier_hz = 5e6;
  double sample_rate_hz = 100e6;
  std::size_t tone_count = 8;
  double tone_min_hz = 300.0;
  double tone_max_hz = 5000.0;
  double am_index = 0.5;
  double fm_deviation_hz = 75e3;

  void validate() const;
};

// Unit mean power. Throws DegenerateSignalError for an all-zero output.
Signal modulate_analog(Scheme s, const AnalogSourceConfig& cfg, std::size_t n_samples, std::uint64_t seed);

struct ModemConfig {
  PulseShapeConfig pulse;
  AnalogSourceConfig analog;
  ApskRadii apsk;
};

// A digital frame plus what a receiver needs to check it. The pulse of
// symbol k peaks at frame sample k * sps - offset; samples / amplitude has
// unit-energy pulses.
struct DigitalFrame {
  Signal samples;
  std::vector<std::size_t> indices;
  Signal symbols;
  std::size_t offset = 0;
  double amplitude = 1.0;
};

DigitalFrame generate_digital_frame(Scheme s, std::size_t frame_len, std::uint64_t seed, const ModemConfig& cfg = {});

// Unit mean power; a pure function of (scheme, frame_len, seed, cfg).
// Degenerate analog draws are retried with derived seeds.
Signal generate_clean_frame(Scheme s, std::size_t frame_len, std::uint64_t seed, const ModemConfig& cfg = {});

double mean_power(std::span<const cplx> x);

}  // namespace chainnet::modem
