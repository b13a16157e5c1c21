#include <doctest.h>

#include <cmath>

#include "chainnet/channel/channel.hpp"
#include "chainnet/errors.hpp"
#include "channel_stats.hpp"

using namespace chainnet;
using namespace chainnet::channel;

TEST_CASE("EPA profile") {
  const auto epa = ChannelProfile::epa();
  std::vector<double> d = epa.delay_samples();
  CHECK(d == std::vector<double>{0, 3, 7, 9, 11, 19, 41});
  CHECK(epa.gains_db == std::vector<double>{0, -1, -2, -3, -8, -17.2, -20.8});
  CHECK(epa.guard_samples() == 42);
  ChannelProfile bad = epa;
  bad.gains_db.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = epa;
  bad.max_doppler_hz = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("degenerate single-tap channel") {
  const auto x = oracle::unit_power_signal(300, 1);
  SUBCASE("static fading is one complex gain") {
    const auto y = apply_multipath(x, ChannelProfile::single_tap(100e6, 0.0), 9);
    const cplx c = y[0] / x[0];
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - c * x[i]) < 1e-12);
    CHECK(std::abs(c) > 0);
    CHECK(y != apply_multipath(x, ChannelProfile::single_tap(100e6, 0.0), 10));
  }
  SUBCASE("unity fading is the identity") {
    ChannelProfile p = ChannelProfile::single_tap();
    p.unity_fading = true;
    CHECK(apply_multipath(x, p, 3) == x);
  }
  SUBCASE("flat fading with zero doppler") {
    const auto y = apply_flat_fading(x, 0.0, 4);
    const cplx c = y[0] / x[0];
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - c * x[i]) < 1e-12);
  }
  CHECK_THROWS_AS(apply_multipath(Signal{}, ChannelProfile::epa(), 1), LengthError);
}

TEST_CASE("unity-fading EPA is the tapped delay line") {
  ChannelProfile p = ChannelProfile::epa();
  p.unity_fading = true;
  Signal impulse(64, 0.0);
  impulse[0] = 1.0;
  const auto y = apply_multipath(impulse, p, 1);
  const auto amp = p.linear_amplitudes();
  const auto delay = p.delay_samples();
  Signal want(64, 0.0);
  for (std::size_t k = 0; k < amp.size(); ++k) want[static_cast<std::size_t>(delay[k])] += amp[k];
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(y[i] - want[i]) < 1e-12);
  CHECK(std::abs(amp[5] - std::pow(10.0, -17.2 / 20)) < 1e-15);
}

TEST_CASE("fractional delays interpolate linearly") {
  ChannelProfile p;
  p.delays_ns = {0.0, 25.0};  // 2.5 samples at 100 MHz
  p.gains_db = {-300.0, 0.0};
  p.unity_fading = true;
  Signal x(10);
  for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i * i);
  const auto y = apply_multipath(x, p, 1);
  CHECK(std::abs(y[0]) < 1e-12);
  CHECK(std::abs(y[2]) < 1e-12);
  CHECK(std::abs(y[5] - cplx(0.5 * (4 + 9))) < 1e-9);
}

TEST_CASE("EPA tap powers") {
  const auto db = oracle::epa_tap_powers_db(100000);
  const std::vector<double> want{0, -1, -2, -3, -8, -17.2, -20.8};
  for (std::size_t p = 0; p < 7; ++p) CHECK(std::abs(db[p] - want[p]) <= 0.3);
}

TEST_CASE("Rayleigh fading statistics") {
  CHECK(oracle::rayleigh_envelope_ks(100000) < 0.01);
  double ratio = 0;
  const auto x = oracle::unit_power_signal(256, 5);
  for (std::uint64_t s = 0; s < 4000; ++s) ratio += modem::mean_power(apply_flat_fading(x, 10.0, s));
  CHECK(std::abs(ratio / 4000 - 1.0) <= 0.05);
}

TEST_CASE("fading autocorrelation tracks J0") {
  // A low sample rate puts f_D * tau up to 0.5 within a short sequence.
  const double fs = 1000.0, fd = 10.0;
  const std::size_t lags = 51, runs = 4000;
  std::vector<cplx> r(lags, 0.0);
  for (std::uint64_t s = 0; s < runs; ++s) {
    const auto c = SosFading(fd, fs, s).generate(lags);
    for (std::size_t k = 0; k < lags; ++k) r[k] += c[k] * std::conj(c[0]);
  }
  for (std::size_t k = 0; k < lags; ++k) {
    const double want = std::cyl_bessel_j(0.0, 2 * M_PI * fd * static_cast<double>(k) / fs);
    CHECK(std::abs(r[k].real() / runs - want) <= 0.05);
  }
}

TEST_CASE("AWGN") {
  const auto x = oracle::unit_power_signal(1000, 2);
  CHECK(add_awgn(x, {}) == x);
  const auto at0 = oracle::measure_awgn(1'000'000, 0.0, 3);
  CHECK(std::abs(at0.noise_power - 1.0) <= 0.02);
  for (double snr : {-20.0, -10.0, 0.0, 10.0, 20.0}) {
    const auto m = oracle::measure_awgn(1'000'000, snr, 4);
    CHECK(std::abs(m.snr_db - snr) <= 0.1);
    CHECK(std::abs(m.iq_correlation) < 0.01);
  }
  CHECK_THROWS_AS(add_awgn(Signal(8, 0.0), {0.0, 1}), DegenerateSignalError);
  CHECK(add_awgn(x, {5.0, 7}) == add_awgn(x, {5.0, 7}));
  CHECK(add_awgn(x, {5.0, 7}) != add_awgn(x, {5.0, 8}));
}

TEST_CASE("impairment pipeline is deterministic") {
  const auto x = oracle::unit_power_signal(512, 6);
  const auto p = ChannelProfile::epa();
  CHECK(add_awgn(apply_multipath(x, p, 11), {3.0, 12}) == add_awgn(apply_multipath(x, p, 11), {3.0, 12}));
  CHECK(apply_multipath(x, p, 11) != apply_multipath(x, p, 13));
}

TEST_CASE("scenario names") {
  for (Scenario s : {Scenario::None, Scenario::Flat, Scenario::Epa}) CHECK(parse_scenario(scenario_name(s)) == s);
  CHECK_FALSE(parse_scenario("rician").has_value());
}
