#include "chainnet/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "chainnet/errors.hpp"

namespace chainnet::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& field, const std::string& value, const std::string& want) {
  throw ConfigError("config field " + field + ": '" + value + "' is not " + want);
}

std::uint64_t to_u64(const std::string& field, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (v.empty() || r.ec != std::errc() || r.ptr != end) bad(field, v, "a non-negative integer");
  return x;
}

std::size_t to_size(const std::string& field, const std::string& v) { return static_cast<std::size_t>(to_u64(field, v)); }

std::uint32_t to_u32(const std::string& field, const std::string& v) {
  const std::uint64_t x = to_u64(field, v);
  if (x > std::numeric_limits<std::uint32_t>::max()) bad(field, v, "a 32-bit integer");
  return static_cast<std::uint32_t>(x);
}

double to_real(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) bad(field, v, "a finite number");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad(field, v, "a number");
  }
}

bool to_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(field, v, "a boolean (true/false)");
}

std::vector<double> to_reals(const std::string& field, const std::string& v) {
  std::vector<double> out;
  for (const std::string& s : split_list(v)) out.push_back(to_real(field, s));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& field, const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& s : split_list(v)) out.push_back(to_size(field, s));
  if (out.empty()) bad(field, v, "a non-empty list");
  return out;
}

template <class C>
std::string join(const C& c) {
  std::ostringstream o;
  o.precision(17);
  bool first = true;
  for (const auto& x : c) {
    o << (first ? "" : ",") << x;
    first = false;
  }
  return o.str();
}

std::string real_str(double x) {
  std::ostringstream o;
  o.precision(17);
  o << x;
  return o.str();
}

std::vector<modem::Scheme> to_schemes(const std::string& field, const std::string& v) {
  if (v == "all") return {modem::all_schemes().begin(), modem::all_schemes().end()};
  std::vector<modem::Scheme> out;
  for (const std::string& s : split_list(v)) {
    const auto sch = modem::parse_scheme(s);
    if (!sch) bad(field, s, "a modulation name (e.g. 16QAM, FM) or 'all'");
    out.push_back(*sch);
  }
  if (out.empty()) bad(field, v, "a non-empty scheme list");
  return out;
}

std::string schemes_str(const std::vector<modem::Scheme>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::string(modem::scheme_name(s[i]));
  return out;
}

std::vector<std::int8_t> to_snrs(const std::string& field, const std::string& v) {
  std::vector<std::int8_t> out;
  if (v == "full") {
    for (int s = -20; s <= 20; s += 2) out.push_back(static_cast<std::int8_t>(s));
    return out;
  }
  for (const std::string& s : split_list(v)) {
    if (s == "clean") {
      out.push_back(dataset::kCleanSnr);
      continue;
    }
    int x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || x < -20 || x > 20)
      bad(field, s, "an SNR in dB between -20 and 20, or 'clean'");
    out.push_back(static_cast<std::int8_t>(x));
  }
  if (out.empty()) bad(field, v, "a non-empty SNR list");
  return out;
}

std::string snrs_str(const std::vector<std::int8_t>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + (s[i] == dataset::kCleanSnr ? std::string("clean") : std::to_string(int(s[i])));
  return out;
}

struct Field {
  const char* name;
  std::function<void(AppConfig&, const std::string& field, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

#define CN_SIZE(NAME, EXPR)                                                                       \
  Field {                                                                                         \
    NAME, [](AppConfig& c, const std::string& f, const std::string& v) { c.EXPR = to_size(f, v); }, \
        [](const AppConfig& c) { return std::to_string(c.EXPR); }                                \
  }
#define CN_U64(NAME, EXPR)                                                                       \
  Field {                                                                                        \
    NAME, [](AppConfig& c, const std::string& f, const std::string& v) { c.EXPR = to_u64(f, v); }, \
        [](const AppConfig& c) { return std::to_string(c.EXPR); }                               \
  }
#define CN_REAL(NAME, EXPR)                                                                       \
  Field {                                                                                         \
    NAME, [](AppConfig& c, const std::string& f, const std::string& v) { c.EXPR = to_real(f, v); }, \
        [](const AppConfig& c) { return real_str(c.EXPR); }                                       \
  }
#define CN_BOOL(NAME, EXPR)                                                                       \
  Field {                                                                                         \
    NAME, [](AppConfig& c, const std::string& f, const std::string& v) { c.EXPR = to_bool(f, v); }, \
        [](const AppConfig& c) { return std::string(c.EXPR ? "true" : "false"); }                \
  }
#define CN_PATH(NAME, EXPR)                                                                     \
  Field {                                                                                       \
    NAME, [](AppConfig& c, const std::string&, const std::string& v) { c.EXPR = v; },           \
        [](const AppConfig& c) { return c.EXPR.string(); }                                      \
  }
#define CN_REALS(NAME, EXPR)                                                                       \
  Field {                                                                                          \
    NAME, [](AppConfig& c, const std::string& f, const std::string& v) { c.EXPR = to_reals(f, v); }, \
        [](const AppConfig& c) { return join(c.EXPR); }                                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CN_SIZE("network.signal_length", network.signal_length),
      CN_SIZE("network.kernel_count", network.kernel_count),
      CN_SIZE("network.class_count", network.class_count),
      CN_SIZE("network.block_count", network.block_count),
      CN_SIZE("network.fc_width", network.fc_width),
      CN_REAL("network.dropout_ratio", network.dropout_ratio),
      CN_U64("network.seed", network.seed),
      CN_BOOL("network.zero_init_rescale", network.zero_init_rescale),

      Field{"dataset.frame_len",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.dataset.frame_len = to_u32(f, v); },
            [](const AppConfig& c) { return std::to_string(c.dataset.frame_len); }},
      Field{"dataset.schemes",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.dataset.schemes = to_schemes(f, v); },
            [](const AppConfig& c) { return schemes_str(c.dataset.schemes); }},
      Field{"dataset.snrs_db",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.dataset.snrs_db = to_snrs(f, v); },
            [](const AppConfig& c) { return snrs_str(c.dataset.snrs_db); }},
      Field{"dataset.frames_per_cell",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.dataset.frames_per_cell = to_u32(f, v); },
            [](const AppConfig& c) { return std::to_string(c.dataset.frames_per_cell); }},
      Field{"dataset.scenario",
            [](AppConfig& c, const std::string& f, const std::string& v) {
              const auto s = channel::parse_scenario(v);
              if (!s) bad(f, v, "one of none, flat, epa");
              c.dataset.scenario = *s;
            },
            [](const AppConfig& c) { return std::string(channel::scenario_name(c.dataset.scenario)); }},
      CN_REAL("dataset.max_doppler_hz", dataset.max_doppler_hz),
      CN_REAL("dataset.sample_rate_hz", dataset.sample_rate_hz),
      CN_U64("dataset.seed", dataset.master_seed),

      CN_SIZE("modem.samples_per_symbol", modem.pulse.samples_per_symbol),
      CN_REAL("modem.rolloff", modem.pulse.rolloff),
      CN_SIZE("modem.span", modem.pulse.span),
      CN_REAL("modem.carrier_hz", modem.analog.carrier_hz),
      CN_REAL("modem.sample_rate_hz", modem.analog.sample_rate_hz),
      CN_SIZE("modem.tone_count", modem.analog.tone_count),
      CN_REAL("modem.tone_min_hz", modem.analog.tone_min_hz),
      CN_REAL("modem.tone_max_hz", modem.analog.tone_max_hz),
      CN_REAL("modem.am_index", modem.analog.am_index),
      CN_REAL("modem.fm_deviation_hz", modem.analog.fm_deviation_hz),
      CN_REALS("modem.apsk16_ratios", modem.apsk.apsk16),
      CN_REALS("modem.apsk32_ratios", modem.apsk.apsk32),
      CN_REALS("modem.apsk64_ratios", modem.apsk.apsk64),
      CN_REALS("modem.apsk128_ratios", modem.apsk.apsk128),

      CN_REAL("split.train", split.train),
      CN_REAL("split.val", split.val),
      CN_REAL("split.test", split.test),
      CN_U64("split.seed", split.seed),

      CN_SIZE("train.epochs", train.epochs),
      CN_SIZE("train.batch_size", train.batch_size),
      CN_SIZE("train.micro_batch", train.micro_batch),
      CN_REAL("train.learning_rate", train.learning_rate),
      CN_REAL("train.momentum", train.momentum),
      CN_U64("train.seed", train.seed),
      CN_SIZE("train.checkpoint_every", train.checkpoint_every),
      CN_BOOL("train.step_decay", train.step_decay),
      CN_SIZE("train.decay_epoch", train.decay_epoch),
      CN_REAL("train.decay_factor", train.decay_factor),

      CN_PATH("paths.data_dir", paths.data_dir),
      CN_PATH("paths.dataset", paths.dataset),
      CN_PATH("paths.checkpoint", paths.checkpoint),

      Field{"suite.lengths",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.suite_lengths = to_sizes(f, v); },
            [](const AppConfig& c) { return join(c.suite_lengths); }},
      Field{"suite.kernels",
            [](AppConfig& c, const std::string& f, const std::string& v) { c.suite_kernels = to_sizes(f, v); },
            [](const AppConfig& c) { return join(c.suite_kernels); }},

      Field{"eval.split",
            [](AppConfig& c, const std::string& f, const std::string& v) {
              if (v != "train" && v != "val" && v != "test" && v != "all") bad(f, v, "one of train, val, test, all");
              c.eval_split = v;
            },
            [](const AppConfig& c) { return c.eval_split; }},
      Field{"runtime.simd",
            [](AppConfig& c, const std::string& f, const std::string& v) {
              if (v != "auto" && v != "scalar" && v != "avx2") bad(f, v, "one of auto, scalar, avx2");
              c.simd = v;
            },
            [](const AppConfig& c) { return c.simd; }},
  };
  return table;
}

#undef CN_SIZE
#undef CN_U64
#undef CN_REAL
#undef CN_BOOL
#undef CN_PATH
#undef CN_REALS

}  // namespace

AppConfig default_config() {
  AppConfig c;
  c.dataset.schemes.assign(modem::all_schemes().begin(), modem::all_schemes().end());
  for (int s = -20; s <= 20; s += 2) c.dataset.snrs_db.push_back(static_cast<std::int8_t>(s));
  c.dataset.frames_per_cell = 100;
  c.dataset.scenario = channel::Scenario::Epa;
  return c;
}

void set_field(AppConfig& cfg, const std::string& field, const std::string& value) {
  for (const Field& f : fields()) {
    if (field == f.name) {
      f.set(cfg, field, value);
      return;
    }
  }
  throw ConfigError("unknown config field '" + field + "'");
}

void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed section header '" + t + "'");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + t + "'");
    if (section.empty()) throw ConfigError(where + ": key '" + trim(t.substr(0, eq)) + "' appears before any [section]");
    const std::string key = section + "." + trim(std::string_view(t).substr(0, eq));
    try {
      set_field(cfg, key, trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  AppConfig cfg = default_config();
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

void apply_override(AppConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  set_field(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const AppConfig& cfg) {
  std::ostringstream o;
  std::string section;
  for (const Field& f : fields()) {
    const std::string name = f.name;
    const auto dot = name.find('.');
    const std::string s = name.substr(0, dot);
    if (s != section) {
      o << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    o << name.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return o.str();
}

void set_all_seeds(AppConfig& cfg, std::uint64_t seed) {
  cfg.network.seed = seed;
  cfg.dataset.master_seed = seed;
  cfg.split.seed = seed;
  cfg.train.seed = seed;
}

void validate(const AppConfig& cfg) {
  cfg.network.validate();
  cfg.dataset.validate();
  cfg.modem.pulse.validate();
  cfg.modem.analog.validate();
  cfg.split.validate();
  cfg.train.validate();
  for (modem::Scheme s : cfg.dataset.schemes)
    if (modem::is_digital(s)) modem::make_constellation(s, cfg.modem.apsk);
}

std::string modem_text(const modem::ModemConfig& m) {
  AppConfig c;
  c.modem = m;
  std::ostringstream o;
  for (const Field& f : fields()) {
    const std::string name = f.name;
    if (name.rfind("modem.", 0) == 0) o << name << " = " << f.get(c) << '\n';
  }
  return o.str();
}

}  // namespace chainnet::cli
