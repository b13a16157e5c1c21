#include "chainnet/cli/cli.hpp"

#include <CLI11.hpp>

#include <array>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "chainnet/cli/config.hpp"
#include "chainnet/errors.hpp"
#include "chainnet/simd/kernels.hpp"

namespace chainnet::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config = "default";
  std::vector<std::string> overrides;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
  std::vector<std::string> positional;
  std::string suite;
};

struct Context {
  AppConfig cfg;
  Options opt;
  std::ostream& out;
  std::ostream& err;

  void say(const std::string& s) const {
    if (!opt.quiet) out << s << std::endl;
  }
};

AppConfig resolve_config(const Options& o) {
  AppConfig cfg = o.config == "default" ? default_config() : load_config(o.config);
  for (const std::string& s : o.overrides) apply_override(cfg, s);
  if (o.seed_given) set_all_seeds(cfg, o.seed);
  validate(cfg);
  return cfg;
}

void apply_simd(const AppConfig& cfg) {
  if (cfg.simd == "scalar") simd::set_backend(simd::Backend::Scalar);
  if (cfg.simd == "avx2") simd::set_backend(simd::Backend::Avx2);
}

fs::path out_dir(const Context& c, const fs::path& fallback) {
  return c.opt.out.empty() ? fallback : fs::path(c.opt.out);
}

fs::path dataset_file(const Context& c, std::size_t positional_index) {
  fs::path p;
  if (c.opt.positional.size() > positional_index) p = c.opt.positional[positional_index];
  else if (!c.cfg.paths.dataset.empty()) p = c.cfg.paths.dataset;
  else p = trainer::dataset_path(c.cfg.paths.data_dir, c.cfg.dataset.scenario);
  if (!fs::exists(p)) throw IoError("dataset " + p.string() + " not found; generate it with: chainnet gen --config " + c.opt.config);
  return p;
}

std::string sidecar_body(const AppConfig& cfg) { return dataset::manifest_text(cfg.dataset) + modem_text(cfg.modem); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << x;
  return o.str();
}

std::string snr_str(std::int8_t s) {
  return s == dataset::kCleanSnr ? std::string("clean") : std::to_string(static_cast<int>(s));
}

void print_report(const Context& c, const trainer::EvalReport& r) {
  if (c.opt.quiet) return;
  c.out << "snr_db  frames  accuracy  loss\n";
  for (const trainer::SnrBucket& b : r.buckets)
    c.out << std::setw(6) << snr_str(b.snr_db) << "  " << std::setw(6) << b.total << "  " << fmt(b.accuracy())
          << "    " << fmt(b.loss) << '\n';
  c.out << "pooled accuracy " << fmt(r.pooled_accuracy()) << ", mean over SNR " << fmt(r.mean_snr_accuracy())
        << ", loss " << fmt(r.loss) << std::endl;
}

std::vector<std::string> class_names(const dataset::DatasetManifest& m) {
  std::vector<std::string> names;
  for (modem::Scheme s : m.schemes) names.emplace_back(modem::scheme_name(s));
  return names;
}

// Rejects a network that needs more samples than the dataset stores.
void check_length(const model::NetworkConfig& net, const dataset::DatasetManifest& m, const fs::path& path) {
  if (net.signal_length > m.frame_len)
    throw ConfigError("network.signal_length " + std::to_string(net.signal_length) + " exceeds the frame length " +
                      std::to_string(m.frame_len) + " of dataset " + path.string());
}

std::vector<std::size_t> pick_split(const dataset::Splits& s, const std::string& which, std::size_t n) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

int cmd_gen(Context& c) {
  const fs::path dir = out_dir(c, c.cfg.paths.data_dir);
  fs::create_directories(dir);
  const fs::path path = trainer::dataset_path(dir, c.cfg.dataset.scenario);
  fs::path side = path;
  side += ".manifest";
  const std::string body = sidecar_body(c.cfg);

  if (fs::exists(path) && fs::exists(side)) {
    const std::string text = read_text(side);
    const std::string key = "checksum_fnv1a64 = ";
    const auto at = text.rfind(key);
    if (at != std::string::npos && text.substr(0, at) == body) {
      std::ostringstream want;
      want << std::hex << std::setw(16) << std::setfill('0') << dataset::file_checksum(path);
      if (text.substr(at + key.size(), 16) == want.str()) {
        c.out << "up to date: " << path.string() << std::endl;
        return kExitOk;
      }
    }
  }

  const std::uint64_t total = c.cfg.dataset.record_count();
  c.say("generating " + std::to_string(total) + " records (" + std::string(channel::scenario_name(c.cfg.dataset.scenario)) +
        ") into " + path.string());
  fs::path partial = path;
  partial += ".partial";
  std::uint64_t next_report = total / 10;
  dataset::generate_dataset(c.cfg.dataset, partial, c.cfg.modem, [&](std::uint64_t done, std::uint64_t all) {
    if (!c.opt.quiet && done >= next_report && done < all) {
      c.out << "  " << done << " / " << all << std::endl;
      next_report += std::max<std::uint64_t>(all / 10, 1);
    }
  });
  fs::rename(partial, path);
  const std::uint64_t sum = dataset::file_checksum(path);
  std::ofstream s(side, std::ios::trunc);
  s << body << "checksum_fnv1a64 = " << std::hex << std::setw(16) << std::setfill('0') << sum << '\n';
  if (!s) throw IoError("failed writing " + side.string());
  c.out << "wrote " << total << " records to " << path.string() << std::endl;
  return kExitOk;
}

int cmd_train(Context& c) {
  const fs::path data_path = dataset_file(c, 0);
  const dataset::DatasetManifest m = dataset::read_dataset_manifest(data_path);
  check_length(c.cfg.network, m, data_path);
  model::NetworkConfig ncfg = c.cfg.network;
  ncfg.class_count = m.schemes.size();

  const fs::path dir = out_dir(c, "out");
  fs::create_directories(dir);
  const dataset::Dataset data = dataset::load_dataset(data_path);
  const dataset::Splits splits = dataset::split_dataset(m, c.cfg.split);
  model::ChainNet<float> net(ncfg);
  c.say("training " + std::to_string(net.parameter_count()) + " parameters on " + std::to_string(splits.train.size()) +
        " frames from " + data_path.string());

  trainer::TrainHooks hooks;
  if (c.cfg.train.checkpoint_every) {
    hooks.checkpoint_dir = dir / "checkpoints";
    fs::create_directories(hooks.checkpoint_dir);
  }
  hooks.on_epoch = [&](const trainer::EpochRecord& e) {
    std::string line = "epoch " + std::to_string(e.epoch) + "  loss " + fmt(e.train_loss) + "  train acc " +
                       fmt(e.train_accuracy);
    if (e.val_accuracy) line += "  val acc " + fmt(*e.val_accuracy) + "  val loss " + fmt(*e.val_loss);
    c.say(line);
  };
  const trainer::TrainResult tr = trainer::train(net, data, splits, c.cfg.train, hooks);

  const fs::path ckpt = dir / "best.ckpt";
  std::map<std::string, std::string> meta{{"dataset", data_path.string()}, {"epoch", std::to_string(tr.best_epoch)}};
  if (tr.best_val_accuracy) meta["val_accuracy"] = fmt(*tr.best_val_accuracy, 6);
  model::save_checkpoint(ckpt.string(), net, meta);

  if (!splits.test.empty()) {
    const trainer::EvalReport rep = trainer::evaluate(net, data, splits.test);
    trainer::write_history_csv(dir / "history.csv", tr.history, &rep, tr.best_epoch);
    trainer::write_confusion_csvs(dir, rep, class_names(m));
    c.say("test split, epoch " + std::to_string(tr.best_epoch) + " parameters:");
    print_report(c, rep);
  } else {
    trainer::write_history_csv(dir / "history.csv", tr.history);
  }
  c.out << "checkpoint: " << ckpt.string() << std::endl;
  return kExitOk;
}

int cmd_eval(Context& c) {
  fs::path ckpt = c.cfg.paths.checkpoint;
  if (!c.opt.positional.empty()) ckpt = c.opt.positional[0];
  if (ckpt.empty()) ckpt = out_dir(c, "out") / "best.ckpt";
  if (!fs::exists(ckpt)) throw IoError("checkpoint " + ckpt.string() + " not found");
  const fs::path data_path = dataset_file(c, 1);
  const model::CheckpointHeader h = model::read_checkpoint_header(ckpt.string());
  const dataset::DatasetManifest m = dataset::read_dataset_manifest(data_path);
  check_length(h.config, m, data_path);
  const model::ChainNet<float> net = model::load_checkpoint<float>(ckpt.string());
  const dataset::Dataset data = dataset::load_dataset(data_path);
  const dataset::Splits splits = dataset::split_dataset(m, c.cfg.split);
  const std::vector<std::size_t> idx = pick_split(splits, c.cfg.eval_split, data.size());
  if (idx.empty()) throw ConfigError("the " + c.cfg.eval_split + " split of " + data_path.string() + " is empty");
  const trainer::EvalReport rep = trainer::evaluate(net, data, idx);

  const fs::path dir = out_dir(c, "out");
  fs::create_directories(dir);
  std::ofstream csv(dir / "eval.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot open " + (dir / "eval.csv").string() + " for writing");
  csv << std::setprecision(8) << "split,snr_db,frames,accuracy,loss\n";
  for (const trainer::SnrBucket& b : rep.buckets)
    csv << c.cfg.eval_split << ',' << snr_str(b.snr_db) << ',' << b.total << ',' << b.accuracy() << ',' << b.loss << '\n';
  csv << c.cfg.eval_split << ",all," << rep.total << ',' << rep.pooled_accuracy() << ',' << rep.loss << '\n';
  trainer::write_confusion_csvs(dir, rep, class_names(m));
  c.say("evaluated " + ckpt.string() + " on the " + c.cfg.eval_split + " split of " + data_path.string());
  print_report(c, rep);
  return kExitOk;
}

int cmd_suite(Context& c) {
  const auto suite = trainer::parse_suite(c.opt.suite);
  if (!suite) throw UsageError("unknown suite '" + c.opt.suite + "' (expected robustness, length-sweep or kernel-sweep)");
  trainer::SuiteConfig s;
  s.data_dir = c.cfg.paths.data_dir;
  s.out_dir = out_dir(c, "out");
  s.network = c.cfg.network;
  s.train = c.cfg.train;
  s.split = c.cfg.split;
  s.lengths = c.cfg.suite_lengths;
  s.kernels = c.cfg.suite_kernels;
  s.gen_hint = "chainnet gen --config " + c.opt.config;
  s.log = [&](const std::string& m) { c.say(m); };
  for (std::size_t l : s.lengths) {
    if (c.opt.suite != "length-sweep") break;
    const fs::path p = trainer::dataset_path(s.data_dir, channel::Scenario::Epa);
    if (fs::exists(p)) check_length({.signal_length = l}, dataset::read_dataset_manifest(p), p);
  }
  const trainer::SuiteResult r = trainer::run_experiment_suite(*suite, s);
  for (const trainer::SuitePoint& p : r.points)
    c.say(p.label + ": pooled " + fmt(p.report.pooled_accuracy()) + ", mean over SNR " +
          fmt(p.report.mean_snr_accuracy()));
  c.out << "wrote " << r.csv.string() << std::endl;
  return kExitOk;
}

void print_network(const Context& c, const model::NetworkConfig& ncfg) {
  const model::ChainNet<float> net(ncfg);
  c.out << "network: signal_length " << ncfg.signal_length << ", kernel_count " << ncfg.kernel_count
        << ", class_count " << ncfg.class_count << ", blocks " << ncfg.block_count << '\n';
  c.out << "parameters: " << model::count_parameters(ncfg) << '\n';
  c.out << "shape trace:\n" << model::format_shape_trace(net.shape_trace());
}

int cmd_inspect(Context& c) {
  if (c.opt.positional.empty()) {
    c.out << "dataset manifest:\n" << dataset::manifest_text(c.cfg.dataset);
    c.out << "file_bytes = " << c.cfg.dataset.file_bytes() << "\n\n";
    print_network(c, c.cfg.network);
    return kExitOk;
  }
  const fs::path p = c.opt.positional[0];
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in && magic == std::array<char, 4>{'C', 'N', 'D', 'S'}) {
    const dataset::Dataset d = dataset::load_dataset(p);
    c.out << dataset::manifest_text(d.manifest());
    c.out << "file_bytes = " << fs::file_size(p) << "\nfooter = ok\n";
    return kExitOk;
  }
  const model::CheckpointHeader h = model::read_checkpoint_header(p.string());
  const model::ChainNet<float> net = model::load_checkpoint<float>(p.string());
  for (const auto& [k, v] : h.metadata) c.out << k << " = " << v << '\n';
  c.out << "weights_fnv1a64 = " << std::hex << net.checksum() << std::dec << '\n';
  print_network(c, h.config);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chain-Net modulation classifier: dataset generation, training, evaluation", "chainnet"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Config file, or 'default'");
  app.add_option("--set", o.overrides, "Override a field: section.key=value (repeatable)")->take_all();
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--seed", o.seed, "Seed for dataset, network, split and training");
  app.add_flag("--quiet", o.quiet, "Only print results");

  CLI::App* gen = app.add_subcommand("gen", "Generate the dataset described by the config");
  CLI::App* train = app.add_subcommand("train", "Train on a dataset and write best.ckpt");
  train->add_option("dataset", o.positional, "Dataset file (default: paths.dataset or <data_dir>/<scenario>.cnds)");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("files", o.positional, "CHECKPOINT [DATASET]")->expected(0, 2);
  CLI::App* suite = app.add_subcommand("suite", "Run an experiment suite");
  suite->add_option("name", o.suite, "robustness | length-sweep | kernel-sweep")->required();
  CLI::App* inspect = app.add_subcommand("inspect", "Describe a config, dataset or checkpoint");
  inspect->add_option("path", o.positional, "Dataset or checkpoint file")->expected(0, 1);
  for (CLI::App* s : {gen, train, eval, suite, inspect}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  o.seed_given = app.count("--seed") > 0;

  try {
    Context c{resolve_config(o), o, out, err};
    apply_simd(c.cfg);
    if (gen->parsed()) return cmd_gen(c);
    if (train->parsed()) return cmd_train(c);
    if (eval->parsed()) return cmd_eval(c);
    if (suite->parsed()) return cmd_suite(c);
    if (inspect->parsed()) return cmd_inspect(c);
    err << "error: no subcommand\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace chainnet::cli
