#include <doctest.h>

#include <fstream>
#include <sstream>

#include "chainnet/cli/cli.hpp"
#include "chainnet/cli/config.hpp"
#include "chainnet/errors.hpp"
#include "fixtures.hpp"

using namespace chainnet;
using namespace chainnet::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "chainnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A run configuration small enough for a unit test.
fs::path write_small_config(const fs::path& dir) {
  const fs::path p = dir / "small.cfg";
  std::ofstream(p) << "# tiny grid\n"
                      "[dataset]\n"
                      "frame_len = 128\n"
                      "schemes = FM, 16PAM, 16QAM\n"
                      "snrs_db = 0, 20\n"
                      "frames_per_cell = 10\n"
                      "scenario = none\n"
                      "[network]\n"
                      "signal_length = 128\n"
                      "kernel_count = 4\n"
                      "fc_width = 16\n"
                      "[train]\n"
                      "epochs = 2\n"
                      "batch_size = 8\n"
                      "[paths]\n"
                      "data_dir = " + (dir / "data").string() + "\n";
  return p;
}

}  // namespace

TEST_CASE("config text") {
  AppConfig cfg = default_config();
  apply_config_text(cfg, "[network]\nkernel_count = 16  # fewer\n\n[train]\nlearning_rate = 0.05\n", "t.cfg");
  CHECK(cfg.network.kernel_count == 16);
  CHECK(cfg.train.learning_rate == 0.05);

  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[network]\nkernel_count = -3\n", "t.cfg"),
                       doctest::Contains("t.cfg:2:"), ConfigError);
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "kernel_count = 3\n", "t.cfg"), doctest::Contains("t.cfg:1:"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[network\n", "t.cfg"), doctest::Contains("t.cfg:1:"), ConfigError);
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[network]\nwidth\n", "t.cfg"), doctest::Contains("t.cfg:2:"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[network]\ncolour = red\n", "t.cfg"),
                       doctest::Contains("network.colour"), ConfigError);

  apply_override(cfg, "dataset.schemes=16QAM,FM");
  CHECK(cfg.dataset.schemes == std::vector<modem::Scheme>{modem::Scheme::Qam16, modem::Scheme::Fm});
  apply_override(cfg, "dataset.snrs_db = full");
  CHECK(cfg.dataset.snrs_db.size() == 21);
  apply_override(cfg, "dataset.snrs_db = clean");
  CHECK(cfg.dataset.snrs_db == std::vector<std::int8_t>{dataset::kCleanSnr});
  CHECK_THROWS_AS(apply_override(cfg, "train.epochs"), ConfigError);
  AppConfig odd = cfg;
  apply_override(odd, "dataset.snrs_db=7");
  CHECK_THROWS_AS(validate(odd), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "dataset.snrs_db=30"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "dataset.schemes=8PSK"), ConfigError);
}

TEST_CASE("config dump round trip") {
  AppConfig cfg = default_config();
  set_all_seeds(cfg, 77);
  apply_override(cfg, "network.kernel_count=32");
  AppConfig back = default_config();
  apply_config_text(back, dump_config(cfg), "dump");
  CHECK(dump_config(back) == dump_config(cfg));
  CHECK(back.network.seed == cfg.network.seed);
  CHECK(back.dataset.master_seed == cfg.dataset.master_seed);
  CHECK_NOTHROW(validate(cfg));
  AppConfig bad = cfg;
  bad.split.test = 0.9;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"--set", "network.colour=red", "inspect"}).code == kExitUsage);
  const Run s = run({"suite", "grid"});
  CHECK(s.code == kExitUsage);
  CHECK(s.err.find("grid") != std::string::npos);
  const Run m = run({"--config", "/nonexistent/x.cfg", "inspect"});
  CHECK(m.code != kExitOk);
  CHECK(m.err.find("/nonexistent/x.cfg") != std::string::npos);
}

TEST_CASE("inspect prints the shape trace") {
  const Run r = run({"inspect"});
  REQUIRE(r.code == kExitOk);
  const auto last = r.out.find_last_not_of('\n');
  CHECK(r.out.substr(0, last + 1).size() >= 10);
  CHECK(r.out.substr(r.out.rfind('\n', last) + 1, last - r.out.rfind('\n', last)).find("1 x 1 x 14") !=
        std::string::npos);
  CHECK(r.out.find("232974") != std::string::npos);
}

TEST_CASE("gen, train, eval") {
  oracle::TempDir dir("chainnet_cli_test");
  const std::string cfg = write_small_config(dir.path).string();
  const fs::path data = dir.path / "data" / "none.cnds";

  const Run missing = run({"--config", cfg, "train"});
  CHECK(missing.code == kExitRuntime);
  CHECK(missing.err.find(data.string()) != std::string::npos);
  CHECK(missing.err.find("chainnet gen") != std::string::npos);

  REQUIRE(run({"--config", cfg, "--quiet", "gen"}).code == kExitOk);
  CHECK(fs::exists(data));
  CHECK(slurp(fs::path(data.string() + ".manifest")).find("checksum_fnv1a64 = ") != std::string::npos);
  const std::string first = slurp(data);
  const Run again = run({"--config", cfg, "gen"});
  CHECK(again.code == kExitOk);
  CHECK(again.out.find("up to date") != std::string::npos);

  const Run longer = run({"--config", cfg, "--set", "network.signal_length=256", "train"});
  CHECK(longer.code == kExitUsage);
  CHECK(longer.err.find("256") != std::string::npos);
  CHECK(longer.err.find("128") != std::string::npos);

  const fs::path out_a = dir.path / "a", out_b = dir.path / "b";
  REQUIRE(run({"--config", cfg, "--quiet", "--out", out_a.string(), "train"}).code == kExitOk);
  REQUIRE(run({"--config", cfg, "--quiet", "--out", out_b.string(), "train"}).code == kExitOk);
  CHECK(slurp(out_a / "best.ckpt") == slurp(out_b / "best.ckpt"));
  CHECK(slurp(out_a / "history.csv") == slurp(out_b / "history.csv"));
  CHECK(fs::exists(out_a / "confusion_snr_20.csv"));

  const Run ev = run({"--config", cfg, "--quiet", "--out", out_a.string(), "eval", (out_a / "best.ckpt").string()});
  REQUIRE(ev.code == kExitOk);
  const std::string csv = slurp(out_a / "eval.csv");
  CHECK(csv.rfind("split,snr_db,frames,accuracy,loss\n", 0) == 0);
  CHECK(csv.find("test,all,") != std::string::npos);
  const Run nock = run({"--config", cfg, "eval", (dir.path / "nope.ckpt").string()});
  CHECK(nock.code == kExitRuntime);
  CHECK(nock.err.find("nope.ckpt") != std::string::npos);

  const Run insp = run({"inspect", data.string()});
  CHECK(insp.code == kExitOk);
  CHECK(insp.out.find("16QAM") != std::string::npos);

  // --seed reseeds everything: a different file, reproducible by itself.
  const fs::path s1 = dir.path / "s1", s2 = dir.path / "s2";
  REQUIRE(run({"--config", cfg, "--quiet", "--seed", "9", "--set", "paths.data_dir=" + s1.string(), "gen"}).code ==
          kExitOk);
  REQUIRE(run({"--config", cfg, "--quiet", "--seed", "9", "--set", "paths.data_dir=" + s2.string(), "gen"}).code ==
          kExitOk);
  CHECK(slurp(s1 / "none.cnds") == slurp(s2 / "none.cnds"));
  CHECK(slurp(s1 / "none.cnds") != first);
}
