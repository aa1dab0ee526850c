#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nuq/config.hpp"
#include "nuq/errors.hpp"
#include "nuq/training.hpp"

using namespace nuq;
namespace fs = std::filesystem;

#ifndef NUQ_CLI_PATH
#define NUQ_CLI_PATH "nuq"
#endif

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(NUQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("nuq_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parses key=value text with comments and round-trips") {
  Config c = Config::parse("# comment\nalpha=1\n\nbeta = two words \n");
  CHECK(c.get_int("alpha") == 1);
  CHECK(c.get_str("beta") == "two words");
  CHECK(Config::parse(c.serialize()).serialize() == c.serialize());

  CHECK_THROWS_AS(Config::parse("novalue\n"), ConfigError);
  CHECK_THROWS_AS(c.get_int("beta"), ConfigError);
  CHECK_THROWS_AS(c.get_str("missing"), ConfigError);
  CHECK_THROWS_WITH_AS(c.check_known_keys({"alpha"}), doctest::Contains("beta"), ConfigError);
}

TEST_CASE("typed getters parse booleans and numbers strictly") {
  Config c = Config::parse("flag=true\noff=0\nnum=2.5\nbig=123456789012\n");
  CHECK(c.get_bool("flag"));
  CHECK_FALSE(c.get_bool("off"));
  CHECK(c.get_double("num") == 2.5);
  CHECK(c.get_int("big") == 123456789012LL);
  CHECK(c.get_bool("absent", true));
  CHECK_THROWS_AS(c.get_bool("num"), ConfigError);
}

TEST_CASE("train config round-trips through serialization unchanged") {
  TrainConfig def;
  Config c = def.to_config();
  std::string text = c.serialize();
  TrainConfig back = TrainConfig::from_config(Config::parse(text));
  CHECK(back.to_config().serialize() == text);
  // Every accepted key appears in the dump.
  for (const std::string& key : TrainConfig::config_keys()) CHECK(c.has(key));
}

TEST_CASE("train config validation names violations") {
  Config c;
  c.set("lr", "0");
  CHECK_THROWS_WITH_AS(TrainConfig::from_config(c), doctest::Contains("lr"), ConfigError);
  Config c2;
  c2.set("variant", "banana");
  CHECK_THROWS_WITH_AS(TrainConfig::from_config(c2), doctest::Contains("variant"), ConfigError);
  Config c3;
  c3.set("train_len", "5");
  c3.set("F", "5");
  CHECK_THROWS_AS(TrainConfig::from_config(c3), ConfigError);
  Config c4;
  c4.set("not_a_key", "1");
  CHECK_THROWS_WITH_AS(TrainConfig::from_config(c4), doctest::Contains("not_a_key"), ConfigError);
}

TEST_CASE("cli: invalid synthesis config exits with status 2 naming the field") {
  fs::path dir = temp_dir("bad_canvas");
  int code = run_cli("make-data --set canvas=20 --set digit_size=28 --set out_dir=" +
                     (dir / "ds").string());
  CHECK(code == 2);
}

TEST_CASE("cli: unknown config keys are rejected with status 2") {
  CHECK(run_cli("make-data --set not_a_key=1") == 2);
  CHECK(run_cli("train --set bogus=1") == 2);
}

TEST_CASE("cli: make-data produces the documented layout, idempotent per seed") {
  fs::path dir = temp_dir("mkdata");
  std::string base = "make-data --set num_videos=2 --set seq_len=5 --set canvas=16 "
                     "--set digit_size=8 --set speed=2 ";
  CHECK(run_cli(base + "--set seed=5 --set out_dir=" + (dir / "a").string()) == 0);
  CHECK(fs::exists(dir / "a" / "manifest.txt"));
  CHECK(fs::exists(dir / "a" / "video_00000" / "frame_0000.pgm"));
  CHECK(fs::exists(dir / "a" / "bounces.csv"));

  // Identical seed reruns byte-identically; a different seed changes content
  // but not shapes.
  CHECK(run_cli(base + "--set seed=5 --set out_dir=" + (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "video_00000" / "frame_0000.pgm") ==
        slurp(dir / "b" / "video_00000" / "frame_0000.pgm"));
  CHECK(run_cli(base + "--set seed=6 --set out_dir=" + (dir / "c").string()) == 0);
  CHECK(slurp(dir / "a" / "bounces.csv") != slurp(dir / "c" / "bounces.csv"));
  Config ma = Config::load((dir / "a" / "manifest.txt").string());
  Config mc = Config::load((dir / "c" / "manifest.txt").string());
  CHECK(ma.get_int("H") == mc.get_int("H"));
}

TEST_CASE("cli: dump-config output round-trips through parse unchanged") {
  fs::path dir = temp_dir("dump");
  fs::path out = dir / "train.cfg";
  CHECK(run_cli("train --dump-config " + out.string()) == 0);
  std::string text = slurp(out);
  CHECK(Config::parse(text).serialize() == text);

  fs::path out2 = dir / "mkdata.cfg";
  CHECK(run_cli("make-data --dump-config " + out2.string()) == 0);
  std::string text2 = slurp(out2);
  CHECK(Config::parse(text2).serialize() == text2);
}

TEST_CASE("cli: generate requires an existing checkpoint (status 2)") {
  CHECK(run_cli("generate --set ckpt=/nonexistent.bin --set data_dir=/nonexistent") == 2);
}

TEST_CASE("cli: end-to-end train/generate/eval/report pipeline") {
  fs::path dir = temp_dir("pipeline");
  std::string mk = "make-data --set num_videos=4 --set seq_len=8 --set canvas=16 "
                   "--set digit_size=8 --set speed=2 --set seed=9 --set out_dir=";
  REQUIRE(run_cli(mk + (dir / "train_ds").string()) == 0);
  REQUIRE(run_cli(mk + (dir / "test_ds").string() + " --set seed=10 --set split=test") == 0);

  std::string train_args =
      "train --set canvas=16 --set levels=2 --set base_width=4 --set g=4 --set hidden=16 "
      "--set var_hidden=8 --set batch_size=2 --set epochs=1 --set F=2 --set train_len=6 "
      "--set predict_len=4 --set val_videos=2 --set val_futures=2 --set seed=3 "
      "--set data_dir=" + (dir / "train_ds").string() +
      " --set val_dir=" + (dir / "test_ds").string() +
      " --set ckpt_dir=" + (dir / "ckpt").string() +
      " --set log_path=" + (dir / "run_log.csv").string();
  REQUIRE(run_cli(train_args) == 0);
  fs::path ckpt = dir / "ckpt" / "ckpt_last.bin";
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(dir / "run_log.csv"));

  // epochs=0 is a validation-only pass and writes no checkpoint.
  std::string val_only = train_args + " --set epochs=0 --set ckpt_dir=" +
                         (dir / "ckpt_none").string();
  CHECK(run_cli(val_only) == 0);
  CHECK_FALSE(fs::exists(dir / "ckpt_none" / "ckpt_last.bin"));

  std::string gen = "generate --set ckpt=" + ckpt.string() +
                    " --set data_dir=" + (dir / "test_ds").string() +
                    " --set K=2 --set steps=3 --set seed=4 --set out_dir=" +
                    (dir / "gen").string();
  REQUIRE(run_cli(gen) == 0);
  for (int f = 0; f < 2; ++f) {
    char fut[16];
    std::snprintf(fut, sizeof(fut), "future_%02d", f);
    for (int t = 0; t < 3; ++t) {
      char frame[20];
      std::snprintf(frame, sizeof(frame), "frame_%04d.pgm", t);
      CHECK(fs::exists(dir / "gen" / fut / frame));
    }
    char trace[16];
    std::snprintf(trace, sizeof(trace), "trace_%02d.csv", f);
    fs::path tpath = dir / "gen" / trace;
    REQUIRE(fs::exists(tpath));
    // Exactly `steps` entries plus the header.
    std::istringstream is(slurp(tpath));
    std::string line;
    int rows = 0;
    while (std::getline(is, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 4);
  }

  // Re-running generate with the same seed is byte-identical.
  std::string gen2 = "generate --set ckpt=" + ckpt.string() +
                     " --set data_dir=" + (dir / "test_ds").string() +
                     " --set K=2 --set steps=3 --set seed=4 --set out_dir=" +
                     (dir / "gen2").string();
  REQUIRE(run_cli(gen2) == 0);
  CHECK(slurp(dir / "gen" / "future_00" / "frame_0002.pgm") ==
        slurp(dir / "gen2" / "future_00" / "frame_0002.pgm"));

  std::string ev = "eval --set ckpt=" + ckpt.string() +
                   " --set data_dir=" + (dir / "test_ds").string() +
                   " --set K=2 --set steps=3 --set seed=5 --set out_dir=" +
                   (dir / "eval").string();
  REQUIRE(run_cli(ev) == 0);
  CHECK(fs::exists(dir / "eval" / "metrics.csv"));
  CHECK(fs::exists(dir / "eval" / "uncertainty.csv"));

  std::string rep = "report --set in_dir=" + (dir / "eval").string() +
                    " --set out_dir=" + (dir / "plots").string();
  REQUIRE(run_cli(rep) == 0);
  CHECK(fs::exists(dir / "plots" / "bestofk_curve.ppm"));
  CHECK(fs::exists(dir / "plots" / "intra_ssim_curve.ppm"));
  CHECK(fs::exists(dir / "plots" / "uncertainty_trace.ppm"));
}
