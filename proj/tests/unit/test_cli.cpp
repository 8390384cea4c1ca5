#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "mdmf/embeddings.hpp"
#include "mdmf/pfs.hpp"

using namespace mdmf;
using namespace mdmf::cli;

namespace {

namespace fs = std::filesystem;

struct Scratch {
  fs::path dir = fs::temp_directory_path() / "mdmf_unit_cli";
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string file(const std::string& name) const { return (dir / name).string(); }
  std::string touch(const std::string& name, const std::string& text = "") const {
    std::ofstream(dir / name) << text;
    return file(name);
  }
};

ParseOutcome parse(std::vector<std::string> args) {
  args.insert(args.begin(), "mdmf");
  return parse_config(args);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("no arguments is a usage error") {
    const auto r = parse({});
    CHECK_FALSE(r.config);
    CHECK(r.exit_code == kUsage);
    CHECK(r.message.find("Usage") != std::string::npos);
  }

  TEST_CASE("help exits cleanly") {
    const auto r = parse({"--help"});
    CHECK(r.exit_code == kOk);
    CHECK_FALSE(r.config);
    CHECK(r.message.find("theory-check") != std::string::npos);
  }

  TEST_CASE("train defaults follow the reference recipe") {
    Scratch s;
    const auto real = s.touch("r.pfse");
    const auto fake = s.touch("f.pfse");
    const auto r = parse({"train", "--real", real, "--fake", fake, "--out", s.file("m.pfsp")});
    REQUIRE(r.config);
    const auto& c = *r.config;
    CHECK(c.subcommand == "train");
    CHECK(c.train.learning_rate == 1e-4);
    CHECK(c.train.batch_size == 256);
    CHECK(c.train.epochs == 25);
    CHECK(c.train.adam_beta1 == 0.9);
    CHECK(c.train.adam_beta2 == 0.99);
    CHECK(c.train.weight_decay == 0.01);
    CHECK(c.train.lambda == 1e-8);
    CHECK(c.train.dropout_enabled);
    CHECK(c.dropout == 0.3);
    CHECK(c.hidden_width == 256);
    CHECK(c.pfs_dim == 1);
    CHECK(c.seed == 0);

    const auto nd = parse({"--seed", "7", "train", "--real", real, "--fake", fake, "--out", s.file("m.pfsp"),
                                  "--no-dropout", "--lr", "3e-3"});
    REQUIRE(nd.config);
    CHECK_FALSE(nd.config->train.dropout_enabled);
    CHECK(nd.config->train.learning_rate == 3e-3);
    CHECK(nd.config->seed == 7);
  }

  TEST_CASE("argument errors map to exit codes") {
    Scratch s;
    const auto refs = s.touch("refs.pfse");
    const auto ck = s.touch("m.pfsp");
    const std::vector<std::string> base{"score", "--checkpoint", ck, "--refs", refs, "--tests", refs, "--out",
                                        s.file("o.csv")};
    CHECK(parse(base).exit_code == kOk);

    auto both = base;
    both.insert(both.end(), {"--tau", "0.1", "--calibrate-alpha", "2"});
    CHECK(parse(both).exit_code == kUsage);

    auto unknown = base;
    unknown.push_back("--bogus");
    CHECK(parse(unknown).exit_code == kUsage);

    auto bad_value = base;
    bad_value.insert(bad_value.end(), {"--tau", "abc"});
    CHECK(parse(bad_value).exit_code == kConfigValue);

    auto missing = base;
    missing[4] = s.file("absent.pfse");
    CHECK(parse(missing).exit_code == kBadPath);

    auto bad_dir = base;
    bad_dir.back() = s.file("nope/o.csv");
    CHECK(parse(bad_dir).exit_code == kBadPath);

    CHECK(parse({"synth", "--real-out", s.file("a"), "--fake-out", s.file("b"), "--rho", "2"}).exit_code ==
          kConfigValue);
    CHECK(parse({"synth", "--real-out", s.file("a")}).exit_code == kUsage);
  }

  TEST_CASE("flags override the config file") {
    Scratch s;
    const auto cfg = s.touch("c.toml", "seed = 3\n[synth]\nimages = 40\nrho = 0.5\n");
    const auto r = parse({"--config", cfg, "synth", "--real-out", s.file("a"), "--fake-out", s.file("b"),
                                 "--rho", "0.25"});
    REQUIRE(r.config);
    CHECK(r.config->seed == 3);
    CHECK(r.config->images == 40);
    CHECK(r.config->synth.rho == 0.25);

    const auto extra = s.touch("x.toml", "[synth]\nnot_a_key = 1\n");
    CHECK(parse({"--config", extra, "synth", "--real-out", s.file("a"), "--fake-out", s.file("b")})
              .exit_code == kUsage);
    CHECK(parse({"--config", s.file("missing.toml"), "theory-check"}).exit_code == kBadPath);
  }

  TEST_CASE("data format errors exit with code 3") {
    Scratch s;
    const auto junk = s.touch("junk.pfse", "not an embedding file");
    const auto r = parse({"train", "--real", junk, "--fake", junk, "--out", s.file("m.pfsp")});
    REQUIRE(r.config);
    CHECK(run(*r.config) == kDataFormat);
  }

  TEST_CASE("synth then train then score") {
    Scratch s;
    auto r = parse({"--seed", "1", "synth", "--real-out", s.file("r.pfse"), "--fake-out", s.file("f.pfse"),
                           "--images", "64", "--dim", "4", "--patches", "4"});
    REQUIRE(r.config);
    REQUIRE(run(*r.config) == kOk);
    CHECK(read_embedding_file(s.file("r.pfse")).size() == 64);

    r = parse({"train", "--real", s.file("r.pfse"), "--fake", s.file("f.pfse"), "--out", s.file("m.pfsp"),
                      "--epochs", "2", "--batch-size", "16", "--hidden", "8", "--history", s.file("h.csv")});
    REQUIRE(r.config);
    REQUIRE(run(*r.config) == kOk);
    CHECK(read_checkpoint(s.file("m.pfsp")).hidden_width == 8);

    r = parse({"score", "--checkpoint", s.file("m.pfsp"), "--refs", s.file("r.pfse"), "--tests",
                      s.file("r.pfse"), s.file("f.pfse"), "--out", s.file("s.csv")});
    REQUIRE(r.config);
    REQUIRE(run(*r.config) == kOk);
    std::ifstream in(s.file("s.csv"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 129);
  }
}
