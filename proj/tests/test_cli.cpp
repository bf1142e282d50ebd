#include <cstdlib>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfclab/config.hpp"

using namespace mfclab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRunner {
  fs::path dir;
  std::string bin;
  bool available = false;

  CliRunner() {
    if (const char* b = std::getenv("MFCLAB_BIN")) {
      bin = b;
      available = fs::exists(bin);
    }
    dir = fs::temp_directory_path() / "mfclab_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  int run(const std::string& subcommand, const std::string& config,
          const std::string& extra = "") {
    const fs::path cfg = dir / (subcommand + ".cfg");
    std::ofstream(cfg) << config;
    const std::string cmd = bin + " " + subcommand + " --config " + cfg.string() +
                            " --out " + (dir / subcommand).string() + " --quiet " +
                            extra + " 2> " + (dir / (subcommand + ".err")).string();
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  }
};

const char* kLqConfig = R"(
[model]
name = lq
q = 1.0
qbar = 0.5
lambda = 1.0
u = 1.0
ubar = 0.5

[grid]
t0 = 0.0
T = 0.5
steps = 50

[noise]
sigma = 0.5
sigma0 = 0.0
paths = 1000
seed = 4

[picard]
tol = 1e-5
max_iter = 60
damping = 0.5
)";

}  // namespace

TEST_CASE("config parsing") {
  const SolverConfig cfg = SolverConfig::parse_text(kLqConfig);
  CHECK(cfg.get_double("model.q", 0) == 1.0);
  CHECK(cfg.get_double("model.qbar", 0) == 0.5);
  CHECK(cfg.grid().steps == 50);
  CHECK(cfg.noise().paths == 1000);
  CHECK(cfg.picard().damping == 0.5);
  CHECK(cfg.model().name == "lq");
  CHECK_THROWS_AS(SolverConfig::parse_text("key_without_value\n"), InvalidInput);
  CHECK_THROWS_AS(SolverConfig::parse_text("[model]\nq = abc\n").lq_params(),
                  InvalidInput);
  // hash covers text and seed
  CHECK(config_hash(cfg, 1) != config_hash(cfg, 2));
  CHECK(config_hash(cfg, 1) ==
        config_hash(SolverConfig::parse_text(kLqConfig), 1));
}

TEST_CASE("config rejects a negative lambda naming the field") {
  std::string bad = kLqConfig;
  const auto pos = bad.find("lambda = 1.0");
  bad.replace(pos, 12, "lambda = -1.");
  const SolverConfig cfg = SolverConfig::parse_text(bad);
  CHECK_THROWS_WITH_AS(cfg.model(), doctest::Contains("lambda"), InvalidInput);
}

TEST_CASE("cli end to end") {
  CliRunner cli;
  if (!cli.available) {
    MESSAGE("MFCLAB_BIN not set; skipping CLI end-to-end checks");
    return;
  }

  SUBCASE("check-assumptions passes on lq and fails on the broken fixture") {
    std::string cfg = kLqConfig;
    CHECK(cli.run("check-assumptions", cfg + "[verify]\nprobes = 10\n") == 0);
    const std::string rep = slurp(cli.dir / "check-assumptions" /
                                  "check-assumptions.json");
    CHECK(rep.find("\"pass\": true") != std::string::npos);
    CHECK(rep.find("config_hash") != std::string::npos);
    CHECK(rep.find("\"seed\"") != std::string::npos);

    std::string broken = cfg;
    broken.replace(broken.find("name = lq"), 9, "name = lq-broken");
    broken.replace(broken.find("q = 1.0"), 7, "q = -1.");
    CHECK(cli.run("check-assumptions", broken + "[verify]\nprobes = 10\n") == 2);
  }

  SUBCASE("malformed config exits 1 with a diagnostic naming the field") {
    std::string bad = kLqConfig;
    bad.replace(bad.find("lambda = 1.0"), 12, "lambda = -1.");
    CHECK(cli.run("solve-nparticle", bad) == 1);
    const std::string err = slurp(cli.dir / "solve-nparticle.err");
    CHECK(err.find("lambda") != std::string::npos);
  }

  SUBCASE("solve subcommands write reports") {
    std::string cfg = kLqConfig;
    cfg += "[nparticle]\nN = 2\nx0 = 0.4, -0.6\ndump_trajectories = true\n";
    CHECK(cli.run("solve-nparticle", cfg) == 0);
    CHECK(fs::exists(cli.dir / "solve-nparticle" / "solve-nparticle.json"));
    CHECK(fs::exists(cli.dir / "solve-nparticle" /
                     "nparticle-trajectories.csv"));

    std::string mf = kLqConfig;
    mf += "[meanfield]\nmu0_atoms = 8\nmu0_scale = 0.8\n";
    CHECK(cli.run("solve-meanfield", mf) == 0);
    CHECK(fs::exists(cli.dir / "solve-meanfield" / "solve-meanfield.json"));
  }

  SUBCASE("fk-eval presets pass their closed forms") {
    for (const char* preset : {"const", "discount", "quadratic"}) {
      std::string cfg = kLqConfig;
      cfg += std::string("[fk]\npreset = ") + preset +
             "\nmsamples = 200\nfk_paths = 4000\n";
      CHECK(cli.run("fk-eval", cfg) == 0);
    }
  }

  SUBCASE("identical config and seed reproduce byte-identical csv output") {
    std::string cfg = kLqConfig;
    cfg += "[sweep]\nNs = 2,4\nreference_factor = 8\nreference_replications = 4\n"
           "paths_budget = 2000\nmin_paths = 400\npinned_paths = 200\n";
    CHECK(cli.run("chaos-sweep", cfg) == 0);
    const std::string first =
        slurp(cli.dir / "chaos-sweep" / "chaos-value-gaps.csv");
    const std::string firstg =
        slurp(cli.dir / "chaos-sweep" / "chaos-gradient-gaps.csv");
    CHECK(cli.run("chaos-sweep", cfg) == 0);
    CHECK(slurp(cli.dir / "chaos-sweep" / "chaos-value-gaps.csv") == first);
    CHECK(slurp(cli.dir / "chaos-sweep" / "chaos-gradient-gaps.csv") == firstg);
    CHECK_FALSE(first.empty());
    // a different seed changes the numbers
    CHECK(cli.run("chaos-sweep", cfg, "--seed 99") == 0);
    CHECK(slurp(cli.dir / "chaos-sweep" / "chaos-value-gaps.csv") != first);
  }
}
