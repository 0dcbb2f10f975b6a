#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mam/samplers.hpp"
#include "mam/targets.hpp"

using namespace mam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

int run_cli(const std::string& args, const std::string& stderr_file = "/dev/null") {
  const std::string cmd =
      std::string(MAM_CLI_PATH) + " " + args + " >/dev/null 2>" + stderr_file;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("oracle: 2x2 ising pmf, entropy and marginal queries") {
  TempDir dir("mam_cli_oracle");
  write_file(dir.path / "run.cfg", "mode = eb-joint\nlattice_side = 2\nseed = 1\n");
  write_file(dir.path / "queries.txt", "????\n1???\n10?1\n");
  CHECK(run_cli("oracle --config " + dir.str() + "/run.cfg --out " + dir.str() + "/out" +
                " --queries " + dir.str() + "/queries.txt") == 0);
  CHECK(count_lines(dir.path / "out/pmf.tsv") == 16);
  const std::string summary = slurp(dir.path / "out/summary.csv");
  CHECK(summary.find("log_z") != std::string::npos);
  CHECK(summary.find("entropy_bpd") != std::string::npos);

  // all-mask query has marginal exactly 1
  std::ifstream marg(dir.path / "out/marginals.csv");
  std::string header, first;
  std::getline(marg, header);
  std::getline(marg, first);
  CHECK(first.rfind("????,1,", 0) == 0);
}

TEST_CASE("oracle: uniform table entropy is D ln K") {
  TempDir dir("mam_cli_uniform");
  TableTarget uniform(3, 2, std::vector<double>(8, 2.5));
  uniform.save((dir.path / "table.tsv").string());
  write_file(dir.path / "run.cfg",
             "mode = mle-stage1\ntarget = table\ntable_path = " + dir.str() +
                 "/table.tsv\nseed = 1\n");
  CHECK(run_cli("oracle --config " + dir.str() + "/run.cfg --out " + dir.str() + "/out") == 0);
  const std::string summary = slurp(dir.path / "out/summary.csv");
  // 3 ln 2 = 2.0794415416798357
  CHECK(summary.find("entropy_nats,2.07944154167983") != std::string::npos);
}

TEST_CASE("oracle: checkerboard cell summary has 8 equal-mass dark cells") {
  TempDir dir("mam_cli_cells");
  write_file(dir.path / "run.cfg", "mode = eb-theta-only\ntarget = checkerboard\nseed = 1\n");
  CHECK(run_cli("oracle --config " + dir.str() + "/run.cfg --out " + dir.str() + "/out") == 0);
  std::ifstream cells(dir.path / "out/cells.csv");
  std::string line;
  std::getline(cells, line);  // header
  int dark = 0;
  while (std::getline(cells, line)) {
    std::stringstream ss(line);
    std::string cx, cy, is_dark, mass;
    std::getline(ss, cx, ',');
    std::getline(ss, cy, ',');
    std::getline(ss, is_dark, ',');
    std::getline(ss, mass, ',');
    if (is_dark == "1") {
      ++dark;
      CHECK(std::stod(mass) == doctest::Approx(0.125).epsilon(1e-9));
    }
  }
  CHECK(dark == 8);
}

TEST_CASE("oracle refuses state spaces beyond 2^24 with a machine-readable error") {
  TempDir dir("mam_cli_toobig");
  write_file(dir.path / "run.cfg", "mode = eb-joint\nlattice_side = 5\nseed = 1\n");
  const std::string err_file = dir.str() + "/stderr.txt";
  CHECK(run_cli("oracle --config " + dir.str() + "/run.cfg --out " + dir.str() + "/out",
                err_file) == 6);
  const nlohmann::json err = nlohmann::json::parse(slurp(err_file));
  CHECK(err.at("error") == "domain");
  CHECK(err.at("message").get<std::string>().find("2^24") != std::string::npos);
}

TEST_CASE("config errors exit with code 2 and a json line") {
  TempDir dir("mam_cli_badcfg");
  write_file(dir.path / "run.cfg", "mode = eb-joint\nlattice_side = 4\nseed = 1\nlamda = 2\n");
  const std::string err_file = dir.str() + "/stderr.txt";
  CHECK(run_cli("train --config " + dir.str() + "/run.cfg --out " + dir.str() + "/out",
                err_file) == 2);
  const nlohmann::json err = nlohmann::json::parse(slurp(err_file));
  CHECK(err.at("error") == "config");
  CHECK(err.at("message").get<std::string>().find("lambda") != std::string::npos);
}

TEST_CASE("train + sample + eval round trip through the binary") {
  TempDir dir("mam_cli_roundtrip");
  Rng rng(3);
  TableTarget::random(3, 2, rng, 1.0).save((dir.path / "table.tsv").string());
  write_file(dir.path / "run.cfg",
             "mode = mle-stage1\ntarget = table\ntable_path = " + dir.str() +
                 "/table.tsv\nseed = 4\nsteps = 60\nbatch_size = 16\nhidden_width = 16\n"
                 "residual_layers = 1\nlr = 1e-3\ndata_size = 400\nmetrics_every = 10\n"
                 "deterministic_time = true\n");
  CHECK(run_cli("train --config " + dir.str() + "/run.cfg --out " + dir.str() + "/t") == 0);
  const std::string ckpt = dir.str() + "/t/ckpt_60_cond.mam";
  CHECK(fs::exists(ckpt));

  // count=0 writes an empty file and succeeds
  CHECK(run_cli("sample --config " + dir.str() + "/run.cfg --checkpoint " + ckpt +
                " --method ancestral --count 0 --out " + dir.str() + "/s0") == 0);
  CHECK(fs::exists(dir.path / "s0/samples.txt"));
  CHECK(count_lines(dir.path / "s0/samples.txt") == 0);

  CHECK(run_cli("sample --config " + dir.str() + "/run.cfg --checkpoint " + ckpt +
                " --method ancestral --count 50 --out " + dir.str() + "/s1") == 0);
  const auto samples = load_samples((dir.path / "s1/samples.txt").string(), 2);
  CHECK(samples.size() == 50);

  CHECK(run_cli("eval --config " + dir.str() + "/run.cfg --cond " + ckpt +
                " --queries 32 --nll-samples 32 --threshold 0.1 --out " + dir.str() +
                "/e") == 0);
  CHECK(fs::exists(dir.path / "e/eval_metrics.csv"));

  // unknown method is a config error
  CHECK(run_cli("sample --config " + dir.str() + "/run.cfg --checkpoint " + ckpt +
                " --method warp --count 5 --out " + dir.str() + "/s2") == 2);
}

TEST_CASE("identical seeds give identical metrics through the binary") {
  TempDir dir("mam_cli_repro");
  write_file(dir.path / "run.cfg",
             "mode = eb-joint\nlattice_side = 2\nseed = 8\nsteps = 30\nbatch_size = 8\n"
             "chain_count = 8\nhidden_width = 16\nresidual_layers = 1\nmetrics_every = 5\n"
             "deterministic_time = true\n");
  CHECK(run_cli("train --config " + dir.str() + "/run.cfg --out " + dir.str() + "/a") == 0);
  CHECK(run_cli("train --config " + dir.str() + "/run.cfg --out " + dir.str() + "/b") == 0);
  CHECK(slurp(dir.path / "a/metrics.csv") == slurp(dir.path / "b/metrics.csv"));
  // a different seed changes the trajectory
  CHECK(run_cli("train --config " + dir.str() + "/run.cfg --seed 9 --out " + dir.str() +
                "/c") == 0);
  CHECK(slurp(dir.path / "a/metrics.csv") != slurp(dir.path / "c/metrics.csv"));
}
