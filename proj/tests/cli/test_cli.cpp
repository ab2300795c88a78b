#include "halbach/persistence.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#ifndef HALBACH_CLI_PATH
#error "HALBACH_CLI_PATH must name the halbach executable"
#endif

using namespace halbach;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "halbach_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(HALBACH_CLI_PATH) + "' " + args + " >>'" +
                          (root() / "console.txt").string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Contents of every file below `dir` except run.log, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == "run.log") continue;
    out[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return out;
}

std::string p(const fs::path& path) { return "'" + path.string() + "'"; }

void check_manifest(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  std::map<std::string, std::string> listed;
  for (const auto& f : manifest["files"]) {
    const std::string rel = f["path"];
    listed[rel] = f["sha256"];
    CHECK(fs::file_size(dir / rel) == f["bytes"].get<std::uintmax_t>());
    CHECK(sha256_file(dir / rel) == f["sha256"].get<std::string>());
  }
  for (const auto& [rel, contents] : snapshot(dir)) {
    if (rel == "manifest.json") continue;
    CHECK_MESSAGE(listed.count(rel) == 1, rel);
  }
  CHECK(fs::exists(dir / "run.log"));
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("geometry") == 2);
  CHECK(run("geometry --out " + p(root() / "g") + " --bogus") == 2);
  CHECK(run("validate --out " + p(root() / "v") + " --seed -3") == 2);
  CHECK(run("validate --out " + p(root() / "v") + " --mode gibbs --seed 1") == 2);
  CHECK(run("geometry --out " + p(root() / "geo")) == 0);
  CHECK(fs::exists(root() / "geo" / "manifest.json"));
}

TEST_CASE("configuration errors leave no outputs") {
  const auto out = root() / "cfg_err";
  CHECK(run("geometry --config " + p(root() / "absent.toml") + " --out " + p(out)) == 2);
  CHECK_FALSE(fs::exists(out));

  write_file(root() / "unknown.toml", "[inference]\nstep = 0.1\n");
  CHECK(run("geometry --config " + p(root() / "unknown.toml") + " --out " + p(out)) == 2);
  CHECK_FALSE(fs::exists(out));

  write_file(root() / "range.toml", "[inference]\nstep_size = 2.0\n");
  CHECK(run("validate --config " + p(root() / "range.toml") + " --seed 1 --out " + p(out)) == 2);
  CHECK_FALSE(fs::exists(out));

  CHECK(run("geometry --out " + p(out), "HALBACH_THREADS=zero") == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("pipeline runs are reproducible") {
  write_file(root() / "2d.toml", "[model]\ndimension = 2\n[inference]\nn_steps = 1500\n");
  const auto cfg2d = " --config " + p(root() / "2d.toml");

  SUBCASE("observe and linear infer") {
    const auto a = root() / "obs_a";
    const auto b = root() / "obs_b";
    const auto c = root() / "obs_c";
    REQUIRE(run("observe --seed 5 --out " + p(a)) == 0);
    REQUIRE(run("observe --seed 5 --out " + p(b)) == 0);
    REQUIRE(run("observe --seed 6 --out " + p(c)) == 0);
    CHECK(snapshot(a) == snapshot(b));
    CHECK(read_file(a / "truth.csv") != read_file(c / "truth.csv"));
    check_manifest(a);
    CHECK(run("observe --out " + p(root() / "obs_noseed")) == 2);

    const auto ia = root() / "inf_a";
    const auto ib = root() / "inf_b";
    REQUIRE(run("infer --observation " + p(a / "observation.csv") + " --out " + p(ia)) == 0);
    REQUIRE(run("infer --observation " + p(a / "observation.csv") + " --out " + p(ib)) == 0);
    CHECK(snapshot(ia) == snapshot(ib));
    check_manifest(ia);
    const auto manifest = read_json(ia / "manifest.json");
    CHECK(manifest["inputs"]["observation"] == sha256_file(a / "observation.csv"));
    CHECK(manifest["seed"].is_null());

    // Re-running from the resolved snapshot reproduces every output.
    const auto ic = root() / "inf_c";
    REQUIRE(run("infer --config " + p(ia / "config.resolved.toml") + " --observation " +
                p(a / "observation.csv") + " --out " + p(ic)) == 0);
    CHECK(snapshot(ia) == snapshot(ic));
  }

  SUBCASE("pCN infer") {
    const auto o = root() / "obs2d";
    REQUIRE(run("observe --seed 2" + cfg2d + " --out " + p(o)) == 0);
    const auto args = "infer --mode pcn" + cfg2d + " --observation " + p(o / "observation.csv") + " --chains 2";
    CHECK(run(args + " --out " + p(root() / "pcn_noseed")) == 2);
    CHECK_FALSE(fs::exists(root() / "pcn_noseed"));
    REQUIRE(run(args + " --seed 9 --out " + p(root() / "pcn_a")) == 0);
    REQUIRE(run(args + " --seed 9 --out " + p(root() / "pcn_b")) == 0);
    REQUIRE(run(args + " --seed 10 --out " + p(root() / "pcn_c")) == 0);
    CHECK(snapshot(root() / "pcn_a") == snapshot(root() / "pcn_b"));
    CHECK(read_file(root() / "pcn_a" / "chain_0.csv") != read_file(root() / "pcn_c" / "chain_0.csv"));
    check_manifest(root() / "pcn_a");
    const auto chain = read_chain(root() / "pcn_a" / "chain_1.csv", root() / "pcn_a" / "chain_1.json");
    CHECK(chain.seed == 10);
    CHECK(chain.n_states() == 1501);
  }

  SUBCASE("validate") {
    const auto a = root() / "val_a";
    const auto b = root() / "val_b";
    REQUIRE(run("validate --seed 3 --seeds 2 --out " + p(a)) == 0);
    REQUIRE(run("validate --seed 3 --seeds 2 --out " + p(b), "HALBACH_THREADS=2") == 0);
    CHECK(snapshot(a) == snapshot(b));
    check_manifest(a);
    CHECK(fs::exists(a / "seed_3" / "field.csv"));
    CHECK(fs::exists(a / "seed_4" / "fourier.json"));
    REQUIRE(run("report --in " + p(a) + " --out " + p(root() / "val_report")) == 0);
    CHECK(fs::exists(root() / "val_report" / "report.md"));
  }
}

TEST_CASE("domain errors exit with 1") {
  write_file(root() / "garbage.csv", "not,an,observation\n1,2,3\n");
  const auto out = root() / "garbage_out";
  CHECK(run("infer --observation " + p(root() / "garbage.csv") + " --out " + p(out)) == 1);
  CHECK_FALSE(fs::exists(out));
  write_file(root() / "helm.csv", "nonsense\n");
  CHECK(run("fit-prior --helmholtz " + p(root() / "helm.csv") + " --out " + p(root() / "fit_out")) == 1);
}
