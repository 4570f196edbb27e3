#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "wxadapt/autograd/gradcheck.hpp"
#include "wxadapt/core/image.hpp"
#include "wxadapt/io/image_io.hpp"

namespace fs = std::filesystem;
using namespace wxa;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "wxa_cli";

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const std::string& env = "") {
  const auto log = kRoot / "last.log";
  const std::string cmd = env + " \"" WXADAPT_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_text(log);
  return r;
}

nlohmann::json run_json(const fs::path& dir) { return nlohmann::json::parse(io::read_text(dir / "run.json")); }

std::size_t line_count(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string l; std::getline(f, l);) n += !l.empty();
  return n;
}

std::string p(const std::string& name) { return (kRoot / name).string(); }

// One shared dataset for the training-side cases.
const std::string& dataset() {
  static const std::string dir = [] {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const auto r = cli("synth --weather haze --n 6 --seed 7 --out " + p("haze"));
    REQUIRE(r.code == 0);
    return p("haze");
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth writes a manifest and repeats byte-for-byte") {
  dataset();
  const auto r = cli("synth --weather haze --n 6 --seed 7 --out " + p("haze2"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("manifest.json") != std::string::npos);
  CHECK(io::file_digest(kRoot / "haze" / "manifest.json") == io::file_digest(kRoot / "haze2" / "manifest.json"));
  CHECK(io::file_digest(kRoot / "haze" / "target" / "images" / "000000.png") ==
        io::file_digest(kRoot / "haze2" / "target" / "images" / "000000.png"));
  const auto j = run_json(kRoot / "haze");
  CHECK(j["seed"] == 7);
  CHECK(j["subcommand"] == "synth");
  CHECK(j["config"]["n_source"] == "6");
  CHECK(j.contains("version"));
}

TEST_CASE("synth rain honors the angle range and rejects values outside it") {
  dataset();
  CHECK(cli("synth --weather rain --n 2 --angle-range 70 110 --out " + p("rain")).code == 0);
  CHECK(cli("synth --weather rain --n 2 --angle-range 60 110 --out " + p("rain_bad")).code == 1);
  CHECK(cli("synth --weather rain --n 2 --angle-range 70 120 --out " + p("rain_bad")).code == 1);
  CHECK_FALSE(fs::exists(kRoot / "rain_bad" / "manifest.json"));
}

TEST_CASE("WXADAPT_SEED is the seed fallback") {
  dataset();
  REQUIRE(cli("synth --n 2 --out " + p("env"), "WXADAPT_SEED=13").code == 0);
  CHECK(run_json(kRoot / "env")["seed"] == 13);
  REQUIRE(cli("synth --n 2 --seed 4 --out " + p("env_flag"), "WXADAPT_SEED=13").code == 0);
  CHECK(run_json(kRoot / "env_flag")["seed"] == 4);
  CHECK(cli("synth --n 2 --out " + p("env_bad"), "WXADAPT_SEED=x1").code == 1);
}

TEST_CASE("prior reports fidelity and echoes omega") {
  const auto r = cli("prior --data " + dataset() + " --compare-gt --out " + p("prior"));
  REQUIRE(r.code == 0);
  const auto j = run_json(kRoot / "prior");
  CHECK(j["config"]["omega"] == "0.95");
  CHECK(j["pearson_r"].get<double>() >= 0.7);
  CHECK(r.out.find("pearson r") != std::string::npos);
  CHECK(fs::exists(kRoot / "prior" / "target_0_est.pri"));
  CHECK(fs::exists(kRoot / "prior" / "target_0_gt.pgm"));
}

TEST_CASE("prior on a clean flat image finds almost no rain residue") {
  dataset();
  ImageF flat(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      flat.at(y, x, 0) = 0.2f;
      flat.at(y, x, 1) = 0.5f;
      flat.at(y, x, 2) = 0.7f;
    }
  io::write_png(kRoot / "flat.png", flat);
  REQUIRE(cli("prior --image " + p("flat.png") + " --kind rain --out " + p("flat")).code == 0);
  CHECK(run_json(kRoot / "flat")["residue_mean"].get<double>() <= 0.05);
  CHECK(cli("prior --image " + p("missing.png") + " --out " + p("flat2")).code == 3);
}

TEST_CASE("train then eval prints mAP and appends to the results CSV") {
  const auto run = p("train_frcnn");
  const auto t = cli("train --data " + dataset() + " --mode frcnn --iterations 3 --seed 1 --out " + run);
  REQUIRE(t.code == 0);
  CHECK(line_count(fs::path(run) / "metrics.csv") == 4);
  const auto j = run_json(run);
  CHECK(j["config"]["lambda"] == "0.1");
  CHECK(j["config"]["mode"] == "frcnn");
  CHECK(j["inputs"].size() == 1);

  for (int k = 0; k < 2; ++k) {
    const auto e = cli("eval --run " + run + " --data " + dataset());
    REQUIRE(e.code == 0);
    CHECK(e.out.find("mAP@0.5") != std::string::npos);
  }
  CHECK(line_count(fs::path(run) / "eval" / "eval_results.csv") == 3);
  CHECK(cli("eval --run " + p("nope") + " --data " + dataset()).code == 3);
}

TEST_CASE("usage errors exit 1 and divergence exits 2") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --data " + dataset() + " --mode q9 --out " + p("bad_mode")).code == 1);
  std::ofstream(kRoot / "diverge.cfg") << "divergence_threshold = 0.001\n";
  CHECK(cli("train --data " + dataset() + " --config " + p("diverge.cfg") + " --iterations 2 --out " + p("diverged")).code == 2);
  CHECK(fs::exists(kRoot / "diverged" / "run.json"));
  CHECK(cli("train --data " + p("no_such_dataset") + " --out " + p("no_data")).code == 3);
}

TEST_CASE("ablate emits the five-row table with median mAP per mode") {
  const auto r = cli("ablate --data " + dataset() + " --seeds 3 --iterations 1 --out " + p("ablate"));
  REQUIRE(r.code == 0);
  CHECK(line_count(kRoot / "ablate" / "ablation.csv") == 6);
  CHECK(line_count(kRoot / "ablate" / "ablation.md") == 7);
  CHECK(r.out.find("| FRCNN+P45+R45 |") != std::string::npos);
  CHECK(run_json(kRoot / "ablate")["seeds"].size() == 3);

  const auto s = cli("ablate --data " + dataset() + " --seeds 1 --iterations 1 --sweep 0.01 0.1 1 --out " + p("sweep"));
  REQUIRE(s.code == 0);
  CHECK(line_count(kRoot / "sweep" / "lambda_sweep.csv") == 1 + 3 + 3);
}

TEST_CASE("gradcheck lists every op once and names an injected bug") {
  dataset();
  const auto ok = cli("gradcheck --out " + p("grad"));
  REQUIRE(ok.code == 0);
  for (const auto& c : ag::gradcheck_registry()) {
    const auto first = ok.out.find(c.op + " ");
    CHECK(first != std::string::npos);
  }
  CHECK(line_count(kRoot / "grad" / "gradcheck.csv") == 1 + ag::gradcheck_registry().size());

  const auto bad = cli("gradcheck --seeds 2 --inject-bug conv2d --out " + p("grad_bug"));
  CHECK(bad.code != 0);
  CHECK(bad.out.find("FAILED conv2d") != std::string::npos);
  CHECK(cli("gradcheck --inject-bug no_such_op --out " + p("grad_bad")).code == 1);
}

TEST_CASE("export writes heatmap triplets and one loss row per logged iteration") {
  const auto run = p("train_p45");
  REQUIRE(cli("train --data " + dataset() + " --mode p45r45 --iterations 4 --out " + run).code == 0);
  const auto r = cli("export --run " + run + " --data " + dataset() + " --samples 2");
  REQUIRE(r.code == 0);
  const auto out = fs::path(run) / "export";
  for (const char* kind : {"gt", "est", "pen"})
    for (int i = 0; i < 2; ++i) CHECK(fs::exists(out / "heatmaps" / ("val_" + std::to_string(i) + "_" + kind + ".pgm")));
  CHECK(line_count(out / "losses.csv") == 1 + 4);
  CHECK(cli("export --run " + p("missing_run")).code == 3);
}
