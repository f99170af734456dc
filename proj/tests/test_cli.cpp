#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef _WIN32
#include <sys/wait.h>
#endif

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "cdr_cli_tests";
  fs::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = scratch_dir();
  const fs::path out = dir / ("stdout" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("stderr" + std::to_string(counter) + ".txt");
  ++counter;

  const std::string cmd = std::string("\"") + CDR_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
#ifndef _WIN32
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
#else
  r.code = raw;
#endif
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// One compact experiment shared by every pipeline test; the digests must
// agree across stages, so the flags are centralized.
std::string tiny_sets(const fs::path& out_dir) {
  std::string s;
  s += " --set out_dir=" + out_dir.string();
  s += " --set renderer.resolution=16";
  s += " --set model.latent_dim=4 --set model.conv1_channels=4 --set model.conv2_channels=6";
  s += " --set model.fc_hidden=16 --set model.action_hidden=8 --set model.action_code_dim=6";
  s += " --set model.trunk_hidden=12 --set model.gru_hidden=8";
  s += " --set model.horizon=2 --set model.context_len=2";
  s += " --set training.episodes=12 --set training.frames_controlled=6";
  s += " --set training.frames_uncontrolled=6 --set training.val_fraction=0.4";
  s += " --set training.batch_size=8 --set training.epochs=1";
  s += " --set evaluation.pool_size=30 --set evaluation.query_count=10";
  s += " --set planning.candidates=8 --set planning.max_steps=3";
  return s;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("rejects bad invocations with a nonzero exit") {
    CHECK(run_cli("").code != 0);
    CHECK(run_cli("frobnicate").code != 0);

    const CliResult bad_key = run_cli("gen-data --set training.bogus=1");
    CHECK(bad_key.code == 1);
    CHECK(bad_key.err.find("error:") != std::string::npos);
    CHECK(bad_key.err.find("training.bogus") != std::string::npos);

    const CliResult bad_loss = run_cli("train --loss bogus");
    CHECK(bad_loss.code == 1);
    CHECK(bad_loss.err.find("error:") != std::string::npos);

    const CliResult no_data = run_cli("train --dataset /nonexistent/nope.cdrd");
    CHECK(no_data.code == 1);
    CHECK(no_data.err.find("error:") != std::string::npos);
  }

  TEST_CASE("gen-data is reproducible byte for byte") {
    const fs::path dir = scratch_dir() / "gen";
    fs::remove_all(dir);
    const std::string sets = tiny_sets(dir);

    const fs::path a = dir / "a.cdrd";
    const fs::path b = dir / "b.cdrd";
    const CliResult r1 = run_cli("gen-data" + sets + " --out " + a.string());
    REQUIRE(r1.code == 0);
    CHECK(r1.out.find("gen-data paradigm=controlled episodes=12") != std::string::npos);
    const CliResult r2 = run_cli("gen-data" + sets + " --out " + b.string());
    REQUIRE(r2.code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(!slurp(a).empty());

    const fs::path c = dir / "c.cdrd";
    const CliResult r3 = run_cli("gen-data" + sets + " --set seed=2 --out " + c.string());
    REQUIRE(r3.code == 0);
    CHECK(slurp(a) != slurp(c));
  }

  TEST_CASE("the pipeline runs end to end and enforces config hashes") {
    const fs::path dir = scratch_dir() / "pipeline";
    fs::remove_all(dir);
    const std::string sets = tiny_sets(dir);
    const fs::path data = dir / "data.cdrd";
    const fs::path model = dir / "model.cdrw";
    const fs::path metrics = dir / "metrics.log";

    REQUIRE(run_cli("gen-data" + sets + " --out " + data.string()).code == 0);

    const CliResult tr = run_cli("train" + sets + " --dataset " + data.string() + " --out " +
                                 model.string() + " --metrics " + metrics.string());
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("train loss=cdr paradigm=controlled") != std::string::npos);
    CHECK(tr.out.find("best_epoch=") != std::string::npos);
    REQUIRE(fs::exists(model));
    const std::string metrics_text = slurp(metrics);
    CHECK(metrics_text.rfind("# config=", 0) == 0);
    CHECK(metrics_text.find("epoch=0 split=val") != std::string::npos);

    const CliResult inv = run_cli("eval-invariance" + sets + " --checkpoint " + model.string());
    CHECK(inv.code == 0);
    CHECK(inv.out.find("invariance pairs=200") != std::string::npos);
    CHECK(fs::exists(dir / "invariance.txt"));

    const CliResult retr =
        run_cli("eval-retrieval" + sets + " --checkpoint " + model.string() + " --split ood");
    CHECK(retr.code == 0);
    CHECK(retr.out.find("retrieval split=ood queries=10 pool=30") != std::string::npos);

    const CliResult plan =
        run_cli("plan" + sets + " --checkpoint " + model.string() + " --episodes 2");
    CHECK(plan.code == 0);
    CHECK(plan.out.find("planning goal=same episodes=2") != std::string::npos);

    const std::string changed = sets + " --set training.epochs=2";
    const CliResult mismatch =
        run_cli("eval-invariance" + changed + " --checkpoint " + model.string());
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("was produced under config") != std::string::npos);

    const CliResult waved = run_cli("eval-invariance" + changed + " --checkpoint " +
                                    model.string() + " --allow-hash-mismatch");
    CHECK(waved.code == 0);
    CHECK(waved.err.find("warning:") != std::string::npos);
  }

  TEST_CASE("train rejects a dataset from a different config") {
    const fs::path dir = scratch_dir() / "hash";
    fs::remove_all(dir);
    const std::string sets = tiny_sets(dir);
    const fs::path data = dir / "data.cdrd";
    REQUIRE(run_cli("gen-data" + sets + " --out " + data.string()).code == 0);

    const CliResult other =
        run_cli("train" + sets + " --set seed=7 --dataset " + data.string());
    CHECK(other.code == 1);
    CHECK(other.err.find("was produced under config") != std::string::npos);

    const CliResult forced = run_cli("train" + sets + " --set seed=7 --dataset " + data.string() +
                                     " --out " + (dir / "forced.cdrw").string() + " --metrics " +
                                     (dir / "forced.log").string() + " --allow-hash-mismatch");
    CHECK(forced.code == 0);
    CHECK(forced.err.find("warning:") != std::string::npos);
  }

  TEST_CASE("render-preview writes the three ppm files") {
    const fs::path dir = scratch_dir() / "preview";
    fs::remove_all(dir);
    const std::string sets = tiny_sets(dir);
    const fs::path prefix = dir / "shot";

    const CliResult r = run_cli("render-preview" + sets + " --seed 4 --out " + prefix.string());
    REQUIRE(r.code == 0);
    for (const char* suffix : {"_a.ppm", "_b.ppm", "_mask.ppm"}) {
      const fs::path p = dir / ("shot" + std::string(suffix));
      REQUIRE(fs::exists(p));
      const std::string body = slurp(p);
      CHECK(body.size() > 10);
      CHECK(body[0] == 'P');
    }
  }
}
