#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "coast/network.hpp"
#include "coast/sampling.hpp"
#include "coast/synth.hpp"

using namespace coast;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

struct CliResult {
  int code;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(COAST_CLI_PATH) + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("count-params prints the published totals") {
  CliResult r = run_cli("count-params --np 20 --nc 3 --c 32 --cu shared");
  CHECK(r.code == 0);
  CHECK(r.out == "1122056\n");
  r = run_cli("count-params --np 20 --nc 3 --c 32 --cu off");
  CHECK(r.out == "1121960\n");
  r = run_cli("count-params --np 20 --nc 3 --c 32 --cu unshared");
  CHECK(r.out == "1127720\n");
}

TEST_CASE("gen-phi writes the documented row counts for the 33-pixel patch") {
  TempDir dir("coast_cli_genphi");
  CliResult r = run_cli("gen-phi --ratio 0.1 --patch-side 33 --seed 9 --out " +
                        dir.str());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "phi_109x1089_9.bin"));

  r = run_cli("gen-phi --ratio 0.5 --patch-side 33 --seed 9 --out " +
              dir.str());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "phi_545x1089_9.bin"));
}

TEST_CASE("gen-phi --count emits the base plus derived matrices") {
  TempDir dir("coast_cli_genphi_count");
  const CliResult r = run_cli(
      "gen-phi --ratio 0.25 --patch-side 8 --seed 4 --count 3 --out " +
      dir.str());
  CHECK(r.code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    ++files;
    const SamplingMatrix phi = load_matrix(e.path().string());
    CHECK(phi.rows == 16);
    CHECK(phi.cols == 64);
  }
  CHECK(files == 3);
  CHECK(fs::exists(dir.path / "phi_16x64_4.bin"));
}

TEST_CASE("gen-phi square ratio 1 gives an orthonormal square matrix") {
  TempDir dir("coast_cli_genphi_sq");
  const CliResult r = run_cli(
      "gen-phi --ratio 1.0 --patch-side 2 --seed 2 --out " + dir.str());
  CHECK(r.code == 0);
  const SamplingMatrix phi = load_matrix((dir.path / "phi_4x4_2.bin").string());
  CHECK(phi.rows == 4);
  CHECK(phi.cols == 4);
  CHECK(gram_residual(phi) < 1e-10);
}

TEST_CASE("usage errors exit 1 and leave no files behind") {
  TempDir dir("coast_cli_usage");
  const std::string out = (dir.path / "sub").string();
  CliResult r = run_cli("gen-phi --ratio 0 --patch-side 33 --seed 1 --out " +
                        out);
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(out));

  r = run_cli("gen-phi --patch-side 33 --out " + out);  // missing --ratio
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(out));

  r = run_cli("no-such-command");
  CHECK(r.code == 1);
}

TEST_CASE("reconstruct with pinv on a square matrix hits the PSNR sentinel") {
  TempDir dir("coast_cli_pinv");
  write_image(synth_image(32, 32, 20), (dir.path / "in.pgm").string());
  run_cli("gen-phi --ratio 1.0 --patch-side 16 --seed 3 --out " + dir.str());

  const CliResult r = run_cli(
      "reconstruct --method pinv --phi " +
      (dir.path / "phi_256x256_3.bin").string() + " --in " +
      (dir.path / "in.pgm").string() + " --out " +
      (dir.path / "out.pgm").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("psnr_db=99.0") != std::string::npos);
  CHECK(fs::exists(dir.path / "out.pgm"));
}

TEST_CASE("reconstruct coast: --no-pnpd matches default on single-patch input") {
  TempDir dir("coast_cli_pnpd");
  write_image(synth_image(16, 16, 21), (dir.path / "in.pgm").string());
  run_cli("gen-phi --ratio 0.3 --patch-side 16 --seed 5 --out " + dir.str());

  CoastConfig cfg;
  cfg.phases = 2;
  cfg.blocks = 1;
  cfg.channels = 4;
  const std::string ckpt = (dir.path / "model.ckpt").string();
  save_checkpoint(init_params(cfg, 33), ckpt);

  const std::string phi = (dir.path / "phi_77x256_5.bin").string();
  const std::string base = "reconstruct --method coast --phi " + phi +
                           " --ckpt " + ckpt + " --in " +
                           (dir.path / "in.pgm").string() + " --out ";
  CliResult a = run_cli(base + (dir.path / "a.pgm").string());
  CliResult b = run_cli(base + (dir.path / "b.pgm").string() + " --no-pnpd");
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(slurp((dir.path / "a.pgm").string()) ==
        slurp((dir.path / "b.pgm").string()));
}

TEST_CASE("reconstruct ista runs end to end") {
  TempDir dir("coast_cli_ista");
  write_image(synth_image(16, 16, 22), (dir.path / "in.pgm").string());
  run_cli("gen-phi --ratio 0.5 --patch-side 16 --seed 6 --out " + dir.str());
  const CliResult r = run_cli(
      "reconstruct --method ista --iters 150 --phi " +
      (dir.path / "phi_128x256_6.bin").string() + " --in " +
      (dir.path / "in.pgm").string() + " --out " +
      (dir.path / "out.pgm").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("psnr_db=") != std::string::npos);
}

TEST_CASE("missing checkpoint for coast exits 2") {
  TempDir dir("coast_cli_nockpt");
  write_image(synth_image(16, 16, 23), (dir.path / "in.pgm").string());
  run_cli("gen-phi --ratio 0.3 --patch-side 16 --seed 7 --out " + dir.str());
  const std::string phi = (dir.path / "phi_77x256_7.bin").string();

  CliResult r = run_cli("reconstruct --method coast --phi " + phi + " --in " +
                        (dir.path / "in.pgm").string() + " --out " +
                        (dir.path / "out.pgm").string() + " --ckpt " +
                        (dir.path / "nothere.ckpt").string());
  CHECK(r.code == 2);
  // No --ckpt at all is also a data error, not a crash.
  r = run_cli("reconstruct --method coast --phi " + phi + " --in " +
              (dir.path / "in.pgm").string() + " --out " +
              (dir.path / "out.pgm").string());
  CHECK(r.code == 2);
}

TEST_CASE("malformed matrix files exit 2") {
  TempDir dir("coast_cli_badphi");
  write_image(synth_image(16, 16, 24), (dir.path / "in.pgm").string());
  const std::string bad = (dir.path / "bad.bin").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "XOASTPHI garbage";
  }
  const CliResult r = run_cli("reconstruct --method pinv --phi " + bad +
                              " --in " + (dir.path / "in.pgm").string() +
                              " --out " + (dir.path / "out.pgm").string());
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(dir.path / "out.pgm"));
}

TEST_CASE("gen-data produces a readable dataset") {
  TempDir dir("coast_cli_gendata");
  const CliResult r = run_cli("gen-data --out " + dir.str() +
                              " --count 3 --height 40 --width 48 --seed 2");
  CHECK(r.code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    const Image img = read_image(e.path().string());
    CHECK(img.height == 40);
    CHECK(img.width == 48);
    ++files;
  }
  CHECK(files == 3);
}

TEST_CASE("train then eval via the CLI round-trips checkpoint and meta") {
  TempDir dir("coast_cli_train");
  run_cli("gen-data --out " + (dir.path / "imgs").string() +
          " --count 2 --height 48 --width 48 --seed 77");

  const std::string cfg_path = (dir.path / "train.cfg").string();
  {
    std::ofstream f(cfg_path);
    f << "image_dir=" << (dir.path / "imgs").string() << "\n"
      << "patch_count=64\npatch_side=16\nbatch_size=32\nepochs=2\n"
      << "seed=6\ngammas=0.3\nn_s=2\nphases=2\nblocks=1\nchannels=4\n"
      << "out_dir=" << dir.str() << "\nrun_name=m\n";
  }
  CliResult r = run_cli("train --config " + cfg_path);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "m.ckpt"));
  CHECK(fs::exists(dir.path / "m.ckpt.meta"));
  CHECK(fs::exists(dir.path / "m_loss.csv"));

  const std::string ckpt = (dir.path / "m.ckpt").string();
  r = run_cli("eval seen-unseen --ckpt " + ckpt + " --images " +
              (dir.path / "imgs").string() +
              " --unseen-seeds 901 --out " + (dir.path / "su.csv").string());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "su.csv"));
  {
    std::ifstream f((dir.path / "su.csv").string());
    std::string line;
    int rows = -1;  // header
    while (std::getline(f, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 1 * 2 * 2);  // gammas x images x (seen + 1 unseen)
  }

  r = run_cli("eval noise-sweep --ckpt " + ckpt + " --images " +
              (dir.path / "imgs").string() + " --sigmas 0,0.0392 --out " +
              (dir.path / "nz.csv").string());
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "nz.csv"));
}

TEST_CASE("numerical failures exit 3") {
  TempDir dir("coast_cli_nan");
  run_cli("gen-data --out " + (dir.path / "imgs").string() +
          " --count 1 --height 48 --width 48 --seed 78");
  const std::string cfg_path = (dir.path / "train.cfg").string();
  {
    std::ofstream f(cfg_path);
    f << "image_dir=" << (dir.path / "imgs").string() << "\n"
      << "patch_count=32\npatch_side=16\nbatch_size=32\nepochs=50\n"
      << "seed=6\ngammas=0.3\nn_s=1\nphases=2\nblocks=1\nchannels=4\n"
      << "learning_rate=1e14\n"
      << "out_dir=" << dir.str() << "\nrun_name=diverge\n";
  }
  const CliResult r = run_cli("train --config " + cfg_path);
  CHECK(r.code == 3);
}

TEST_CASE("gen-data is reproducible under --seed") {
  TempDir a("coast_cli_gendata_a");
  TempDir b("coast_cli_gendata_b");
  run_cli("gen-data --out " + a.str() + " --count 2 --height 24 --width 24 --seed 9");
  run_cli("gen-data --out " + b.str() + " --count 2 --height 24 --width 24 --seed 9");
  CHECK(slurp((a.path / "img_000.pgm").string()) ==
        slurp((b.path / "img_000.pgm").string()));
  CHECK(slurp((a.path / "img_001.pgm").string()) ==
        slurp((b.path / "img_001.pgm").string()));
}
