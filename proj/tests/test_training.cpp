#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "coast/rng.hpp"
#include "coast/synth.hpp"
#include "coast/training.hpp"

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

bool bit_equal(const NdArray& a, const NdArray& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], 8) != 0) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

// Tiny but complete training setup shared by several cases.
TrainConfig tiny_config(const std::string& image_dir,
                        const std::string& out_dir) {
  TrainConfig cfg;
  cfg.image_dir = image_dir;
  cfg.patch_count = 64;
  cfg.patch_side = 16;
  cfg.batch_size = 32;
  cfg.epochs = 2;
  cfg.seed = 5;
  cfg.gammas = {0.3};
  cfg.n_s = 2;
  cfg.model = CoastConfig{2, 1, 4, true, true, true};
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("build_dataset on an exact-size image returns the image itself") {
  TempDir dir("coast_ds_exact");
  const Image img = synth_image(33, 33, 1);
  write_image(img, (dir.path / "a.pgm").string());
  const NdArray patches = build_dataset(dir.str(), 1, 33, 9);
  REQUIRE(patches.shape() == Shape{1, 1089});
  const Image back = read_image((dir.path / "a.pgm").string());
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 33; ++x)
      CHECK(patches.at(0, y * 33 + x) == back.at(0, y, x));
}

TEST_CASE("build_dataset keeps every patch inside bounds") {
  TempDir dir("coast_ds_bounds");
  write_image(synth_image(64, 64, 2), (dir.path / "a.pgm").string());
  const NdArray patches = build_dataset(dir.str(), 100, 33, 10);
  CHECK(patches.shape() == Shape{100, 1089});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i] >= 0.0);
    CHECK(patches[i] <= 1.0);
  }
}

TEST_CASE("build_dataset is deterministic in the seed") {
  TempDir dir("coast_ds_det");
  write_image(synth_image(50, 70, 3), (dir.path / "a.pgm").string());
  write_image(synth_image(64, 40, 4), (dir.path / "b.pgm").string());
  const NdArray a = build_dataset(dir.str(), 50, 16, 11);
  const NdArray b = build_dataset(dir.str(), 50, 16, 11);
  CHECK(bit_equal(a, b));
  const NdArray c = build_dataset(dir.str(), 50, 16, 12);
  CHECK_FALSE(bit_equal(a, c));
}

TEST_CASE("build_dataset skips undersized images; errors when all skipped") {
  TempDir dir("coast_ds_small");
  write_image(synth_image(8, 8, 5), (dir.path / "small.pgm").string());
  CHECK_THROWS_AS(build_dataset(dir.str(), 5, 33, 13), ConfigError);
  // Adding one usable image makes it work again.
  write_image(synth_image(40, 40, 6), (dir.path / "big.pgm").string());
  CHECK(build_dataset(dir.str(), 5, 33, 13).shape() == Shape{5, 1089});
}

TEST_CASE("batch_loss examples") {
  SUBCASE("identical batches give zero") {
    NdArray x({3, 10}, 0.7);
    CHECK(batch_loss(x, x) == 0.0);
  }
  SUBCASE("constant offset 0.1 over N=1089 gives 0.01") {
    NdArray x({1, 1089});
    NdArray xh({1, 1089}, 0.1);
    CHECK(batch_loss(xh, x) == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("matches the scalar double-loop oracle") {
    Rng rng(14);
    NdArray a({4, 25}), b({4, 25});
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    double want = 0.0;
    for (int bi = 0; bi < 4; ++bi) {
      double patch = 0.0;
      for (int i = 0; i < 25; ++i) {
        const double d = a.at(bi, i) - b.at(bi, i);
        patch += d * d;
      }
      want += patch / 25.0;
    }
    want /= 4.0;
    CHECK(batch_loss(a, b) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("non-negative") {
    Rng rng(15);
    NdArray a({2, 9}), b({2, 9});
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    CHECK(batch_loss(a, b) >= 0.0);
  }
}

TEST_CASE("matrix selection over the augmented set is uniform") {
  // Same draw primitive the batch loop uses, 1e4 draws over 5 matrices;
  // 3-sigma multinomial bound around the expected 2000.
  Rng rng(16);
  const int draws = 10000, cells = 5;
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < draws; ++i) ++counts[rng.below(cells)];
  const double expected = draws / static_cast<double>(cells);
  const double sigma = std::sqrt(draws * 0.2 * 0.8);
  for (int c = 0; c < cells; ++c)
    CHECK(std::fabs(counts[c] - expected) < 3.0 * sigma);
}

TEST_CASE("learning rate 0 leaves parameters bit-identical") {
  TempDir imgs("coast_tr_lr0_imgs");
  TempDir out("coast_tr_lr0_out");
  write_image(synth_image(48, 48, 7), (imgs.path / "a.pgm").string());

  TrainConfig cfg = tiny_config(imgs.str(), out.str());
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const CoastParams before =
      init_params(cfg.model, splitmix64(cfg.seed ^ 0x1217'AB1Eull));
  const TrainState st = train(cfg);
  REQUIRE(st.params.set.items.size() == before.set.items.size());
  for (std::size_t i = 0; i < before.set.items.size(); ++i)
    CHECK(bit_equal(st.params.set.items[i].value, before.set.items[i].value));
}

TEST_CASE("a single step on one batch decreases that batch's loss") {
  TempDir imgs("coast_tr_step_imgs");
  write_image(synth_image(64, 64, 8), (imgs.path / "a.pgm").string());

  const int side = 16, n = side * side;
  const NdArray patches = build_dataset(imgs.str(), 32, side, 17);
  const SamplingMatrix phi = gen_frgm(n * 3 / 10, n, 18);
  const Measurement meas = measure(patches, phi, 0.0, 0);
  const ConditionVector z{phi.ratio(), 0.0};

  CoastConfig mc{2, 3, 4, true, true, true};
  CoastParams params = init_params(mc, 19);
  AdamState adam;
  adam.learning_rate = 1e-3;

  auto loss_on_batch = [&](const CoastParams& p) {
    const NdArray xh = coast_infer(p, meas.y, phi, z, 0, 0, false);
    return batch_loss(xh, patches);
  };
  const double before = loss_on_batch(params);

  ad::Tape tape;
  std::vector<ad::Value> lifted;
  const ad::Value xhat =
      coast_forward(tape, params, meas.y, phi, z, 0, 0, false, lifted);
  const ad::Value loss = tape.mse(xhat, tape.constant(patches));
  tape.backward(loss);
  std::vector<NdArray> grads;
  for (const auto& v : lifted) grads.push_back(tape.grad(v));
  adam_step(params.set, grads, adam);

  CHECK(loss_on_batch(params) < before);
}

TEST_CASE("training is deterministic: equal seeds, equal artifacts") {
  TempDir imgs("coast_tr_det_imgs");
  write_image(synth_image(48, 64, 9), (imgs.path / "a.pgm").string());
  write_image(synth_image(64, 48, 10), (imgs.path / "b.pgm").string());

  TempDir out1("coast_tr_det1");
  TempDir out2("coast_tr_det2");
  TrainConfig c1 = tiny_config(imgs.str(), out1.str());
  TrainConfig c2 = tiny_config(imgs.str(), out2.str());
  const TrainState s1 = train(c1);
  const TrainState s2 = train(c2);

  REQUIRE(s1.loss_history.size() == s2.loss_history.size());
  for (std::size_t i = 0; i < s1.loss_history.size(); ++i)
    CHECK(std::memcmp(&s1.loss_history[i], &s2.loss_history[i], 8) == 0);
  CHECK(slurp((out1.path / "coast.ckpt").string()) ==
        slurp((out2.path / "coast.ckpt").string()));
}

TEST_CASE("non-finite loss aborts and dumps the last checkpoint") {
  TempDir imgs("coast_tr_nan_imgs");
  TempDir out("coast_tr_nan_out");
  write_image(synth_image(48, 48, 31), (imgs.path / "a.pgm").string());

  TrainConfig cfg = tiny_config(imgs.str(), out.str());
  cfg.learning_rate = 1e14;  // guaranteed blow-up within an epoch or two
  cfg.epochs = 50;
  CHECK_THROWS_AS(train(cfg), NumericalError);
  CHECK(fs::exists(out.path / "coast.ckpt"));
  // The dump is loadable.
  const CoastParams p = load_checkpoint((out.path / "coast.ckpt").string());
  CHECK(p.config.phases == cfg.model.phases);
}

TEST_CASE("train writes checkpoint, meta, and loss CSV") {
  TempDir imgs("coast_tr_files_imgs");
  TempDir out("coast_tr_files_out");
  write_image(synth_image(48, 48, 11), (imgs.path / "a.pgm").string());

  TrainConfig cfg = tiny_config(imgs.str(), out.str());
  cfg.sigma_lo = 0.0;
  cfg.sigma_hi = 10.0 / 255.0;
  cfg.checkpoint_every = 1;
  const TrainState st = train(cfg);
  CHECK(st.epoch == 2);
  CHECK(fs::exists(out.path / "coast.ckpt"));
  CHECK(fs::exists(out.path / "coast_e0001.ckpt"));
  CHECK(fs::exists(out.path / "coast_e0002.ckpt"));

  const RunMeta meta = load_run_meta((out.path / "coast.ckpt.meta").string());
  CHECK(meta.sigma_hi == doctest::Approx(10.0 / 255.0).epsilon(1e-12));
  CHECK(meta.n_s == 2);
  CHECK(meta.seed == 5);
  REQUIRE(meta.gammas.size() == 1);
  CHECK(meta.gammas[0] == 0.3);

  const std::string csv = slurp((out.path / "coast_loss.csv").string());
  CHECK(csv.find("epoch,mean_loss,wall_seconds") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 epochs
}

TEST_CASE("train config files round-trip") {
  TempDir dir("coast_cfg");
  TrainConfig cfg = tiny_config("imgs", "out");
  cfg.sigma_hi = 0.04;
  cfg.gammas = {0.1, 0.3, 0.5};
  cfg.model.cu_shared = false;
  cfg.learning_rate = 5e-4;
  const std::string path = (dir.path / "train.cfg").string();
  save_train_config(cfg, path);
  const TrainConfig back = load_train_config(path);
  CHECK(back.image_dir == cfg.image_dir);
  CHECK(back.patch_count == cfg.patch_count);
  CHECK(back.patch_side == cfg.patch_side);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.seed == cfg.seed);
  CHECK(back.sigma_hi == cfg.sigma_hi);
  CHECK(back.gammas == cfg.gammas);
  CHECK(back.n_s == cfg.n_s);
  CHECK(back.model.phases == cfg.model.phases);
  CHECK(back.model.cu_shared == false);
  CHECK(back.run_name == cfg.run_name);
}

TEST_CASE("train config rejects unknown keys and bad ranges") {
  TempDir dir("coast_cfg_bad");
  const std::string path = (dir.path / "bad.cfg").string();
  {
    std::ofstream f(path);
    f << "frobnicate=1\n";
  }
  CHECK_THROWS_AS(load_train_config(path), ConfigError);
  {
    std::ofstream f(path, std::ios::trunc);
    f << "image_dir=x\nsigma_lo=0.5\nsigma_hi=0.1\n";
  }
  CHECK_THROWS_AS(load_train_config(path), ConfigError);
}

TEST_CASE("ablation settings report the published parameter counts") {
  TempDir imgs("coast_abl_imgs");
  TempDir out("coast_abl_out");
  write_image(synth_image(33, 33, 12), (imgs.path / "a.pgm").string());

  TrainConfig base = tiny_config(imgs.str(), out.str());
  base.patch_side = 33;
  base.epochs = 0;  // parameter accounting + forward eval only
  base.gammas = {0.3};
  base.model = CoastConfig{20, 3, 32, true, true, true};

  const AblationRow a = ablation_run('a', base, imgs.str());
  CHECK(a.param_count == 1121960);
  const AblationRow c = ablation_run('c', base, imgs.str());
  CHECK(c.param_count == 1127720);
  const AblationRow e = ablation_run('e', base, imgs.str());
  CHECK(e.param_count == 1122056);
  REQUIRE(e.psnr_db.size() == 1);
  CHECK(std::isfinite(e.psnr_db[0]));
}
