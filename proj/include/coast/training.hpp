#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coast/network.hpp"
#include "coast/optim.hpp"
#include "coast/sampling.hpp"

namespace coast {

struct TrainConfig {
  std::string image_dir;
  int patch_count = 5000;   // N_D
  int patch_side = 33;      // sqrt(N)
  int batch_size = 64;
  int epochs = 40;
  double learning_rate = 1e-4;
  uint64_t seed = 1;
  double sigma_lo = 0.0;    // measurement-noise range, normalized units
  double sigma_hi = 0.0;
  std::vector<double> gammas = {0.1, 0.3, 0.5};
  int n_s = 5;              // matrices per ratio (RPA)
  std::string phi_dir;      // when set, load the matrix set from files
  CoastConfig model{5, 3, 16, true, true, true};  // desk-scale default
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::string out_dir = ".";
  std::string run_name = "coast";
};

// key=value text file mirroring TrainConfig (unknown keys rejected).
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

// Vectorized [0,1] luminance patches sampled from the images in a
// directory: positions uniform per image, images weighted by pixel area.
// Images smaller than the patch are skipped with a warning on stderr.
NdArray build_dataset(const std::string& image_dir, int patch_count,
                      int patch_side, uint64_t seed);

// Mean over the batch of |xhat_i - x_i|^2 / N (the per-batch estimate of
// the end-to-end training loss).
double batch_loss(const NdArray& xhat, const NdArray& x);

// Derives the FRGM base list from config (M = round(gamma N)) and builds
// the augmented training set; with phi_dir set, loads every *.bin there
// as its own group instead.
AugmentedSet build_matrix_set(const TrainConfig& cfg);

struct TrainState {
  CoastParams params;
  AdamState adam;
  int epoch = 0;
  std::vector<double> loss_history;  // per-epoch mean loss
};

// Runs the batch loop: per batch draw a matrix uniformly from the set and
// sigma uniformly from [sigma_lo, sigma_hi], measure, forward (PnP-D off),
// backprop, Adam. Writes <run_name>.ckpt / .meta / _loss.csv under
// out_dir, plus scheduled epoch checkpoints. Deterministic in the seed.
TrainState train(const TrainConfig& cfg);

// Sidecar run metadata written next to each checkpoint (key=value).
struct RunMeta {
  double sigma_lo = 0.0;
  double sigma_hi = 0.0;
  std::vector<double> gammas;
  int n_s = 1;
  int patch_side = 33;
  uint64_t seed = 0;
};
RunMeta load_run_meta(const std::string& path);

// Table-style ablation settings:
//   a: no RPA, no CU, per-patch eval      b: RPA only
//   c: RPA + unshared CUs                 d: RPA + shared CU
//   e: RPA + shared CU + PnP-D at eval
struct AblationRow {
  char setting = 'e';
  long param_count = 0;
  std::vector<double> gammas;
  std::vector<double> psnr_db;  // mean over eval images, per gamma
};
AblationRow ablation_run(char setting, const TrainConfig& base,
                         const std::string& eval_image_dir);

}  // namespace coast
