#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coast/network.hpp"
#include "coast/sampling.hpp"
#include "coast/training.hpp"

namespace coast {

struct EvalRow {
  std::string dataset;    // image id
  std::string matrix_id;
  bool seen = true;
  double gamma = 0.0;
  double sigma = 0.0;
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double seconds = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  // CSV with header dataset,matrix_id,seen,gamma,sigma,method,psnr_db,
  // ssim,seconds.
  void write_csv(const std::string& path) const;

  double mean_psnr(bool seen_only, double gamma) const;
};

// Reconstructs one image through measure -> coast -> fold and returns the
// report row. When image_out is non-empty the reconstruction is written
// there.
EvalRow eval_one(const CoastParams& model, const SamplingMatrix& phi,
                 bool seen, const std::string& image_path, double sigma,
                 uint64_t noise_seed, bool pnp_d,
                 const std::string& image_out = "");

// For each gamma: reconstructs every test image under the seen base matrix
// of that ratio and under one fresh FRGM per unseen seed. Unseen seeds must
// not collide with any seed in the seen set.
EvalReport eval_seen_unseen(const CoastParams& model, const AugmentedSet& seen,
                            const std::vector<uint64_t>& unseen_seeds,
                            const std::vector<std::string>& image_paths,
                            const std::vector<double>& gammas, double sigma,
                            uint64_t noise_seed, bool pnp_d);

// Trains one desk-scale model per N_S value (same seed) and reports the
// unseen-matrix PSNR at the fixed gamma, rows sorted ascending by N_S.
EvalReport eval_ns_sweep(const TrainConfig& base,
                         const std::vector<int>& ns_list, double gamma,
                         const std::vector<std::string>& image_paths,
                         const std::vector<uint64_t>& unseen_seeds);

// Evaluates the model across the sigma x gamma grid with z = [gamma,
// sigma] fed to the CU; matrices are the seen bases from meta.
EvalReport noise_sweep(const CoastParams& model, const RunMeta& meta,
                       const std::vector<double>& sigmas,
                       const std::vector<double>& gammas,
                       const std::vector<std::string>& image_paths,
                       uint64_t noise_seed, bool pnp_d);

// Sorted image files (*.pgm / *.png) of a directory.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace coast
