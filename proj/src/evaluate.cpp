#include "coast/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "coast/blocks.hpp"
#include "coast/metrics.hpp"
#include "coast/rng.hpp"

namespace coast {

namespace fs = std::filesystem;

namespace {

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string image_id(const std::string& path) {
  return fs::path(path).stem().string();
}

// Nominal ratios like 0.3 select the matrix whose row count rounds from
// them (327/1089 != 0.3 exactly).
bool ratio_matches(const SamplingMatrix& m, double gamma) {
  return m.rows == static_cast<int>(std::lround(gamma * m.cols));
}

}  // namespace

std::vector<std::string> list_images(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG")
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("eval report: cannot write " + path);
  f << "dataset,matrix_id,seen,gamma,sigma,method,psnr_db,ssim,seconds\n";
  for (const auto& r : rows)
    f << r.dataset << "," << r.matrix_id << "," << (r.seen ? 1 : 0) << ","
      << fmt_f64(r.gamma) << "," << fmt_f64(r.sigma) << "," << r.method << ","
      << fmt_f64(r.psnr_db) << "," << fmt_f64(r.ssim) << ","
      << fmt_f64(r.seconds) << "\n";
}

double EvalReport::mean_psnr(bool seen_only, double gamma) const {
  double total = 0.0;
  int count = 0;
  for (const auto& r : rows)
    if (r.seen == seen_only && std::fabs(r.gamma - gamma) < 1e-3) {
      total += r.psnr_db;
      ++count;
    }
  if (count == 0) throw ContractError("mean_psnr: no matching rows");
  return total / count;
}

EvalRow eval_one(const CoastParams& model, const SamplingMatrix& phi,
                 bool seen, const std::string& image_path, double sigma,
                 uint64_t noise_seed, bool pnp_d,
                 const std::string& image_out) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  const Image img = to_luminance(read_image(image_path));
  const PatchGrid grid = partition(img, phi.patch_side());
  const Measurement meas = measure(grid.patches, phi, sigma, noise_seed);
  const ConditionVector z{phi.ratio(), sigma};
  const NdArray rec =
      coast_infer(model, meas.y, phi, z, grid.rows, grid.cols, pnp_d);
  const Image out = grid_to_image(grid, rec);

  EvalRow row;
  row.dataset = image_id(image_path);
  row.matrix_id = phi.id();
  row.seen = seen;
  row.gamma = phi.ratio();
  row.sigma = sigma;
  row.method = "coast";
  row.psnr_db = psnr(out, img);
  row.ssim = ssim(out, img);
  row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  if (!image_out.empty()) write_image(out, image_out);
  return row;
}

EvalReport eval_seen_unseen(const CoastParams& model, const AugmentedSet& seen,
                            const std::vector<uint64_t>& unseen_seeds,
                            const std::vector<std::string>& image_paths,
                            const std::vector<double>& gammas, double sigma,
                            uint64_t noise_seed, bool pnp_d) {
  for (const uint64_t s : unseen_seeds)
    for (const auto& m : seen.matrices)
      if (m.has_seed && m.seed == s)
        throw ContractError("eval_seen_unseen: unseen seed " +
                            std::to_string(s) + " collides with the seen set");

  EvalReport report;
  for (const double gamma : gammas) {
    // The seen matrix for this ratio is the first group member matching it.
    const SamplingMatrix* base = nullptr;
    for (const auto& m : seen.matrices)
      if (ratio_matches(m, gamma)) {
        base = &m;
        break;
      }
    if (!base)
      throw ContractError("eval_seen_unseen: no seen matrix for gamma " +
                          std::to_string(gamma));

    for (const auto& path : image_paths)
      report.rows.push_back(eval_one(model, *base, true, path, sigma,
                                     splitmix64(noise_seed ^ base->seed),
                                     pnp_d));
    for (const uint64_t s : unseen_seeds) {
      const SamplingMatrix phi = gen_frgm(base->rows, base->cols, s);
      for (const auto& path : image_paths)
        report.rows.push_back(eval_one(model, phi, false, path, sigma,
                                       splitmix64(noise_seed ^ s), pnp_d));
    }
  }
  return report;
}

EvalReport eval_ns_sweep(const TrainConfig& base,
                         const std::vector<int>& ns_list, double gamma,
                         const std::vector<std::string>& image_paths,
                         const std::vector<uint64_t>& unseen_seeds) {
  std::vector<int> sorted_ns = ns_list;
  std::sort(sorted_ns.begin(), sorted_ns.end());

  EvalReport report;
  for (const int ns : sorted_ns) {
    TrainConfig cfg = base;
    cfg.n_s = ns;
    cfg.run_name = base.run_name + "_ns" + std::to_string(ns);
    const TrainState st = train(cfg);
    const AugmentedSet set = build_matrix_set(cfg);

    EvalReport part =
        eval_seen_unseen(st.params, set, unseen_seeds, image_paths, {gamma},
                         0.0, splitmix64(cfg.seed ^ 0xE7A1ull), true);
    // One summary row per N_S: mean unseen PSNR, with the matrix column
    // recording the sweep point.
    EvalRow row;
    row.dataset = "mean";
    row.matrix_id = "ns=" + std::to_string(ns);
    row.seen = false;
    row.gamma = gamma;
    row.sigma = 0.0;
    row.method = "coast";
    double total = 0.0, ssim_total = 0.0;
    int count = 0;
    for (const auto& r : part.rows)
      if (!r.seen) {
        total += r.psnr_db;
        ssim_total += r.ssim;
        ++count;
      }
    row.psnr_db = total / count;
    row.ssim = ssim_total / count;
    report.rows.push_back(row);
  }
  return report;
}

EvalReport noise_sweep(const CoastParams& model, const RunMeta& meta,
                       const std::vector<double>& sigmas,
                       const std::vector<double>& gammas,
                       const std::vector<std::string>& image_paths,
                       uint64_t noise_seed, bool pnp_d) {
  const int n = meta.patch_side * meta.patch_side;
  EvalReport report;
  for (const double sigma : sigmas)
    for (const double gamma : gammas) {
      // Index within the training gamma list selects the seen base matrix.
      std::size_t gi = 0;
      bool found = false;
      for (; gi < meta.gammas.size(); ++gi)
        if (std::fabs(meta.gammas[gi] - gamma) < 1e-9) {
          found = true;
          break;
        }
      if (!found)
        throw ContractError("noise_sweep: gamma " + std::to_string(gamma) +
                            " was not in the training set");
      const int m = static_cast<int>(std::lround(gamma * n));
      const SamplingMatrix phi =
          gen_frgm(m, n, splitmix64(meta.seed ^ 0xBA5E'0000ull) + gi);
      for (const auto& path : image_paths) {
        EvalRow row = eval_one(model, phi, true, path, sigma,
                               splitmix64(noise_seed ^ phi.seed), pnp_d);
        report.rows.push_back(row);
      }
    }
  return report;
}

}  // namespace coast
