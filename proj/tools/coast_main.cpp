#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "coast/blocks.hpp"
#include "coast/evaluate.hpp"
#include "coast/ista.hpp"
#include "coast/metrics.hpp"
#include "coast/network.hpp"
#include "coast/sampling.hpp"
#include "coast/synth.hpp"
#include "coast/training.hpp"

namespace fs = std::filesystem;
using namespace coast;

namespace {

// Flag problems detected after CLI11 parsing; mapped to exit code 1
// before any output file is touched.
struct UsageError {
  std::string msg;
};

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  return out;
}

CoastConfig config_from_flags(int np, int nc, int c, const std::string& cu) {
  CoastConfig cfg;
  cfg.phases = np;
  cfg.blocks = nc;
  cfg.channels = c;
  if (cu == "off") {
    cfg.cu_enabled = false;
  } else if (cu == "shared") {
    cfg.cu_enabled = true;
    cfg.cu_shared = true;
  } else if (cu == "unshared") {
    cfg.cu_enabled = true;
    cfg.cu_shared = false;
  } else {
    throw UsageError{"--cu must be off, shared, or unshared"};
  }
  return cfg;
}

AugmentedSet set_from_meta(const RunMeta& meta) {
  TrainConfig cfg;
  cfg.seed = meta.seed;
  cfg.gammas = meta.gammas;
  cfg.n_s = meta.n_s;
  cfg.patch_side = meta.patch_side;
  return build_matrix_set(cfg);
}

int cmd_gen_phi(double ratio, int side, uint64_t seed, int count,
                const std::string& out_dir) {
  if (ratio <= 0.0 || ratio > 1.0)
    throw UsageError{"--ratio must be in (0, 1]"};
  if (side < 1) throw UsageError{"--patch-side must be >= 1"};
  if (count < 1) throw UsageError{"--count must be >= 1"};
  const int n = side * side;
  const int m = static_cast<int>(std::lround(ratio * n));
  if (m < 1) throw UsageError{"ratio gives M = 0 rows"};

  fs::create_directories(out_dir);
  const AugmentedSet set = rpa_augment({{m, n, seed}}, count, seed);
  for (const auto& phi : set.matrices) {
    char name[64];
    std::snprintf(name, sizeof(name), "phi_%dx%d_%llu.bin", phi.rows, phi.cols,
                  static_cast<unsigned long long>(phi.seed));
    const std::string path = (fs::path(out_dir) / name).string();
    save_matrix(phi, path);
    std::cout << path << "\n";
  }
  return 0;
}

int cmd_reconstruct(const std::string& method, const std::string& phi_path,
                    const std::string& ckpt, const std::string& in_path,
                    const std::string& out_path, double sigma, uint64_t seed,
                    bool no_pnpd, const std::string& ref_path, double lambda,
                    int iters) {
  const SamplingMatrix phi = load_matrix(phi_path);
  const Image img = to_luminance(read_image(in_path));
  const PatchGrid grid = partition(img, phi.patch_side());
  const Measurement meas = measure(grid.patches, phi, sigma, seed);

  NdArray rec;
  if (method == "coast") {
    if (ckpt.empty())
      throw ConfigError("reconstruct: --method coast requires --ckpt");
    const CoastParams params = load_checkpoint(ckpt);
    rec = coast_infer(params, meas.y, phi, ConditionVector{phi.ratio(), sigma},
                      grid.rows, grid.cols, !no_pnpd);
  } else if (method == "ista") {
    IstaConfig cfg;
    cfg.lambda = lambda;
    cfg.max_iters = iters;
    rec = NdArray({grid.count(), phi.cols});
    for (int b = 0; b < grid.count(); ++b) {
      NdArray y({phi.rows});
      for (int i = 0; i < phi.rows; ++i) y[i] = meas.y.at(b, i);
      const IstaResult r = ista_solve(y, phi, cfg);
      for (int i = 0; i < phi.cols; ++i) rec.at(b, i) = r.xhat[i];
    }
  } else if (method == "pinv") {
    rec = pinv_reconstruct(meas.y, phi);
  } else {
    throw UsageError{"--method must be coast, ista, or pinv"};
  }

  const Image out = grid_to_image(grid, rec);
  write_image(out, out_path);

  const Image& ref = ref_path.empty() ? img : to_luminance(read_image(ref_path));
  std::printf("psnr_db=%.4f ssim=%.6f\n", psnr(out, ref), ssim(out, ref));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COAST compressive sensing: sampling, training, "
               "reconstruction, evaluation"};
  app.require_subcommand(1);

  // gen-phi
  double ratio = 0.0;
  int patch_side = 33, count = 1;
  uint64_t seed = 1;
  std::string out_dir;
  auto* gen_phi = app.add_subcommand("gen-phi", "Generate FRGM matrix files");
  gen_phi->add_option("--ratio", ratio, "CS ratio M/N in (0,1]")->required();
  gen_phi->add_option("--patch-side", patch_side, "patch side, N = side^2");
  gen_phi->add_option("--seed", seed, "base matrix seed");
  gen_phi->add_option("--count", count, "matrices per base (N_S)");
  gen_phi->add_option("--out", out_dir, "output directory")->required();

  // gen-data
  int data_count = 16, data_h = 128, data_w = 128;
  uint64_t data_seed = 7;
  std::string data_dir;
  auto* gen_data =
      app.add_subcommand("gen-data", "Generate a synthetic image dataset");
  gen_data->add_option("--out", data_dir, "output directory")->required();
  gen_data->add_option("--count", data_count, "number of images");
  gen_data->add_option("--height", data_h, "image height");
  gen_data->add_option("--width", data_w, "image width");
  gen_data->add_option("--seed", data_seed, "dataset seed");

  // train
  std::string train_config_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_config_path, "key=value config file")
      ->required();

  // reconstruct
  std::string method, phi_path, ckpt_path, in_path, out_path, ref_path;
  double sigma = 0.0, lambda = 0.01;
  int iters = 400;
  uint64_t noise_seed = 0;
  bool no_pnpd = false;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Reconstruct one image");
  rec_cmd->add_option("--method", method, "coast | ista | pinv")->required();
  rec_cmd->add_option("--phi", phi_path, "sampling matrix file")->required();
  rec_cmd->add_option("--ckpt", ckpt_path, "checkpoint (coast)");
  rec_cmd->add_option("--in", in_path, "input image")->required();
  rec_cmd->add_option("--out", out_path, "output image")->required();
  rec_cmd->add_option("--sigma", sigma, "measurement noise std, [0,1] units");
  rec_cmd->add_option("--seed", noise_seed, "noise seed");
  rec_cmd->add_flag("--no-pnpd", no_pnpd, "disable PnP deblocking");
  rec_cmd->add_option("--ref", ref_path, "reference image for metrics");
  rec_cmd->add_option("--lambda", lambda, "ista l1 weight");
  rec_cmd->add_option("--iters", iters, "ista max iterations");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation runners");
  eval_cmd->require_subcommand(1);
  std::string eval_ckpt, eval_images, eval_csv, eval_config, gammas_str,
      sigmas_str, seeds_str = "1009", ns_str = "1,5";
  double eval_sigma = 0.0, sweep_gamma = 0.3;
  uint64_t eval_seed = 0;
  bool eval_no_pnpd = false;
  char ablate_setting = 'e';

  auto* su = eval_cmd->add_subcommand("seen-unseen",
                                      "Seen vs unseen matrix comparison");
  su->add_option("--ckpt", eval_ckpt)->required();
  su->add_option("--images", eval_images, "image directory")->required();
  su->add_option("--gammas", gammas_str, "comma list; default: training set");
  su->add_option("--unseen-seeds", seeds_str, "comma list of FRGM seeds");
  su->add_option("--sigma", eval_sigma);
  su->add_option("--seed", eval_seed, "noise seed");
  su->add_flag("--no-pnpd", eval_no_pnpd);
  su->add_option("--out", eval_csv, "report CSV path")->required();

  auto* ns = eval_cmd->add_subcommand("ns-sweep", "Train across N_S values");
  ns->add_option("--config", eval_config, "train config file")->required();
  ns->add_option("--ns", ns_str, "comma list of N_S values");
  ns->add_option("--gamma", sweep_gamma);
  ns->add_option("--images", eval_images)->required();
  ns->add_option("--unseen-seeds", seeds_str);
  ns->add_option("--out", eval_csv)->required();

  auto* nz = eval_cmd->add_subcommand("noise-sweep",
                                      "Evaluate across noise levels");
  nz->add_option("--ckpt", eval_ckpt)->required();
  nz->add_option("--images", eval_images)->required();
  nz->add_option("--sigmas", sigmas_str, "comma list")->required();
  nz->add_option("--gammas", gammas_str, "comma list; default: training set");
  nz->add_option("--seed", eval_seed, "noise seed");
  nz->add_flag("--no-pnpd", eval_no_pnpd);
  nz->add_option("--out", eval_csv)->required();

  auto* ab = eval_cmd->add_subcommand("ablate", "Run one ablation setting");
  ab->add_option("--setting", ablate_setting, "a..e")->required();
  ab->add_option("--config", eval_config, "train config file")->required();
  ab->add_option("--images", eval_images)->required();
  ab->add_option("--out", eval_csv)->required();

  // count-params
  int np = 20, nc = 3, c = 32;
  std::string cu_mode = "shared";
  auto* cp = app.add_subcommand("count-params", "Learnable parameter count");
  cp->add_option("--np", np, "phases");
  cp->add_option("--nc", nc, "blocks per phase");
  cp->add_option("--c", c, "channels");
  cp->add_option("--cu", cu_mode, "off | shared | unshared");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen_phi->parsed())
      return cmd_gen_phi(ratio, patch_side, seed, count, out_dir);

    if (gen_data->parsed()) {
      const auto paths =
          write_synth_dataset(data_dir, data_count, data_h, data_w, data_seed);
      std::cout << paths.size() << " images in " << data_dir << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const TrainConfig cfg = load_train_config(train_config_path);
      const TrainState st = train(cfg);
      std::cout << "final_loss=" << st.loss_history.back() << " ckpt="
                << (fs::path(cfg.out_dir) / (cfg.run_name + ".ckpt")).string()
                << "\n";
      return 0;
    }

    if (rec_cmd->parsed())
      return cmd_reconstruct(method, phi_path, ckpt_path, in_path, out_path,
                             sigma, noise_seed, no_pnpd, ref_path, lambda,
                             iters);

    if (su->parsed()) {
      const CoastParams model = load_checkpoint(eval_ckpt);
      const RunMeta meta = load_run_meta(eval_ckpt + ".meta");
      const AugmentedSet set = set_from_meta(meta);
      const auto gammas =
          gammas_str.empty() ? meta.gammas : parse_doubles(gammas_str);
      const EvalReport report = eval_seen_unseen(
          model, set, parse_seeds(seeds_str), list_images(eval_images), gammas,
          eval_sigma, eval_seed, !eval_no_pnpd);
      report.write_csv(eval_csv);
      std::cout << report.rows.size() << " rows -> " << eval_csv << "\n";
      return 0;
    }

    if (ns->parsed()) {
      const TrainConfig base = load_train_config(eval_config);
      std::vector<int> ns_list;
      for (double v : parse_doubles(ns_str))
        ns_list.push_back(static_cast<int>(v));
      const EvalReport report =
          eval_ns_sweep(base, ns_list, sweep_gamma, list_images(eval_images),
                        parse_seeds(seeds_str));
      report.write_csv(eval_csv);
      std::cout << report.rows.size() << " rows -> " << eval_csv << "\n";
      return 0;
    }

    if (nz->parsed()) {
      const CoastParams model = load_checkpoint(eval_ckpt);
      const RunMeta meta = load_run_meta(eval_ckpt + ".meta");
      const auto gammas =
          gammas_str.empty() ? meta.gammas : parse_doubles(gammas_str);
      const EvalReport report = noise_sweep(
          model, meta, parse_doubles(sigmas_str), gammas,
          list_images(eval_images), eval_seed, !eval_no_pnpd);
      report.write_csv(eval_csv);
      std::cout << report.rows.size() << " rows -> " << eval_csv << "\n";
      return 0;
    }

    if (ab->parsed()) {
      const TrainConfig base = load_train_config(eval_config);
      const AblationRow row = ablation_run(ablate_setting, base, eval_images);
      std::ofstream f(eval_csv, std::ios::trunc);
      f << "setting,parameters,gamma,psnr_db\n";
      for (std::size_t i = 0; i < row.gammas.size(); ++i)
        f << row.setting << "," << row.param_count << "," << row.gammas[i]
          << "," << row.psnr_db[i] << "\n";
      std::cout << "setting " << row.setting << " parameters "
                << row.param_count << " -> " << eval_csv << "\n";
      return 0;
    }

    if (cp->parsed()) {
      std::cout << count_params(config_from_flags(np, nc, c, cu_mode)) << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.msg << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const CoastError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
