#include "coast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

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

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt_f64(v[i]);
  }
  return s;
}

void write_meta(const TrainConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("train: cannot write " + path);
  f << "sigma_lo=" << fmt_f64(cfg.sigma_lo) << "\n";
  f << "sigma_hi=" << fmt_f64(cfg.sigma_hi) << "\n";
  f << "gammas=" << join_doubles(cfg.gammas) << "\n";
  f << "n_s=" << cfg.n_s << "\n";
  f << "patch_side=" << cfg.patch_side << "\n";
  f << "seed=" << cfg.seed << "\n";
}

}  // namespace

RunMeta load_run_meta(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("load_run_meta: cannot open " + path);
  RunMeta meta;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "sigma_lo") meta.sigma_lo = std::stod(val);
    else if (key == "sigma_hi") meta.sigma_hi = std::stod(val);
    else if (key == "gammas") meta.gammas = parse_double_list(val);
    else if (key == "n_s") meta.n_s = std::stoi(val);
    else if (key == "patch_side") meta.patch_side = std::stoi(val);
    else if (key == "seed") meta.seed = std::stoull(val);
    else throw FormatError("load_run_meta: unknown key '" + key + "'");
  }
  return meta;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("train config: cannot open " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("train config: line " + std::to_string(lineno) +
                        " is not key=value");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "image_dir") cfg.image_dir = val;
      else if (key == "patch_count") cfg.patch_count = std::stoi(val);
      else if (key == "patch_side") cfg.patch_side = std::stoi(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "sigma_lo") cfg.sigma_lo = std::stod(val);
      else if (key == "sigma_hi") cfg.sigma_hi = std::stod(val);
      else if (key == "gammas") cfg.gammas = parse_double_list(val);
      else if (key == "n_s") cfg.n_s = std::stoi(val);
      else if (key == "phi_dir") cfg.phi_dir = val;
      else if (key == "phases") cfg.model.phases = std::stoi(val);
      else if (key == "blocks") cfg.model.blocks = std::stoi(val);
      else if (key == "channels") cfg.model.channels = std::stoi(val);
      else if (key == "cu_mode") {
        if (val == "off") cfg.model.cu_enabled = false;
        else if (val == "shared") { cfg.model.cu_enabled = true; cfg.model.cu_shared = true; }
        else if (val == "unshared") { cfg.model.cu_enabled = true; cfg.model.cu_shared = false; }
        else throw ConfigError("train config: cu_mode must be off|shared|unshared");
      }
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
      else if (key == "out_dir") cfg.out_dir = val;
      else if (key == "run_name") cfg.run_name = val;
      else throw ConfigError("train config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("train config: bad value for '" + key + "' on line " +
                        std::to_string(lineno));
    }
  }
  if (cfg.batch_size < 1) throw ConfigError("train config: batch_size >= 1");
  if (cfg.sigma_lo > cfg.sigma_hi)
    throw ConfigError("train config: sigma_lo > sigma_hi");
  if (cfg.patch_count < cfg.batch_size)
    throw ConfigError("train config: patch_count < batch_size");
  return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("train config: cannot write " + path);
  f << "image_dir=" << cfg.image_dir << "\n";
  f << "patch_count=" << cfg.patch_count << "\n";
  f << "patch_side=" << cfg.patch_side << "\n";
  f << "batch_size=" << cfg.batch_size << "\n";
  f << "epochs=" << cfg.epochs << "\n";
  f << "learning_rate=" << fmt_f64(cfg.learning_rate) << "\n";
  f << "seed=" << cfg.seed << "\n";
  f << "sigma_lo=" << fmt_f64(cfg.sigma_lo) << "\n";
  f << "sigma_hi=" << fmt_f64(cfg.sigma_hi) << "\n";
  f << "gammas=" << join_doubles(cfg.gammas) << "\n";
  f << "n_s=" << cfg.n_s << "\n";
  if (!cfg.phi_dir.empty()) f << "phi_dir=" << cfg.phi_dir << "\n";
  f << "phases=" << cfg.model.phases << "\n";
  f << "blocks=" << cfg.model.blocks << "\n";
  f << "channels=" << cfg.model.channels << "\n";
  f << "cu_mode="
    << (!cfg.model.cu_enabled ? "off"
                              : cfg.model.cu_shared ? "shared" : "unshared")
    << "\n";
  f << "checkpoint_every=" << cfg.checkpoint_every << "\n";
  f << "out_dir=" << cfg.out_dir << "\n";
  f << "run_name=" << cfg.run_name << "\n";
}

NdArray build_dataset(const std::string& image_dir, int patch_count,
                      int patch_side, uint64_t seed) {
  std::vector<Image> images;
  std::vector<double> weights;  // usable top-left position counts
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(image_dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG")
      paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw ConfigError("build_dataset: no readable images in " + image_dir);

  for (const auto& p : paths) {
    Image img = to_luminance(read_image(p.string()));
    if (img.height < patch_side || img.width < patch_side) {
      std::cerr << "build_dataset: skipping " << p
                << " (smaller than patch side " << patch_side << ")\n";
      continue;
    }
    weights.push_back(static_cast<double>(img.height) * img.width);
    images.push_back(std::move(img));
  }
  if (images.empty())
    throw ConfigError("build_dataset: every image in " + image_dir +
                      " is smaller than the patch side");

  std::vector<double> cumulative(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  const double total = cumulative.back();

  Rng rng(splitmix64(seed ^ 0xDA7A'5E7ull));
  const int n = patch_side * patch_side;
  NdArray patches({patch_count, n});
  for (int i = 0; i < patch_count; ++i) {
    const double pick = rng.uniform() * total;
    const std::size_t idx = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin());
    const Image& img = images[std::min(idx, images.size() - 1)];
    const int y0 =
        static_cast<int>(rng.below(img.height - patch_side + 1));
    const int x0 = static_cast<int>(rng.below(img.width - patch_side + 1));
    for (int y = 0; y < patch_side; ++y)
      for (int x = 0; x < patch_side; ++x)
        patches.at(i, y * patch_side + x) = img.at(0, y0 + y, x0 + x);
  }
  return patches;
}

double batch_loss(const NdArray& xhat, const NdArray& x) {
  return ad::kernels::mse(xhat, x);
}

AugmentedSet build_matrix_set(const TrainConfig& cfg) {
  if (!cfg.phi_dir.empty()) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(cfg.phi_dir))
      if (e.is_regular_file() && e.path().extension() == ".bin")
        paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
      throw ConfigError("build_matrix_set: no *.bin matrices in " +
                        cfg.phi_dir);
    AugmentedSet set;
    set.base_count = static_cast<int>(paths.size());
    set.per_base = 1;
    for (const auto& p : paths) set.matrices.push_back(load_matrix(p.string()));
    return set;
  }

  const int n = cfg.patch_side * cfg.patch_side;
  std::vector<std::tuple<int, int, uint64_t>> bases;
  for (std::size_t i = 0; i < cfg.gammas.size(); ++i) {
    const int m = static_cast<int>(std::lround(cfg.gammas[i] * n));
    if (m < 1 || m > n)
      throw ConfigError("build_matrix_set: gamma " +
                        std::to_string(cfg.gammas[i]) + " gives M out of range");
    bases.emplace_back(m, n, splitmix64(cfg.seed ^ 0xBA5E'0000ull) + i);
  }
  return rpa_augment(bases, cfg.n_s, splitmix64(cfg.seed ^ 0xA06'3E7ull));
}

TrainState train(const TrainConfig& cfg) {
  using clock = std::chrono::steady_clock;

  fs::create_directories(cfg.out_dir);
  const std::string ckpt_path =
      (fs::path(cfg.out_dir) / (cfg.run_name + ".ckpt")).string();
  const std::string meta_path = ckpt_path + ".meta";
  const std::string csv_path =
      (fs::path(cfg.out_dir) / (cfg.run_name + "_loss.csv")).string();

  const AugmentedSet set = build_matrix_set(cfg);
  if (set.matrices.empty()) throw ConfigError("train: empty matrix set");
  const NdArray dataset =
      build_dataset(cfg.image_dir, cfg.patch_count, cfg.patch_side, cfg.seed);

  TrainState st;
  st.params = init_params(cfg.model, splitmix64(cfg.seed ^ 0x1217'AB1Eull));
  st.adam.learning_rate = cfg.learning_rate;

  Rng loop_rng(splitmix64(cfg.seed ^ 0x100'Full));
  std::vector<int> order(cfg.patch_count);
  std::iota(order.begin(), order.end(), 0);

  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw FormatError("train: cannot write " + csv_path);
  csv << "epoch,mean_loss,wall_seconds\n";
  write_meta(cfg, meta_path);

  const int batches = cfg.patch_count / cfg.batch_size;
  const int n = cfg.patch_side * cfg.patch_side;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    // Fisher-Yates with the loop generator keeps the whole run a pure
    // function of the seed.
    for (int i = cfg.patch_count - 1; i > 0; --i) {
      const int j = static_cast<int>(loop_rng.below(i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
      const SamplingMatrix& phi =
          set.matrices[loop_rng.below(set.matrices.size())];
      const double sigma = cfg.sigma_lo == cfg.sigma_hi
                               ? cfg.sigma_lo
                               : loop_rng.uniform(cfg.sigma_lo, cfg.sigma_hi);

      NdArray x({cfg.batch_size, n});
      for (int i = 0; i < cfg.batch_size; ++i) {
        const int src = order[b * cfg.batch_size + i];
        std::memcpy(&x.at(i, 0), &dataset.at(src, 0), sizeof(double) * n);
      }

      const Measurement meas = measure(x, phi, sigma, loop_rng.next_u64());
      const ConditionVector z{phi.ratio(), sigma};

      ad::Tape tape;
      std::vector<ad::Value> lifted;
      const ad::Value xhat =
          coast_forward(tape, st.params, meas.y, phi, z, 0, 0, false, lifted);
      const ad::Value loss = tape.mse(xhat, tape.constant(x));
      const double loss_val = tape.value(loss)[0];
      if (!std::isfinite(loss_val)) {
        save_checkpoint(st.params, ckpt_path);
        throw NumericalError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + " batch " +
                             std::to_string(b) + "; checkpoint dumped");
      }
      tape.backward(loss);

      std::vector<NdArray> grads;
      grads.reserve(lifted.size());
      for (const auto& v : lifted) grads.push_back(tape.grad(v));
      adam_step(st.params.set, grads, st.adam);
      loss_sum += loss_val;
    }

    st.epoch = epoch + 1;
    st.loss_history.push_back(loss_sum / batches);
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    csv << epoch + 1 << "," << fmt_f64(st.loss_history.back()) << ","
        << fmt_f64(secs) << "\n";
    csv.flush();
    std::cerr << "epoch " << epoch + 1 << "/" << cfg.epochs
              << " mean_loss=" << st.loss_history.back() << " (" << secs
              << "s)\n";

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_e%04d.ckpt", epoch + 1);
      save_checkpoint(st.params,
                      (fs::path(cfg.out_dir) / (cfg.run_name + suffix)).string());
    }
  }

  save_checkpoint(st.params, ckpt_path);
  return st;
}

AblationRow ablation_run(char setting, const TrainConfig& base,
                         const std::string& eval_image_dir) {
  if (setting < 'a' || setting > 'e')
    throw ContractError("ablation_run: setting must be a..e");

  TrainConfig cfg = base;
  bool eval_pnp_d = false;
  switch (setting) {
    case 'a':
      cfg.n_s = 1;
      cfg.model.cu_enabled = false;
      break;
    case 'b':
      cfg.model.cu_enabled = false;
      break;
    case 'c':
      cfg.model.cu_enabled = true;
      cfg.model.cu_shared = false;
      break;
    case 'd':
      cfg.model.cu_enabled = true;
      cfg.model.cu_shared = true;
      break;
    case 'e':
      cfg.model.cu_enabled = true;
      cfg.model.cu_shared = true;
      eval_pnp_d = true;
      break;
  }
  if (setting != 'a' && cfg.n_s < 2)
    throw ConfigError("ablation_run: settings b..e need n_s >= 2");

  const TrainState st = cfg.epochs > 0
                            ? train(cfg)
                            : TrainState{init_params(cfg.model,
                                                     splitmix64(cfg.seed ^
                                                                0x1217'AB1Eull)),
                                         AdamState{}, 0, {}};

  AblationRow row;
  row.setting = setting;
  row.param_count = count_params(cfg.model);
  row.gammas = cfg.gammas;

  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(eval_image_dir))
    if (e.is_regular_file()) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw ConfigError("ablation_run: no eval images in " + eval_image_dir);

  const int n = cfg.patch_side * cfg.patch_side;
  for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
    const double gamma = cfg.gammas[gi];
    const int m = static_cast<int>(std::lround(gamma * n));
    // Reuses the base-seed derivation of build_matrix_set, so this is the
    // seen matrix for the ratio.
    const SamplingMatrix phi =
        gen_frgm(m, n, splitmix64(cfg.seed ^ 0xBA5E'0000ull) + gi);
    double total = 0.0;
    for (const auto& p : paths) {
      const Image img = to_luminance(read_image(p.string()));
      const PatchGrid grid = partition(img, cfg.patch_side);
      const Measurement meas = measure(grid.patches, phi, 0.0, 0);
      const NdArray rec =
          coast_infer(st.params, meas.y, phi, ConditionVector{gamma, 0.0},
                      grid.rows, grid.cols, eval_pnp_d);
      total += psnr(grid_to_image(grid, rec), img);
    }
    row.psnr_db.push_back(total / paths.size());
  }
  return row;
}

}  // namespace coast
