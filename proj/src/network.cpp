#include "coast/network.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "coast/rng.hpp"

namespace coast {

namespace {

constexpr char kMagic[9] = {'C', 'O', 'A', 'S', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void check_config(const CoastConfig& cfg) {
  if (cfg.phases < 1 || cfg.blocks < 1 || cfg.channels < 1)
    throw ConfigError("coast config: phases, blocks, channels must be >= 1");
}

std::string pname(int k, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "phase%d.%s", k, what);
  return buf;
}
std::string bname(int k, int j, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "phase%d.block%d.%s", k, j, what);
  return buf;
}

}  // namespace

ParamLayout::ParamLayout(const CoastConfig& cfg)
    : phases(cfg.phases),
      blocks(cfg.blocks),
      phase_stride(4 * cfg.blocks + 5),
      cu_shared(cfg.cu_shared),
      cu_enabled(cfg.cu_enabled) {}

int ParamLayout::cu_w(int k, int j) const {
  if (!cu_enabled) throw ContractError("param layout: CU is disabled");
  const int base = phases * phase_stride;
  if (cu_shared) return base;
  return base + 2 * (k * blocks + j);
}

int ParamLayout::total() const {
  int n = phases * phase_stride;
  if (cu_enabled) n += cu_shared ? 2 : 2 * phases * blocks;
  return n;
}

long count_params(const CoastConfig& cfg) {
  check_config(cfg);
  const long c = cfg.channels;
  const long per_phase = (9 * c + c)                 // conv-in
                         + cfg.blocks * 2 * (9 * c * c + c)  // block convs
                         + (9 * c + 1)               // conv-out
                         + 1;                        // rho
  long cu = 0;
  if (cfg.cu_enabled) {
    const long one = 2 * c + c;
    cu = cfg.cu_shared ? one : cfg.phases * cfg.blocks * one;
  }
  return cfg.phases * per_phase + cu;
}

CoastParams init_params(const CoastConfig& cfg, uint64_t seed) {
  check_config(cfg);
  const int c = cfg.channels;
  CoastParams p;
  p.config = cfg;

  Rng rng(splitmix64(seed ^ 0xC0A57'1417ull));
  auto conv = [&](int cout, int cin, double std) {
    NdArray w({cout, cin, 3, 3});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
    return w;
  };
  auto fan_in = [](int cin) { return std::sqrt(2.0 / (9.0 * cin)); };
  auto cu_weight = [&]() {
    NdArray w({c, 2});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * rng.normal();
    return w;
  };

  for (int k = 0; k < cfg.phases; ++k) {
    p.set.items.push_back({pname(k, "conv_in.w"), conv(c, 1, fan_in(1))});
    p.set.items.push_back({pname(k, "conv_in.b"), NdArray({c})});
    for (int j = 0; j < cfg.blocks; ++j) {
      p.set.items.push_back({bname(k, j, "conv1.w"), conv(c, c, fan_in(c))});
      p.set.items.push_back({bname(k, j, "conv1.b"), NdArray({c})});
      p.set.items.push_back({bname(k, j, "conv2.w"), conv(c, c, fan_in(c))});
      p.set.items.push_back({bname(k, j, "conv2.b"), NdArray({c})});
    }
    // Small output-conv init keeps every phase near the identity mapping
    // at the start; fan-in scale here compounds across unfolded phases
    // and blows the initial estimate up by orders of magnitude.
    p.set.items.push_back({pname(k, "conv_out.w"), conv(1, c, 1e-3)});
    p.set.items.push_back({pname(k, "conv_out.b"), NdArray({1})});
    p.set.items.push_back({pname(k, "rho"), NdArray({1}, 1.0)});
  }
  if (cfg.cu_enabled) {
    if (cfg.cu_shared) {
      p.set.items.push_back({"cu.w", cu_weight()});
      p.set.items.push_back({"cu.b", NdArray({c}, 1.0)});
    } else {
      for (int k = 0; k < cfg.phases; ++k)
        for (int j = 0; j < cfg.blocks; ++j) {
          p.set.items.push_back({bname(k, j, "cu.w"), cu_weight()});
          p.set.items.push_back({bname(k, j, "cu.b"), NdArray({c}, 1.0)});
        }
    }
  }

  if (static_cast<long>(p.set.scalar_count()) != count_params(cfg))
    throw ContractError("init_params: parameter count mismatch");
  return p;
}

NdArray init_x0(const SamplingMatrix& phi, const NdArray& y) {
  if (y.ndim() != 2 || y.dim(1) != phi.rows)
    throw DimensionError("init_x0: y must be {B, M}");
  return NdArray({y.dim(0), phi.cols});
}

NdArray gdm(const NdArray& xhat, const SamplingMatrix& phi, const NdArray& y,
            double rho) {
  using ad::kernels::matvec;
  using ad::kernels::sub;
  NdArray residual = sub(matvec(xhat, phi.data, false), y);
  NdArray step = matvec(residual, phi.data, true);
  NdArray out = xhat;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= rho * step[i];
  return out;
}

NdArray cu_forward(const ConditionVector& z, const NdArray& w,
                   const NdArray& b) {
  return ad::kernels::fc(z.as_array(), w, b);
}

CpmmView phase_view(const CoastParams& params, int k) {
  const ParamLayout L(params.config);
  const auto& it = params.set.items;
  CpmmView v;
  v.w_in = &it[L.conv_in_w(k)].value;
  v.b_in = &it[L.conv_in_b(k)].value;
  v.w_out = &it[L.conv_out_w(k)].value;
  v.b_out = &it[L.conv_out_b(k)].value;
  v.rho = it[L.rho(k)].value[0];
  for (int j = 0; j < params.config.blocks; ++j) {
    CpmbView b;
    b.w1 = &it[L.block_w1(k, j)].value;
    b.b1 = &it[L.block_b1(k, j)].value;
    b.w2 = &it[L.block_w2(k, j)].value;
    b.b2 = &it[L.block_b2(k, j)].value;
    b.cu_w = params.config.cu_enabled ? &it[L.cu_w(k, j)].value : nullptr;
    b.cu_b = params.config.cu_enabled ? &it[L.cu_b(k, j)].value : nullptr;
    v.blocks.push_back(b);
  }
  return v;
}

NdArray cpmb_forward(const NdArray& f, const ConditionVector& z,
                     const CpmbView& p) {
  using namespace ad::kernels;
  NdArray u = conv2d(relu(conv2d(f, *p.w1, *p.b1)), *p.w2, *p.b2);
  if (p.cu_w) u = channel_scale(u, cu_forward(z, *p.cu_w, *p.cu_b));
  return add(u, f);
}

NdArray cpmm_forward(const NdArray& r, const ConditionVector& z,
                     const CpmmView& p) {
  using namespace ad::kernels;
  NdArray t = conv2d(r, *p.w_in, *p.b_in);
  for (const auto& blk : p.blocks) t = cpmb_forward(t, z, blk);
  return add(r, conv2d(t, *p.w_out, *p.b_out));
}

NdArray coast_infer(const CoastParams& params, const NdArray& y,
                    const SamplingMatrix& phi, const ConditionVector& z,
                    int grid_rows, int grid_cols, bool pnp_d) {
  const int bs = y.dim(0);
  const int side = phi.patch_side();
  if (pnp_d && grid_rows * grid_cols != bs)
    throw DimensionError("coast_infer: grid " + std::to_string(grid_rows) +
                         "x" + std::to_string(grid_cols) +
                         " does not cover batch of " + std::to_string(bs));

  NdArray x = init_x0(phi, y);
  for (int k = 0; k < params.config.phases; ++k) {
    const CpmmView view = phase_view(params, k);
    NdArray r = gdm(x, phi, y, view.rho);
    NdArray r4 = r.reshaped({bs, 1, side, side});
    NdArray xk;
    if (pnp_d) {
      NdArray whole = ad::kernels::fold_grid(r4, grid_rows, grid_cols);
      NdArray rec = cpmm_forward(whole, z, view);
      xk = ad::kernels::unfold_grid(rec, grid_rows, grid_cols);
    } else {
      xk = cpmm_forward(r4, z, view);
    }
    x = xk.reshaped({bs, phi.cols});
  }
  return x;
}

ad::Value coast_forward(ad::Tape& tape, const CoastParams& params,
                        const NdArray& y, const SamplingMatrix& phi,
                        const ConditionVector& z, int grid_rows,
                        int grid_cols, bool pnp_d,
                        std::vector<ad::Value>& lifted) {
  using ad::Value;
  const int bs = y.dim(0);
  const int side = phi.patch_side();
  if (pnp_d && grid_rows * grid_cols != bs)
    throw DimensionError("coast_forward: grid does not cover batch");

  lifted.clear();
  lifted.reserve(params.set.items.size());
  for (const auto& item : params.set.items)
    lifted.push_back(tape.leaf(item.value));

  const ParamLayout L(params.config);
  const Value y_const = tape.constant(y);
  const Value z_const = tape.constant(z.as_array());

  // Shared CU output is one node reused across phases.
  Value shared_cu{};
  if (params.config.cu_enabled && params.config.cu_shared)
    shared_cu = tape.fc(z_const, lifted[L.cu_w(0, 0)], lifted[L.cu_b(0, 0)]);

  Value x = tape.constant(init_x0(phi, y));
  for (int k = 0; k < params.config.phases; ++k) {
    // GDM: r = x - rho * phi^T (phi x - y).
    Value resid = tape.sub(tape.matvec(x, &phi.data, false), y_const);
    Value step = tape.matvec(resid, &phi.data, true);
    Value r = tape.sub(x, tape.scale(lifted[L.rho(k)], step));

    Value r4 = tape.reshape(r, {bs, 1, side, side});
    if (pnp_d) r4 = tape.fold(r4, grid_rows, grid_cols);

    Value t = tape.conv2d(r4, lifted[L.conv_in_w(k)], lifted[L.conv_in_b(k)]);
    for (int j = 0; j < params.config.blocks; ++j) {
      Value u = tape.conv2d(t, lifted[L.block_w1(k, j)],
                            lifted[L.block_b1(k, j)]);
      u = tape.relu(u);
      u = tape.conv2d(u, lifted[L.block_w2(k, j)], lifted[L.block_b2(k, j)]);
      if (params.config.cu_enabled) {
        Value cu = params.config.cu_shared
                       ? shared_cu
                       : tape.fc(z_const, lifted[L.cu_w(k, j)],
                                 lifted[L.cu_b(k, j)]);
        u = tape.channel_scale(u, cu);
      }
      t = tape.add(u, t);
    }
    Value out = tape.add(
        r4, tape.conv2d(t, lifted[L.conv_out_w(k)], lifted[L.conv_out_b(k)]));
    if (pnp_d) out = tape.unfold(out, grid_rows, grid_cols);
    x = tape.reshape(out, {bs, phi.cols});
  }
  return x;
}

void save_checkpoint(const CoastParams& params, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 9);
  put_u32(buf, 1);
  put_u32(buf, static_cast<uint32_t>(params.config.phases));
  put_u32(buf, static_cast<uint32_t>(params.config.blocks));
  put_u32(buf, static_cast<uint32_t>(params.config.channels));
  buf.push_back(params.config.cu_shared ? 1 : 0);
  buf.push_back(params.config.cu_enabled ? 1 : 0);
  for (const auto& item : params.set.items)
    for (std::size_t i = 0; i < item.value.size(); ++i) {
      uint64_t bits;
      std::memcpy(&bits, &item.value[i], 8);
      for (int b = 0; b < 8; ++b)
        buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("save_checkpoint: cannot open " + tmp);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw FormatError("save_checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("save_checkpoint: rename to " + path + " failed");
}

CoastParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < 27)
    throw FormatError("load_checkpoint: truncated header in " + path);
  if (std::memcmp(p, kMagic, 9) != 0)
    throw FormatError("load_checkpoint: magic mismatch at byte 0 in " + path);
  const uint32_t version = get_u32(p + 9);
  if (version != 1)
    throw FormatError("load_checkpoint: unsupported version " +
                      std::to_string(version) + " in " + path);

  CoastConfig cfg;
  cfg.phases = static_cast<int>(get_u32(p + 13));
  cfg.blocks = static_cast<int>(get_u32(p + 17));
  cfg.channels = static_cast<int>(get_u32(p + 21));
  cfg.cu_shared = p[25] != 0;
  cfg.cu_enabled = p[26] != 0;
  check_config(cfg);

  const std::size_t want =
      27 + static_cast<std::size_t>(count_params(cfg)) * 8;
  if (buf.size() != want)
    throw FormatError("load_checkpoint: payload ends at byte " +
                      std::to_string(buf.size()) + ", expected " +
                      std::to_string(want) + " in " + path);

  CoastParams params = init_params(cfg, 0);
  std::size_t off = 27;
  for (auto& item : params.set.items)
    for (std::size_t i = 0; i < item.value.size(); ++i) {
      uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[off + b];
      std::memcpy(&item.value[i], &bits, 8);
      off += 8;
    }
  return params;
}

}  // namespace coast
