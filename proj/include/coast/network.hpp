#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coast/autodiff.hpp"
#include "coast/ndarray.hpp"
#include "coast/optim.hpp"
#include "coast/sampling.hpp"

namespace coast {

// Input to the controllable unit: z = [gamma, sigma] with sigma in
// normalized intensity units.
struct ConditionVector {
  double gamma = 0.0;
  double sigma = 0.0;

  NdArray as_array() const { return NdArray({2}, {gamma, sigma}); }
};

struct CoastConfig {
  int phases = 20;    // N_P
  int blocks = 3;     // N_C, CPMBs per phase
  int channels = 32;  // C
  bool cu_shared = true;
  bool cu_enabled = true;
  bool pnp_d = true;  // fold patches for CPMM at inference
};

// Exact number of learnable scalars for a configuration.
long count_params(const CoastConfig& cfg);

// All learnable parameters in canonical (checkpoint) order: for each phase
// k: conv-in weight+bias, for each block j: (conv1 weight, bias, conv2
// weight, bias), conv-out weight+bias, rho; all CU weights+biases last.
struct CoastParams {
  CoastConfig config;
  ParamSet set;
};

// Index of each tensor within CoastParams::set.
struct ParamLayout {
  explicit ParamLayout(const CoastConfig& cfg);
  int conv_in_w(int k) const { return k * phase_stride; }
  int conv_in_b(int k) const { return k * phase_stride + 1; }
  int block_w1(int k, int j) const { return k * phase_stride + 2 + 4 * j; }
  int block_b1(int k, int j) const { return block_w1(k, j) + 1; }
  int block_w2(int k, int j) const { return block_w1(k, j) + 2; }
  int block_b2(int k, int j) const { return block_w1(k, j) + 3; }
  int conv_out_w(int k) const { return k * phase_stride + 2 + 4 * blocks; }
  int conv_out_b(int k) const { return conv_out_w(k) + 1; }
  int rho(int k) const { return conv_out_w(k) + 2; }
  // For a shared CU, pass any (k, j).
  int cu_w(int k, int j) const;
  int cu_b(int k, int j) const { return cu_w(k, j) + 1; }
  int total() const;

  int phases, blocks, phase_stride;
  bool cu_shared, cu_enabled;
};

// Fresh parameters: conv weights ~ N(0, 2/(9*Cin)), biases 0, rho 1,
// CU weight ~ N(0, 1e-4), CU bias 1 (near-identity modulation).
CoastParams init_params(const CoastConfig& cfg, uint64_t seed);

// Zero initial estimate; with rho = 1 the first GDM output is phi^T y.
NdArray init_x0(const SamplingMatrix& phi, const NdArray& y);

// r = xhat - rho * phi^T (phi xhat - y), per patch. xhat {B,N}, y {B,M}.
NdArray gdm(const NdArray& xhat, const SamplingMatrix& phi, const NdArray& y,
            double rho);

// W_cu z + b_cu; no activation. Returns the length-C modulation vector.
NdArray cu_forward(const ConditionVector& z, const NdArray& w,
                   const NdArray& b);

// Borrowed views into one block's / one phase's parameters.
struct CpmbView {
  const NdArray* w1;
  const NdArray* b1;
  const NdArray* w2;
  const NdArray* b2;
  const NdArray* cu_w;  // null when the CU is disabled
  const NdArray* cu_b;
};
struct CpmmView {
  const NdArray* w_in;
  const NdArray* b_in;
  std::vector<CpmbView> blocks;
  const NdArray* w_out;
  const NdArray* b_out;
  double rho;
};
CpmmView phase_view(const CoastParams& params, int k);

// F' = channel_scale(W2(ReLU(W1(F))), cu(z)) + F.
NdArray cpmb_forward(const NdArray& f, const ConditionVector& z,
                     const CpmbView& p);

// xhat = r + W_out(CPMB_Nc(...CPMB_1(W_in(r), z)...)); r is {B,1,H,W}.
NdArray cpmm_forward(const NdArray& r, const ConditionVector& z,
                     const CpmmView& p);

// Full gradient-free reconstruction: y {B,M} -> patch batch {B,N}.
// grid rows*cols must equal B; pnp_d folds the grid around each CPMM.
NdArray coast_infer(const CoastParams& params, const NdArray& y,
                    const SamplingMatrix& phi, const ConditionVector& z,
                    int grid_rows, int grid_cols, bool pnp_d);

// Tape-based forward for training. Lifts every parameter as a leaf (in
// canonical order, returned through lifted) and returns the {B,N} output.
// phi must outlive the tape.
ad::Value coast_forward(ad::Tape& tape, const CoastParams& params,
                        const NdArray& y, const SamplingMatrix& phi,
                        const ConditionVector& z, int grid_rows,
                        int grid_cols, bool pnp_d,
                        std::vector<ad::Value>& lifted);

// Checkpoint file: magic "COASTCKPT", LE u32 version=1, u32 N_P, u32 N_C,
// u32 C, u8 cu-shared, u8 cu-enabled, then all parameters as LE f64 in
// canonical order. Writes are atomic (temp file + rename).
void save_checkpoint(const CoastParams& params, const std::string& path);
CoastParams load_checkpoint(const std::string& path);

}  // namespace coast
