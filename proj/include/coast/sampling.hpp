#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "coast/ndarray.hpp"

namespace coast {

// An M x N sampling matrix with provenance metadata. FRGM matrices have
// orthonormal rows (phi phi^T = I to 1e-10).
struct SamplingMatrix {
  enum class Kind : uint8_t { frgm = 0, external = 1 };

  int rows = 0;  // M
  int cols = 0;  // N, a perfect square
  NdArray data;  // {M, N}
  Kind kind = Kind::frgm;
  uint64_t seed = 0;
  bool has_seed = false;

  double ratio() const { return static_cast<double>(rows) / cols; }
  int patch_side() const;
  std::string id() const;
};

// Augmented matrix set produced by rpa_augment: base_count groups of
// per_base matrices; the first matrix of each group is the base itself.
struct AugmentedSet {
  std::vector<SamplingMatrix> matrices;
  int base_count = 0;
  int per_base = 1;  // N_S
};

// CS measurements of a patch batch: y {B, M}.
struct Measurement {
  NdArray y;
  double sigma = 0.0;
  std::string source_id;
};

// Random Gaussian rows orthonormalized by QR, sign-fixed so the first
// nonzero entry of every row is positive. Deterministic in (m, n, seed).
// Throws ContractError if m > n or m < 1.
SamplingMatrix gen_frgm(int m, int n, uint64_t seed);

// Expands each (M, N, seed) base into per_base matrices: the base followed
// by per_base-1 fresh FRGMs from seeds derived from master_seed. Derived
// seeds never collide with the base seed.
AugmentedSet rpa_augment(
    const std::vector<std::tuple<int, int, uint64_t>>& bases, int per_base,
    uint64_t master_seed);

// y_i = phi (x_i + n_i) with n_i ~ N(0, sigma^2) per element, seeded.
// patches is {B, N}; sigma = 0 gives the exact product.
Measurement measure(const NdArray& patches, const SamplingMatrix& phi,
                    double sigma, uint64_t seed);

// Binary matrix file: magic "COASTPHI", LE u32 M, LE u32 N, u8 kind,
// LE u64 seed (0 if absent), then M*N LE f64 row-major. Round-trips are
// bit-exact. load re-checks row orthonormality for FRGM matrices.
void save_matrix(const SamplingMatrix& phi, const std::string& path);
SamplingMatrix load_matrix(const std::string& path);

// max |phi phi^T - I| entry; the FRGM orthonormality residual.
double gram_residual(const SamplingMatrix& phi);

}  // namespace coast
