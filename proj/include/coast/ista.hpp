#pragma once

#include <vector>

#include "coast/ndarray.hpp"
#include "coast/sampling.hpp"

namespace coast {

enum class Transform { identity, dct2 };

struct IstaConfig {
  double lambda = 0.01;   // l1 weight
  double rho = 1.0;       // step size; <= 1 guarantees descent for FRGM
  int max_iters = 400;
  double tol = 1e-6;      // relative iterate-change stopping threshold
  Transform transform = Transform::dct2;
};

// out_i = sign(v_i) * max(|v_i| - tau, 0).
NdArray soft_threshold(const NdArray& v, double tau);

// Orthonormal 2-D DCT-II basis for side x side patches, as a dense N x N
// matrix acting on vectorized patches (N = side^2).
NdArray dct2_matrix(int side);

struct IstaResult {
  NdArray xhat;                   // {N}
  std::vector<double> objective;  // 0.5 |phi x - y|^2 + lambda |T x|_1
  int iterations = 0;
};

// Proximal-gradient iterations for a single measurement vector y {M}:
//   r = x - rho phi^T (phi x - y);  x = T^T soft(T r, rho lambda).
// Stops at max_iters or when the relative iterate change drops below tol.
IstaResult ista_solve(const NdArray& y, const SamplingMatrix& phi,
                      const IstaConfig& cfg);

// Minimum-norm least squares x = phi^T (phi phi^T)^-1 y for y {B,M} or
// {M}; equals phi^T y when the rows are orthonormal.
NdArray pinv_reconstruct(const NdArray& y, const SamplingMatrix& phi);

}  // namespace coast
