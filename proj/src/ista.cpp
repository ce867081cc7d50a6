#include "coast/ista.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "coast/autodiff.hpp"

namespace coast {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double l1_norm(const NdArray& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::fabs(v[i]);
  return s;
}

double l2_norm(const NdArray& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

NdArray soft_threshold(const NdArray& v, double tau) {
  if (tau < 0.0) throw ContractError("soft_threshold: tau must be >= 0");
  NdArray out = v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mag = std::fabs(out[i]) - tau;
    out[i] = mag > 0.0 ? (out[i] > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

NdArray dct2_matrix(int side) {
  if (side < 1) throw ContractError("dct2_matrix: side must be >= 1");
  // 1-D orthonormal DCT-II.
  NdArray d({side, side});
  const double pi = 3.14159265358979323846264338327950288;
  for (int k = 0; k < side; ++k) {
    const double c = k == 0 ? std::sqrt(1.0 / side) : std::sqrt(2.0 / side);
    for (int n = 0; n < side; ++n)
      d.at(k, n) = c * std::cos(pi * (2 * n + 1) * k / (2.0 * side));
  }
  // 2-D separable basis on vectorized patches: T = D (x) D.
  const int n2 = side * side;
  NdArray t({n2, n2});
  for (int ky = 0; ky < side; ++ky)
    for (int kx = 0; kx < side; ++kx)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          t.at(ky * side + kx, y * side + x) = d.at(ky, y) * d.at(kx, x);
  return t;
}

IstaResult ista_solve(const NdArray& y, const SamplingMatrix& phi,
                      const IstaConfig& cfg) {
  if (y.ndim() != 1 || y.dim(0) != phi.rows)
    throw DimensionError("ista_solve: y must be {M}");
  if (cfg.lambda < 0.0 || cfg.rho <= 0.0 || cfg.tol <= 0.0 ||
      cfg.max_iters < 1)
    throw ConfigError("ista_solve: invalid configuration");
  if (cfg.transform != Transform::identity &&
      cfg.transform != Transform::dct2)
    throw ConfigError("ista_solve: unknown transform");

  const int n = phi.cols;
  NdArray t;  // orthonormal analysis transform, empty = identity
  if (cfg.transform == Transform::dct2) t = dct2_matrix(phi.patch_side());

  Eigen::Map<const RowMat> pm(phi.data.data(), phi.rows, phi.cols);
  Eigen::Map<const Eigen::VectorXd> ym(y.data(), phi.rows);

  auto analysis = [&](const NdArray& v) {
    if (t.empty()) return v;
    NdArray out({n});
    Eigen::Map<const RowMat> tm(t.data(), n, n);
    Eigen::Map<const Eigen::VectorXd> vm(v.data(), n);
    Eigen::Map<Eigen::VectorXd>(out.data(), n).noalias() = tm * vm;
    return out;
  };
  auto synthesis = [&](const NdArray& v) {
    if (t.empty()) return v;
    NdArray out({n});
    Eigen::Map<const RowMat> tm(t.data(), n, n);
    Eigen::Map<const Eigen::VectorXd> vm(v.data(), n);
    Eigen::Map<Eigen::VectorXd>(out.data(), n).noalias() =
        tm.transpose() * vm;
    return out;
  };
  auto objective = [&](const NdArray& x) {
    Eigen::Map<const Eigen::VectorXd> xm(x.data(), n);
    const double fid = 0.5 * (pm * xm - ym).squaredNorm();
    return fid + cfg.lambda * l1_norm(analysis(x));
  };

  IstaResult res;
  NdArray x({n});
  res.objective.reserve(cfg.max_iters);
  for (int it = 0; it < cfg.max_iters; ++it) {
    // r = x - rho phi^T (phi x - y)
    NdArray r({n});
    {
      Eigen::Map<const Eigen::VectorXd> xm(x.data(), n);
      Eigen::VectorXd resid = pm * xm - ym;
      Eigen::Map<Eigen::VectorXd>(r.data(), n).noalias() =
          xm - cfg.rho * (pm.transpose() * resid);
    }
    NdArray xn = synthesis(soft_threshold(analysis(r), cfg.rho * cfg.lambda));
    res.objective.push_back(objective(xn));
    res.iterations = it + 1;

    NdArray diff = ad::kernels::sub(xn, x);
    const double denom = std::max(l2_norm(x), 1e-300);
    x = std::move(xn);
    if (l2_norm(diff) / denom < cfg.tol) break;
  }
  res.xhat = std::move(x);
  return res;
}

NdArray pinv_reconstruct(const NdArray& y, const SamplingMatrix& phi) {
  const bool single = y.ndim() == 1;
  const NdArray yb = single ? y.reshaped({1, y.dim(0)}) : y;
  if (yb.ndim() != 2 || yb.dim(1) != phi.rows)
    throw DimensionError("pinv_reconstruct: y must be {B,M} or {M}");

  Eigen::Map<const RowMat> pm(phi.data.data(), phi.rows, phi.cols);
  Eigen::Map<const RowMat> ym(yb.data(), yb.dim(0), phi.rows);

  Eigen::MatrixXd gram = pm * pm.transpose();
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  const auto d = solver.vectorD();
  if (solver.info() != Eigen::Success || !solver.isPositive() ||
      d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff()))
    throw NumericalError("pinv_reconstruct: phi phi^T is singular");
  // z = (phi phi^T)^-1 y, then x = phi^T z, batched over rows of y.
  Eigen::MatrixXd z = solver.solve(ym.transpose());

  NdArray out({yb.dim(0), phi.cols});
  Eigen::Map<RowMat>(out.data(), yb.dim(0), phi.cols).noalias() =
      (pm.transpose() * z).transpose();
  return single ? out.reshaped({phi.cols}) : out;
}

}  // namespace coast
