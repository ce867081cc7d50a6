#include "coast/sampling.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "coast/rng.hpp"

namespace coast {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'A', 'S', 'T', 'P', 'H', 'I'};
constexpr double kOrthoTol = 1e-10;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}
uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

int SamplingMatrix::patch_side() const {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cols))));
  if (s * s != cols)
    throw ContractError("sampling matrix N = " + std::to_string(cols) +
                        " is not a perfect square");
  return s;
}

std::string SamplingMatrix::id() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s_%dx%d_s%llu",
                kind == Kind::frgm ? "frgm" : "ext", rows, cols,
                static_cast<unsigned long long>(has_seed ? seed : 0));
  return buf;
}

double gram_residual(const SamplingMatrix& phi) {
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> m(phi.data.data(), phi.rows, phi.cols);
  RowMat gram = m * m.transpose();
  double worst = 0.0;
  for (int i = 0; i < phi.rows; ++i)
    for (int j = 0; j < phi.rows; ++j) {
      const double want = i == j ? 1.0 : 0.0;
      worst = std::max(worst, std::fabs(gram(i, j) - want));
    }
  return worst;
}

SamplingMatrix gen_frgm(int m, int n, uint64_t seed) {
  if (m < 1 || m > n)
    throw ContractError("gen_frgm: need 0 < M <= N, got M=" +
                        std::to_string(m) + " N=" + std::to_string(n));

  // Gaussian rows, drawn row-major.
  Rng rng(seed);
  Eigen::MatrixXd a(n, m);  // columns = the rows of phi
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) a(c, r) = rng.normal();

  // Thin QR of the transposed matrix orthonormalizes the row span.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);

  SamplingMatrix phi;
  phi.rows = m;
  phi.cols = n;
  phi.kind = SamplingMatrix::Kind::frgm;
  phi.seed = seed;
  phi.has_seed = true;
  phi.data = NdArray({m, n});
  for (int r = 0; r < m; ++r) {
    // Sign convention: first nonzero entry of each row is positive.
    double lead = 0.0;
    for (int c = 0; c < n; ++c)
      if (q(c, r) != 0.0) {
        lead = q(c, r);
        break;
      }
    const double s = lead < 0.0 ? -1.0 : 1.0;
    for (int c = 0; c < n; ++c) phi.data.at(r, c) = s * q(c, r);
  }

  if (gram_residual(phi) >= kOrthoTol)
    throw NumericalError("gen_frgm: orthonormalization residual exceeds 1e-10");
  return phi;
}

AugmentedSet rpa_augment(
    const std::vector<std::tuple<int, int, uint64_t>>& bases, int per_base,
    uint64_t master_seed) {
  if (per_base < 1) throw ContractError("rpa_augment: N_S must be >= 1");
  AugmentedSet set;
  set.base_count = static_cast<int>(bases.size());
  set.per_base = per_base;
  set.matrices.reserve(bases.size() * per_base);
  std::vector<uint64_t> used;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const auto [m, n, base_seed] = bases[i];
    set.matrices.push_back(gen_frgm(m, n, base_seed));
    used.push_back(base_seed);
    for (int j = 1; j < per_base; ++j) {
      uint64_t s = splitmix64(master_seed ^ splitmix64(
                                                (static_cast<uint64_t>(i) << 32) |
                                                static_cast<uint64_t>(j)));
      // Never emit a duplicate of the base (or of another member).
      while (std::find(used.begin(), used.end(), s) != used.end())
        s = splitmix64(s + 1);
      used.push_back(s);
      set.matrices.push_back(gen_frgm(m, n, s));
    }
  }
  return set;
}

Measurement measure(const NdArray& patches, const SamplingMatrix& phi,
                    double sigma, uint64_t seed) {
  if (patches.ndim() != 2)
    throw DimensionError("measure: patches must be {B, N}");
  if (patches.dim(1) != phi.cols)
    throw DimensionError("measure: patch dimension " +
                         std::to_string(patches.dim(1)) +
                         " != matrix columns " + std::to_string(phi.cols));
  if (sigma < 0.0) throw ContractError("measure: sigma must be >= 0");

  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int bs = patches.dim(0);

  Measurement out;
  out.sigma = sigma;
  out.source_id = phi.id();
  out.y = NdArray({bs, phi.rows});

  Eigen::Map<const RowMat> pm(phi.data.data(), phi.rows, phi.cols);
  Eigen::Map<RowMat> ym(out.y.data(), bs, phi.rows);
  if (sigma == 0.0) {
    Eigen::Map<const RowMat> xm(patches.data(), bs, phi.cols);
    ym.noalias() = xm * pm.transpose();
  } else {
    NdArray noisy = patches;
    Rng rng(seed);
    for (std::size_t i = 0; i < noisy.size(); ++i)
      noisy[i] += sigma * rng.normal();
    Eigen::Map<const RowMat> xm(noisy.data(), bs, phi.cols);
    ym.noalias() = xm * pm.transpose();
  }
  return out;
}

void save_matrix(const SamplingMatrix& phi, const std::string& path) {
  std::string buf;
  buf.reserve(25 + phi.data.size() * 8);
  buf.append(kMagic, 8);
  put_u32(buf, static_cast<uint32_t>(phi.rows));
  put_u32(buf, static_cast<uint32_t>(phi.cols));
  buf.push_back(static_cast<char>(phi.kind));
  put_u64(buf, phi.has_seed ? phi.seed : 0);
  for (std::size_t i = 0; i < phi.data.size(); ++i) {
    uint64_t bits;
    std::memcpy(&bits, &phi.data[i], 8);
    put_u64(buf, bits);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("save_matrix: cannot open " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("save_matrix: write failed for " + path);
}

SamplingMatrix load_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_matrix: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < 25)
    throw FormatError("load_matrix: truncated header at byte " +
                      std::to_string(buf.size()) + " in " + path);
  if (std::memcmp(p, kMagic, 8) != 0)
    throw FormatError("load_matrix: magic mismatch at byte 0 in " + path);

  SamplingMatrix phi;
  phi.rows = static_cast<int>(get_u32(p + 8));
  phi.cols = static_cast<int>(get_u32(p + 12));
  const uint8_t kind = p[16];
  if (kind > 1)
    throw FormatError("load_matrix: bad kind byte at byte 16 in " + path);
  phi.kind = static_cast<SamplingMatrix::Kind>(kind);
  phi.seed = get_u64(p + 17);
  phi.has_seed = phi.seed != 0;
  if (phi.rows < 1 || phi.cols < 1 || phi.rows > phi.cols)
    throw FormatError("load_matrix: invalid dimensions at byte 8 in " + path);

  const std::size_t want =
      25 + static_cast<std::size_t>(phi.rows) * phi.cols * 8;
  if (buf.size() != want)
    throw FormatError("load_matrix: payload ends at byte " +
                      std::to_string(buf.size()) + ", expected " +
                      std::to_string(want) + " in " + path);

  phi.data = NdArray({phi.rows, phi.cols});
  for (std::size_t i = 0; i < phi.data.size(); ++i) {
    const uint64_t bits = get_u64(p + 25 + i * 8);
    double v;
    std::memcpy(&v, &bits, 8);
    if (std::isnan(v))
      throw FormatError("load_matrix: NaN entry at byte " +
                        std::to_string(25 + i * 8) + " in " + path);
    phi.data[i] = v;
  }

  if (phi.kind == SamplingMatrix::Kind::frgm && gram_residual(phi) >= kOrthoTol)
    throw FormatError(
        "load_matrix: FRGM rows are not orthonormal (residual >= 1e-10) in " +
        path);
  return phi;
}

}  // namespace coast
