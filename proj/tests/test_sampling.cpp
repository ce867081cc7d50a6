#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "coast/autodiff.hpp"
#include "coast/rng.hpp"
#include "coast/sampling.hpp"

using namespace coast;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Gram matrix by plain dot-product loops, no linear-algebra library.
double gram_residual_reference(const SamplingMatrix& phi) {
  double worst = 0.0;
  for (int i = 0; i < phi.rows; ++i)
    for (int j = 0; j < phi.rows; ++j) {
      double dot = 0.0;
      for (int c = 0; c < phi.cols; ++c)
        dot += phi.data.at(i, c) * phi.data.at(j, c);
      worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

bool bit_equal(const NdArray& a, const NdArray& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], 8) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("gen_frgm 1x1 is exactly [1.0]") {
  const SamplingMatrix phi = gen_frgm(1, 1, 123);
  CHECK(phi.data[0] == 1.0);
}

TEST_CASE("square FRGM is orthonormal both ways") {
  const SamplingMatrix phi = gen_frgm(4, 4, 5);
  CHECK(gram_residual_reference(phi) < 1e-10);
  // Columns too: phi^T phi = I for square orthonormal matrices.
  double worst = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (int r = 0; r < 4; ++r) dot += phi.data.at(r, i) * phi.data.at(r, j);
      worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("gen_frgm gram oracle and seed determinism") {
  const SamplingMatrix a = gen_frgm(4, 16, 7);
  CHECK(gram_residual_reference(a) < 1e-10);
  const SamplingMatrix b = gen_frgm(4, 16, 7);
  CHECK(bit_equal(a.data, b.data));
  const SamplingMatrix c = gen_frgm(4, 16, 8);
  CHECK_FALSE(bit_equal(a.data, c.data));
}

TEST_CASE("gen_frgm sign convention: leading entries positive") {
  const SamplingMatrix phi = gen_frgm(6, 9, 42);
  for (int r = 0; r < phi.rows; ++r) {
    double lead = 0.0;
    for (int c = 0; c < phi.cols; ++c)
      if (phi.data.at(r, c) != 0.0) {
        lead = phi.data.at(r, c);
        break;
      }
    CHECK(lead > 0.0);
  }
}

TEST_CASE("gen_frgm rejects M > N") {
  CHECK_THROWS_AS(gen_frgm(5, 4, 1), ContractError);
  CHECK_THROWS_AS(gen_frgm(0, 4, 1), ContractError);
}

TEST_CASE("energy preservation: phi^T phi is a contraction") {
  const SamplingMatrix phi = gen_frgm(6, 25, 99);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    NdArray x({1, 25});
    for (int i = 0; i < 25; ++i) x[i] = rng.normal();
    const NdArray y = ad::kernels::matvec(x, phi.data, false);
    const NdArray back = ad::kernels::matvec(y, phi.data, true);
    double nx = 0.0, nb = 0.0;
    for (int i = 0; i < 25; ++i) {
      nx += x[i] * x[i];
      nb += back[i] * back[i];
    }
    CHECK(std::sqrt(nb) <= std::sqrt(nx) + 1e-10);
  }
}

TEST_CASE("rpa_augment with N_S = 1 is the base list") {
  const AugmentedSet set = rpa_augment({{3, 9, 11}, {5, 9, 12}}, 1, 77);
  REQUIRE(set.matrices.size() == 2);
  CHECK(bit_equal(set.matrices[0].data, gen_frgm(3, 9, 11).data));
  CHECK(bit_equal(set.matrices[1].data, gen_frgm(5, 9, 12).data));
}

TEST_CASE("rpa_augment produces L x N_S matrices") {
  // 5 ratios x 25 copies = 125 and 3 x 5 = 15, on desk-sized matrices.
  std::vector<std::tuple<int, int, uint64_t>> five;
  for (int i = 1; i <= 5; ++i) five.emplace_back(i, 16, 100 + i);
  CHECK(rpa_augment(five, 25, 1).matrices.size() == 125);

  std::vector<std::tuple<int, int, uint64_t>> three = {
      {2, 16, 201}, {8, 16, 202}, {12, 16, 203}};
  CHECK(rpa_augment(three, 5, 2).matrices.size() == 15);
}

TEST_CASE("rpa_augment group structure") {
  const uint64_t base_seed = 31;
  const AugmentedSet set =
      rpa_augment({{4, 16, base_seed}, {8, 16, base_seed + 1}}, 4, 55);
  REQUIRE(set.matrices.size() == 8);
  CHECK(set.base_count == 2);
  CHECK(set.per_base == 4);
  for (int g = 0; g < 2; ++g) {
    const SamplingMatrix& base = set.matrices[g * 4];
    CHECK(base.seed == base_seed + g);
    for (int j = 1; j < 4; ++j) {
      const SamplingMatrix& other = set.matrices[g * 4 + j];
      CHECK(other.rows == base.rows);
      CHECK(other.cols == base.cols);
      CHECK(other.seed != base.seed);
      CHECK_FALSE(bit_equal(other.data, base.data));
    }
  }
}

TEST_CASE("measure of zeros is zero") {
  const SamplingMatrix phi = gen_frgm(3, 16, 9);
  const Measurement m = measure(NdArray({2, 16}), phi, 0.0, 0);
  CHECK(m.y.max_abs() == 0.0);
}

TEST_CASE("noiseless measure matches a row-by-row dot-product oracle") {
  const SamplingMatrix phi = gen_frgm(5, 16, 13);
  Rng rng(21);
  NdArray x({3, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  const Measurement m = measure(x, phi, 0.0, 0);
  for (int b = 0; b < 3; ++b)
    for (int r = 0; r < 5; ++r) {
      double want = 0.0;
      for (int c = 0; c < 16; ++c) want += phi.data.at(r, c) * x.at(b, c);
      CHECK(std::fabs(m.y.at(b, r) - want) < 1e-12);
    }
}

TEST_CASE("measurement noise has the requested variance") {
  // 1e5 scalar draws through the measurement path: phi = [1], x = 0, so
  // y collects the raw noise samples.
  SamplingMatrix phi;
  phi.rows = 1;
  phi.cols = 1;
  phi.data = NdArray({1, 1}, 1.0);
  phi.kind = SamplingMatrix::Kind::external;
  const double sigma = 0.02;
  const Measurement m = measure(NdArray({100000, 1}), phi, sigma, 1234);
  double mean = 0.0;
  for (std::size_t i = 0; i < m.y.size(); ++i) mean += m.y[i];
  mean /= m.y.size();
  double var = 0.0;
  for (std::size_t i = 0; i < m.y.size(); ++i)
    var += (m.y[i] - mean) * (m.y[i] - mean);
  var /= m.y.size();
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("measure rejects dimension mismatch, naming both sizes") {
  const SamplingMatrix phi = gen_frgm(3, 16, 1);
  try {
    measure(NdArray({2, 25}), phi, 0.0, 0);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("25") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
}

TEST_CASE("matrix file round trip is bit-exact") {
  const SamplingMatrix phi = gen_frgm(4, 16, 7);
  const std::string path = temp_path("coast_phi_roundtrip.bin");
  save_matrix(phi, path);
  const SamplingMatrix back = load_matrix(path);
  CHECK(back.rows == 4);
  CHECK(back.cols == 16);
  CHECK(back.kind == SamplingMatrix::Kind::frgm);
  CHECK(back.seed == 7);
  CHECK(bit_equal(back.data, phi.data));
  std::filesystem::remove(path);
}

TEST_CASE("bad magic is rejected") {
  const std::string path = temp_path("coast_phi_badmagic.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "XOASTPHI";
    for (int i = 0; i < 25; ++i) f.put(0);
  }
  try {
    load_matrix(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("hand-assembled 1x1 external file loads as [1.0]") {
  const std::string path = temp_path("coast_phi_one.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "COASTPHI";
    const unsigned char dims[8] = {1, 0, 0, 0, 1, 0, 0, 0};  // M=1, N=1
    f.write(reinterpret_cast<const char*>(dims), 8);
    f.put(1);                              // kind external
    for (int i = 0; i < 8; ++i) f.put(0);  // no seed
    const double v = 1.0;
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  const SamplingMatrix phi = load_matrix(path);
  CHECK(phi.rows == 1);
  CHECK(phi.cols == 1);
  CHECK(phi.kind == SamplingMatrix::Kind::external);
  CHECK(phi.data[0] == 1.0);
  std::filesystem::remove(path);
}

TEST_CASE("truncated payload and NaN entries are format errors with offsets") {
  const SamplingMatrix phi = gen_frgm(2, 4, 3);
  const std::string path = temp_path("coast_phi_trunc.bin");
  save_matrix(phi, path);

  SUBCASE("truncation") {
    std::filesystem::resize_file(path, 40);
    try {
      load_matrix(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  SUBCASE("NaN entry") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(25);
    const double nan = std::nan("");
    f.write(reinterpret_cast<const char*>(&nan), 8);
    f.close();
    try {
      load_matrix(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("NaN") != std::string::npos);
      CHECK(std::string(e.what()).find("25") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("external matrices skip the orthonormality check") {
  SamplingMatrix phi;
  phi.rows = 2;
  phi.cols = 4;
  phi.data = NdArray({2, 4}, 0.5);  // clearly not orthonormal
  phi.kind = SamplingMatrix::Kind::external;
  const std::string path = temp_path("coast_phi_ext.bin");
  save_matrix(phi, path);
  CHECK(load_matrix(path).kind == SamplingMatrix::Kind::external);

  // The same data flagged FRGM must be rejected.
  phi.kind = SamplingMatrix::Kind::frgm;
  save_matrix(phi, path);
  CHECK_THROWS_AS(load_matrix(path), FormatError);
  std::filesystem::remove(path);
}
