#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "coast/errors.hpp"

namespace coast {

// Extent list for dense arrays, at most 4 axes (batch, channel, height,
// width). Lower-rank arrays use the leading entries.
struct Shape {
  std::array<int, 4> d{1, 1, 1, 1};
  int nd = 0;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > 4) throw DimensionError("shape has more than 4 axes");
    int i = 0;
    for (int v : dims) {
      if (v < 1) throw DimensionError("shape extent must be >= 1");
      d[i++] = v;
    }
    nd = static_cast<int>(dims.size());
  }

  int operator[](int i) const { return d[static_cast<size_t>(i)]; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int i = 0; i < nd; ++i) n *= static_cast<std::size_t>(d[i]);
    return nd == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (nd != o.nd) return false;
    for (int i = 0; i < nd; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const;
};

// Dense row-major array of 64-bit floats.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(const Shape& s) : shape_(s), data_(s.numel(), 0.0) {}
  NdArray(const Shape& s, double fill) : shape_(s), data_(s.numel(), fill) {}
  NdArray(const Shape& s, std::vector<double> data)
      : shape_(s), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw DimensionError("data length does not match shape " + s.str());
  }

  static NdArray zeros(const Shape& s) { return NdArray(s); }
  static NdArray full(const Shape& s, double v) { return NdArray(s, v); }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[i]; }
  int ndim() const { return shape_.nd; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& at(int i0) { return data_[static_cast<std::size_t>(i0)]; }
  double& at(int i0, int i1) {
    return data_[static_cast<std::size_t>(i0) * shape_[1] + i1];
  }
  double& at(int i0, int i1, int i2) {
    return data_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] +
                 i2];
  }
  double& at(int i0, int i1, int i2, int i3) {
    return data_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] +
                  i2) *
                     shape_[3] +
                 i3];
  }
  const double& at(int i0) const {
    return data_[static_cast<std::size_t>(i0)];
  }
  const double& at(int i0, int i1) const {
    return data_[static_cast<std::size_t>(i0) * shape_[1] + i1];
  }
  const double& at(int i0, int i1, int i2) const {
    return data_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] +
                 i2];
  }
  const double& at(int i0, int i1, int i2, int i3) const {
    return data_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] +
                  i2) *
                     shape_[3] +
                 i3];
  }

  // Same data, different extents; total element count must match.
  NdArray reshaped(const Shape& s) const {
    if (s.numel() != size())
      throw DimensionError("reshape " + shape_.str() + " -> " + s.str() +
                           " changes element count");
    NdArray out = *this;
    out.shape_ = s;
    return out;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const;
  double max_abs() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace coast
