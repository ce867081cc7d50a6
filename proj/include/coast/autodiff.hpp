#pragma once

#include <functional>
#include <vector>

#include "coast/ndarray.hpp"

namespace coast::ad {

// Raw array kernels. The tape ops below wrap these; gradient-free code
// (inference, oracles in tools) can call them directly.
namespace kernels {

// 3x3 convolution, stride 1, zero padding 1 (shape preserving).
// in {B,Cin,H,W}, w {Cout,Cin,3,3}, b {Cout} -> {B,Cout,H,W}.
NdArray conv2d(const NdArray& in, const NdArray& w, const NdArray& b);

// Accumulates (+=) into any non-null output.
void conv2d_backward(const NdArray& in, const NdArray& w, const NdArray& gout,
                     NdArray* gin, NdArray* gw, NdArray* gb);

NdArray relu(const NdArray& x);
NdArray add(const NdArray& a, const NdArray& b);
NdArray sub(const NdArray& a, const NdArray& b);

// x {B,C,H,W} scaled per channel by s {C}.
NdArray channel_scale(const NdArray& x, const NdArray& s);

// z {K}, w {C,K}, b {C} -> {C}.
NdArray fc(const NdArray& z, const NdArray& w, const NdArray& b);

double mse(const NdArray& a, const NdArray& b);

// Batched products with a fixed M x N matrix. transpose=false maps
// x {B,N} -> {B,M} (rows y_i = m x_i); transpose=true maps {B,M} -> {B,N}.
NdArray matvec(const NdArray& x, const NdArray& m, bool transpose);

// {B,C,h,w} + grid (rows x cols, rows*cols == B) -> {1,C,rows*h,cols*w}.
NdArray fold_grid(const NdArray& batch, int rows, int cols);
// Inverse of fold_grid.
NdArray unfold_grid(const NdArray& image, int rows, int cols);

}  // namespace kernels

// Handle to a node owned by a Tape.
struct Value {
  int id = -1;
};

// Define-by-run reverse-mode graph over NdArrays. A tape is built per
// forward pass and discarded afterwards. backward() may be called more
// than once; gradients accumulate until the tape is destroyed.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf (a parameter). The array is copied in.
  Value leaf(const NdArray& v);
  // Leaf that never receives a gradient (inputs, targets).
  Value constant(const NdArray& v);

  Value conv2d(Value x, Value w, Value b);
  Value relu(Value x);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value channel_scale(Value x, Value s);
  Value fc(Value z, Value w, Value b);
  Value mse(Value a, Value b);
  // m must stay alive for the lifetime of the tape.
  Value matvec(Value x, const NdArray* m, bool transpose);
  // s is a {1}-shaped scalar node; out = s * x elementwise.
  Value scale(Value s, Value x);
  Value reshape(Value x, const Shape& s);
  Value fold(Value x, int rows, int cols);
  Value unfold(Value x, int rows, int cols);

  // Seeds d(loss)/d(loss) = 1 and propagates through the graph in reverse
  // creation order. Throws ContractError if loss is not scalar.
  void backward(Value loss);

  const NdArray& value(Value v) const { return nodes_[v.id].val; }
  // Gradient accumulated so far; zero-shaped array until first write.
  const NdArray& grad(Value v);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    NdArray val;
    NdArray grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  int push(NdArray val, bool requires_grad);
  NdArray& grad_buf(int id);
  void accumulate(int id, const NdArray& g);
  // Scaled accumulation helper used by several rules.
  void accumulate_scaled(int id, const NdArray& g, double factor);

  std::vector<Node> nodes_;
};

}  // namespace coast::ad
