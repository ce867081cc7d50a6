#include "coast/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace coast::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

#ifdef __GLIBC__
// Large feature maps churn through the allocator every op; without this,
// glibc hands them to mmap and the page faults dominate the kernels.
[[maybe_unused]] const int malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return 0;
}();
#endif

// Elementwise parallelism threshold; below it the fork/join overhead wins.
constexpr std::size_t kParallelCutoff = std::size_t{1} << 16;

template <class F>
void for_each_index(std::size_t n, F&& f) {
  if (n >= kParallelCutoff) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      f(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) f(i);
  }
}

void check_same_shape(const NdArray& a, const NdArray& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.shape().str() + " vs " + b.shape().str());
}

// Writes the im2col matrix for one image: col is (Cin*9) x (H*W),
// col[(ci*9 + ky*3 + kx), y*W + x] = in[b, ci, y+ky-1, x+kx-1] (0 outside).
void im2col(const double* img, int cin, int h, int w, double* col) {
  const int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = img + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        double* row = col + static_cast<std::size_t>(ci * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          double* dst = row + y * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::memset(dst, 0, sizeof(double) * w);
            continue;
          }
          const double* src = plane + sy * w;
          if (dx == 0) {
            std::memcpy(dst, src, sizeof(double) * w);
          } else if (dx < 0) {
            dst[0] = 0.0;
            std::memcpy(dst + 1, src, sizeof(double) * (w - 1));
          } else {
            std::memcpy(dst, src + 1, sizeof(double) * (w - 1));
            dst[w - 1] = 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a (Cin*9) x (H*W) column matrix back into one image.
void col2im_add(const double* col, int cin, int h, int w, double* img) {
  const int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = img + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        const double* row =
            col + static_cast<std::size_t>(ci * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const double* src = row + y * w;
          double* dst = plane + sy * w;
          if (dx == 0) {
            for (int x = 0; x < w; ++x) dst[x] += src[x];
          } else if (dx < 0) {
            for (int x = 1; x < w; ++x) dst[x - 1] += src[x];
          } else {
            for (int x = 0; x < w - 1; ++x) dst[x + 1] += src[x];
          }
        }
      }
    }
  }
}

void check_conv_shapes(const NdArray& in, const NdArray& w, const NdArray& b) {
  if (in.ndim() != 4) throw DimensionError("conv2d: input must be 4-d");
  if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
    throw DimensionError("conv2d: weight must be {Cout,Cin,3,3}");
  if (in.dim(1) != w.dim(1))
    throw DimensionError("conv2d: input channels " + std::to_string(in.dim(1)) +
                         " != weight channels " + std::to_string(w.dim(1)));
  if (b.ndim() != 1 || b.dim(0) != w.dim(0))
    throw DimensionError("conv2d: bias length != output channels");
}

}  // namespace

namespace kernels {

NdArray conv2d(const NdArray& in, const NdArray& w, const NdArray& b) {
  check_conv_shapes(in, w, b);
  const int bs = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int cout = w.dim(0), k = cin * 9, hw = h * wd;

  NdArray out({bs, cout, h, wd});
  CMap wm(w.data(), cout, k);

#pragma omp parallel
  {
    static thread_local std::vector<double> col;
    col.resize(static_cast<std::size_t>(k) * hw);
#pragma omp for schedule(static)
    for (int bi = 0; bi < bs; ++bi) {
      im2col(in.data() + static_cast<std::size_t>(bi) * cin * hw, cin, h, wd,
             col.data());
      MMap om(out.data() + static_cast<std::size_t>(bi) * cout * hw, cout, hw);
      om.noalias() = wm * CMap(col.data(), k, hw);
      for (int co = 0; co < cout; ++co) om.row(co).array() += b[co];
    }
  }
  return out;
}

void conv2d_backward(const NdArray& in, const NdArray& w, const NdArray& gout,
                     NdArray* gin, NdArray* gw, NdArray* gb) {
  if (gout.ndim() != 4 || gout.dim(0) != in.dim(0) ||
      gout.dim(1) != w.dim(0) || gout.dim(2) != in.dim(2) ||
      gout.dim(3) != in.dim(3))
    throw DimensionError("conv2d_backward: output gradient shape " +
                         gout.shape().str() + " does not match");
  const int bs = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int cout = w.dim(0), k = cin * 9, hw = h * wd;

  CMap wm(w.data(), cout, k);

  // Per-image weight-gradient partials, reduced serially in batch order so
  // the result is independent of thread count.
  std::vector<NdArray> gw_parts;
  if (gw) gw_parts.assign(bs, NdArray({cout, cin, 3, 3}));

#pragma omp parallel
  {
    static thread_local std::vector<double> col, dcol;
    col.resize(static_cast<std::size_t>(k) * hw);
    if (gin) dcol.resize(col.size());
#pragma omp for schedule(static)
    for (int bi = 0; bi < bs; ++bi) {
      CMap gm(gout.data() + static_cast<std::size_t>(bi) * cout * hw, cout, hw);
      if (gin) {
        MMap dm(dcol.data(), k, hw);
        dm.noalias() = wm.transpose() * gm;
        col2im_add(dcol.data(), cin, h, wd,
                   gin->data() + static_cast<std::size_t>(bi) * cin * hw);
      }
      if (gw) {
        im2col(in.data() + static_cast<std::size_t>(bi) * cin * hw, cin, h, wd,
               col.data());
        MMap pm(gw_parts[bi].data(), cout, k);
        pm.noalias() = gm * CMap(col.data(), k, hw).transpose();
      }
    }
  }

  if (gw) {
    for (int bi = 0; bi < bs; ++bi) {
      const NdArray& p = gw_parts[bi];
      for (std::size_t i = 0; i < p.size(); ++i) (*gw)[i] += p[i];
    }
  }
  if (gb) {
    for (int bi = 0; bi < bs; ++bi)
      for (int co = 0; co < cout; ++co) {
        const double* g =
            gout.data() + (static_cast<std::size_t>(bi) * cout + co) * hw;
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += g[i];
        (*gb)[co] += s;
      }
  }
}

NdArray relu(const NdArray& x) {
  NdArray out = x;
  double* p = out.data();
  for_each_index(out.size(), [p](std::size_t i) {
    if (p[i] < 0.0) p[i] = 0.0;
  });
  return out;
}

NdArray add(const NdArray& a, const NdArray& b) {
  check_same_shape(a, b, "add");
  NdArray out = a;
  double* p = out.data();
  const double* q = b.data();
  for_each_index(out.size(), [p, q](std::size_t i) { p[i] += q[i]; });
  return out;
}

NdArray sub(const NdArray& a, const NdArray& b) {
  check_same_shape(a, b, "sub");
  NdArray out = a;
  double* p = out.data();
  const double* q = b.data();
  for_each_index(out.size(), [p, q](std::size_t i) { p[i] -= q[i]; });
  return out;
}

NdArray channel_scale(const NdArray& x, const NdArray& s) {
  if (x.ndim() != 4) throw DimensionError("channel_scale: input must be 4-d");
  if (s.ndim() != 1 || s.dim(0) != x.dim(1))
    throw DimensionError("channel_scale: scale length " +
                         std::to_string(s.dim(0)) + " != channels " +
                         std::to_string(x.dim(1)));
  NdArray out = x;
  const int c = x.dim(1), hw = x.dim(2) * x.dim(3);
  double* p = out.data();
  const double* sv = s.data();
  for_each_index(out.size(), [p, sv, c, hw](std::size_t i) {
    p[i] *= sv[(i / hw) % c];
  });
  return out;
}

NdArray fc(const NdArray& z, const NdArray& w, const NdArray& b) {
  if (z.ndim() != 1 || w.ndim() != 2 || b.ndim() != 1)
    throw DimensionError("fc: expected z {K}, w {C,K}, b {C}");
  if (w.dim(1) != z.dim(0) || w.dim(0) != b.dim(0))
    throw DimensionError("fc: shape mismatch z " + z.shape().str() + ", w " +
                         w.shape().str() + ", b " + b.shape().str());
  const int c = w.dim(0), k = w.dim(1);
  NdArray out({c});
  for (int i = 0; i < c; ++i) {
    double s = b[i];
    for (int j = 0; j < k; ++j) s += w.at(i, j) * z[j];
    out[i] = s;
  }
  return out;
}

double mse(const NdArray& a, const NdArray& b) {
  check_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

NdArray matvec(const NdArray& x, const NdArray& m, bool transpose) {
  if (x.ndim() != 2 || m.ndim() != 2)
    throw DimensionError("matvec: expected 2-d batch and matrix");
  const int bs = x.dim(0);
  const int rows = m.dim(0), cols = m.dim(1);
  const int in_dim = transpose ? rows : cols;
  const int out_dim = transpose ? cols : rows;
  if (x.dim(1) != in_dim)
    throw DimensionError("matvec: batch dim " + std::to_string(x.dim(1)) +
                         " != matrix dim " + std::to_string(in_dim));
  NdArray out({bs, out_dim});
  CMap xm(x.data(), bs, in_dim);
  CMap mm(m.data(), rows, cols);
  MMap om(out.data(), bs, out_dim);
  if (transpose)
    om.noalias() = xm * mm;
  else
    om.noalias() = xm * mm.transpose();
  return out;
}

NdArray fold_grid(const NdArray& batch, int rows, int cols) {
  if (batch.ndim() != 4) throw DimensionError("fold: batch must be 4-d");
  if (batch.dim(0) != rows * cols)
    throw DimensionError("fold: batch size " + std::to_string(batch.dim(0)) +
                         " != grid " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  NdArray out({1, c, rows * h, cols * w});
  for (int gy = 0; gy < rows; ++gy)
    for (int gx = 0; gx < cols; ++gx) {
      const int bi = gy * cols + gx;
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          std::memcpy(&out.at(0, ci, gy * h + y, gx * w),
                      &batch.at(bi, ci, y, 0), sizeof(double) * w);
    }
  return out;
}

NdArray unfold_grid(const NdArray& image, int rows, int cols) {
  if (image.ndim() != 4 || image.dim(0) != 1)
    throw DimensionError("unfold: image must be {1,C,H,W}");
  const int c = image.dim(1), hh = image.dim(2), ww = image.dim(3);
  if (hh % rows != 0 || ww % cols != 0)
    throw DimensionError("unfold: image dims not divisible by grid");
  const int h = hh / rows, w = ww / cols;
  NdArray out({rows * cols, c, h, w});
  for (int gy = 0; gy < rows; ++gy)
    for (int gx = 0; gx < cols; ++gx) {
      const int bi = gy * cols + gx;
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          std::memcpy(&out.at(bi, ci, y, 0),
                      &image.at(0, ci, gy * h + y, gx * w), sizeof(double) * w);
    }
  return out;
}

}  // namespace kernels

int Tape::push(NdArray val, bool requires_grad) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

NdArray& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = NdArray(n.val.shape());
  return n.grad;
}

void Tape::accumulate(int id, const NdArray& g) {
  NdArray& buf = grad_buf(id);
  double* p = buf.data();
  const double* q = g.data();
  for_each_index(buf.size(), [p, q](std::size_t i) { p[i] += q[i]; });
}

void Tape::accumulate_scaled(int id, const NdArray& g, double factor) {
  NdArray& buf = grad_buf(id);
  double* p = buf.data();
  const double* q = g.data();
  for_each_index(buf.size(),
                 [p, q, factor](std::size_t i) { p[i] += factor * q[i]; });
}

const NdArray& Tape::grad(Value v) { return grad_buf(v.id); }

Value Tape::leaf(const NdArray& v) { return {push(v, true)}; }

Value Tape::constant(const NdArray& v) { return {push(v, false)}; }

Value Tape::conv2d(Value x, Value w, Value b) {
  NdArray out = kernels::conv2d(nodes_[x.id].val, nodes_[w.id].val,
                                nodes_[b.id].val);
  const bool req = nodes_[x.id].requires_grad || nodes_[w.id].requires_grad ||
                   nodes_[b.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id, wi = w.id, bi = b.id;
    nodes_[id].backprop = [id, xi, wi, bi](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      NdArray* gin = t.nodes_[xi].requires_grad ? &t.grad_buf(xi) : nullptr;
      NdArray* gw = t.nodes_[wi].requires_grad ? &t.grad_buf(wi) : nullptr;
      NdArray* gb = t.nodes_[bi].requires_grad ? &t.grad_buf(bi) : nullptr;
      kernels::conv2d_backward(t.nodes_[xi].val, t.nodes_[wi].val, g, gin, gw,
                               gb);
    };
  }
  return {id};
}

Value Tape::relu(Value x) {
  NdArray out = kernels::relu(nodes_[x.id].val);
  const bool req = nodes_[x.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id;
    nodes_[id].backprop = [id, xi](Tape& t) {
      const double* g = t.nodes_[id].grad.data();
      const double* in = t.nodes_[xi].val.data();
      NdArray& gx = t.grad_buf(xi);
      double* p = gx.data();
      for_each_index(gx.size(), [p, g, in](std::size_t i) {
        if (in[i] > 0.0) p[i] += g[i];
      });
    };
  }
  return {id};
}

Value Tape::add(Value a, Value b) {
  NdArray out = kernels::add(nodes_[a.id].val, nodes_[b.id].val);
  const bool req = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int ai = a.id, bi = b.id;
    nodes_[id].backprop = [id, ai, bi](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
      if (t.nodes_[bi].requires_grad) t.accumulate(bi, g);
    };
  }
  return {id};
}

Value Tape::sub(Value a, Value b) {
  NdArray out = kernels::sub(nodes_[a.id].val, nodes_[b.id].val);
  const bool req = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int ai = a.id, bi = b.id;
    nodes_[id].backprop = [id, ai, bi](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
      if (t.nodes_[bi].requires_grad) t.accumulate_scaled(bi, g, -1.0);
    };
  }
  return {id};
}

Value Tape::channel_scale(Value x, Value s) {
  NdArray out = kernels::channel_scale(nodes_[x.id].val, nodes_[s.id].val);
  const bool req = nodes_[x.id].requires_grad || nodes_[s.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id, si = s.id;
    nodes_[id].backprop = [id, xi, si](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      const NdArray& xv = t.nodes_[xi].val;
      const NdArray& sv = t.nodes_[si].val;
      const int bs = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
      if (t.nodes_[xi].requires_grad) {
        NdArray& gx = t.grad_buf(xi);
        double* p = gx.data();
        const double* gp = g.data();
        const double* sp = sv.data();
        for_each_index(gx.size(), [p, gp, sp, c, hw](std::size_t i) {
          p[i] += sp[(i / hw) % c] * gp[i];
        });
      }
      if (t.nodes_[si].requires_grad) {
        // Per-channel reduction; the batch loop stays serial per channel so
        // the summation order is fixed.
        NdArray& gs = t.grad_buf(si);
        double* out = gs.data();
        const double* gp = g.data();
        const double* xp = xv.data();
        for_each_index(static_cast<std::size_t>(c),
                       [out, gp, xp, bs, c, hw](std::size_t ci) {
                         double acc = 0.0;
                         for (int bi = 0; bi < bs; ++bi) {
                           const std::size_t off =
                               (static_cast<std::size_t>(bi) * c + ci) * hw;
                           for (int i = 0; i < hw; ++i)
                             acc += gp[off + i] * xp[off + i];
                         }
                         out[ci] += acc;
                       });
      }
    };
  }
  return {id};
}

Value Tape::fc(Value z, Value w, Value b) {
  NdArray out =
      kernels::fc(nodes_[z.id].val, nodes_[w.id].val, nodes_[b.id].val);
  const bool req = nodes_[z.id].requires_grad || nodes_[w.id].requires_grad ||
                   nodes_[b.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int zi = z.id, wi = w.id, bi = b.id;
    nodes_[id].backprop = [id, zi, wi, bi](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      const NdArray& zv = t.nodes_[zi].val;
      const NdArray& wv = t.nodes_[wi].val;
      const int c = wv.dim(0), k = wv.dim(1);
      if (t.nodes_[zi].requires_grad) {
        NdArray& gz = t.grad_buf(zi);
        for (int j = 0; j < k; ++j) {
          double s = 0.0;
          for (int i = 0; i < c; ++i) s += g[i] * wv.at(i, j);
          gz[j] += s;
        }
      }
      if (t.nodes_[wi].requires_grad) {
        NdArray& gw = t.grad_buf(wi);
        for (int i = 0; i < c; ++i)
          for (int j = 0; j < k; ++j) gw.at(i, j) += g[i] * zv[j];
      }
      if (t.nodes_[bi].requires_grad) t.accumulate(bi, g);
    };
  }
  return {id};
}

Value Tape::mse(Value a, Value b) {
  const double v = kernels::mse(nodes_[a.id].val, nodes_[b.id].val);
  const bool req = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  const int id = push(NdArray({1}, v), req);
  if (req) {
    const int ai = a.id, bi = b.id;
    nodes_[id].backprop = [id, ai, bi](Tape& t) {
      const double g0 = t.nodes_[id].grad[0];
      const NdArray& av = t.nodes_[ai].val;
      const NdArray& bv = t.nodes_[bi].val;
      const double f = 2.0 * g0 / static_cast<double>(av.size());
      const double* ap = av.data();
      const double* bp = bv.data();
      if (t.nodes_[ai].requires_grad) {
        double* p = t.grad_buf(ai).data();
        for_each_index(av.size(), [p, ap, bp, f](std::size_t i) {
          p[i] += f * (ap[i] - bp[i]);
        });
      }
      if (t.nodes_[bi].requires_grad) {
        double* p = t.grad_buf(bi).data();
        for_each_index(av.size(), [p, ap, bp, f](std::size_t i) {
          p[i] -= f * (ap[i] - bp[i]);
        });
      }
    };
  }
  return {id};
}

Value Tape::matvec(Value x, const NdArray* m, bool transpose) {
  NdArray out = kernels::matvec(nodes_[x.id].val, *m, transpose);
  const bool req = nodes_[x.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id;
    nodes_[id].backprop = [id, xi, m, transpose](Tape& t) {
      NdArray gx = kernels::matvec(t.nodes_[id].grad, *m, !transpose);
      t.accumulate(xi, gx);
    };
  }
  return {id};
}

Value Tape::scale(Value s, Value x) {
  const NdArray& sv = nodes_[s.id].val;
  if (sv.size() != 1) throw DimensionError("scale: scalar node must have 1 element");
  NdArray out = nodes_[x.id].val;
  const double f = sv[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f;
  const bool req = nodes_[x.id].requires_grad || nodes_[s.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id, si = s.id;
    nodes_[id].backprop = [id, xi, si](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      const NdArray& xv = t.nodes_[xi].val;
      const double f = t.nodes_[si].val[0];
      if (t.nodes_[xi].requires_grad) t.accumulate_scaled(xi, g, f);
      if (t.nodes_[si].requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        t.grad_buf(si)[0] += acc;
      }
    };
  }
  return {id};
}

Value Tape::reshape(Value x, const Shape& s) {
  NdArray out = nodes_[x.id].val.reshaped(s);
  const bool req = nodes_[x.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id;
    nodes_[id].backprop = [id, xi](Tape& t) {
      const NdArray& g = t.nodes_[id].grad;
      NdArray& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    };
  }
  return {id};
}

Value Tape::fold(Value x, int rows, int cols) {
  NdArray out = kernels::fold_grid(nodes_[x.id].val, rows, cols);
  const bool req = nodes_[x.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id;
    nodes_[id].backprop = [id, xi, rows, cols](Tape& t) {
      NdArray gx = kernels::unfold_grid(t.nodes_[id].grad, rows, cols);
      t.accumulate(xi, gx);
    };
  }
  return {id};
}

Value Tape::unfold(Value x, int rows, int cols) {
  NdArray out = kernels::unfold_grid(nodes_[x.id].val, rows, cols);
  const bool req = nodes_[x.id].requires_grad;
  const int id = push(std::move(out), req);
  if (req) {
    const int xi = x.id;
    nodes_[id].backprop = [id, xi, rows, cols](Tape& t) {
      NdArray gx = kernels::fold_grid(t.nodes_[id].grad, rows, cols);
      t.accumulate(xi, gx);
    };
  }
  return {id};
}

void Tape::backward(Value loss) {
  if (nodes_[loss.id].val.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss.id].val.shape().str());
  // Interior gradients are per-call scratch; only leaves accumulate across
  // repeated backward calls.
  for (Node& n : nodes_)
    if (n.backprop && !n.grad.empty()) n.grad.fill(0.0);
  grad_buf(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
}

}  // namespace coast::ad
