#pragma once

#include "coast/autodiff.hpp"
#include "coast/image.hpp"
#include "coast/ndarray.hpp"

namespace coast {

// Vectorized non-overlapping patches of a 1-channel image, with the grid
// geometry needed to put them back. Patches are in raster-scan order.
struct PatchGrid {
  int side = 0;       // sqrt(N)
  int rows = 0;
  int cols = 0;
  int orig_h = 0;     // pre-padding dimensions
  int orig_w = 0;
  NdArray patches;    // {rows*cols, side*side}

  int count() const { return rows * cols; }
  int patch_dim() const { return side * side; }
};

// Splits a 1-channel image into side x side patches. The image is
// reflect-padded on the bottom/right to the next multiple of side.
PatchGrid partition(const Image& img, int side);

// Reassembles a {B,C,h,w} batch into a {1,C,rows*h,cols*w} whole image by
// grid position; unfold is the exact inverse. Both are bit-exact
// rearrangements (aliases of the autodiff kernels).
inline NdArray fold(const NdArray& batch, int rows, int cols) {
  return ad::kernels::fold_grid(batch, rows, cols);
}
inline NdArray unfold(const NdArray& image, int rows, int cols) {
  return ad::kernels::unfold_grid(image, rows, cols);
}

// Folds a {B,N} patch batch back into an image cropped to the grid's
// original size, clamping values to [0,1].
Image grid_to_image(const PatchGrid& grid, const NdArray& patches);

}  // namespace coast
