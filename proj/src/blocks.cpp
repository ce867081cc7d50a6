#include "coast/blocks.hpp"

namespace coast {

namespace {

// Reflects an out-of-range index back into [0, n), mirroring about the
// edges without repeating them; bounces handle pads wider than the image.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

PatchGrid partition(const Image& img, int side) {
  if (img.channels != 1)
    throw DimensionError("partition: image must be 1-channel");
  if (img.height < 1 || img.width < 1)
    throw DimensionError("partition: empty image");
  if (side < 1) throw ContractError("partition: patch side must be >= 1");

  PatchGrid grid;
  grid.side = side;
  grid.orig_h = img.height;
  grid.orig_w = img.width;
  grid.rows = (img.height + side - 1) / side;
  grid.cols = (img.width + side - 1) / side;
  grid.patches = NdArray({grid.rows * grid.cols, side * side});

  for (int gy = 0; gy < grid.rows; ++gy)
    for (int gx = 0; gx < grid.cols; ++gx) {
      const int bi = gy * grid.cols + gx;
      for (int y = 0; y < side; ++y) {
        const int sy = reflect_index(gy * side + y, img.height);
        for (int x = 0; x < side; ++x) {
          const int sx = reflect_index(gx * side + x, img.width);
          grid.patches.at(bi, y * side + x) = img.at(0, sy, sx);
        }
      }
    }
  return grid;
}

Image grid_to_image(const PatchGrid& grid, const NdArray& patches) {
  if (patches.ndim() != 2 || patches.dim(0) != grid.count() ||
      patches.dim(1) != grid.patch_dim())
    throw DimensionError("grid_to_image: patch batch " +
                         patches.shape().str() + " does not match grid");
  const NdArray whole = fold(
      patches.reshaped({grid.count(), 1, grid.side, grid.side}), grid.rows,
      grid.cols);
  NdArray cropped({grid.orig_h, grid.orig_w});
  for (int y = 0; y < grid.orig_h; ++y)
    for (int x = 0; x < grid.orig_w; ++x)
      cropped.at(y, x) = whole.at(0, 0, y, x);
  return make_image(grid.orig_h, grid.orig_w, 1, cropped);
}

}  // namespace coast
