#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coast/image.hpp"

namespace coast {

// Procedural grayscale test image: smooth low-frequency background plus
// soft-edged shapes, gradients, and light oriented texture. Deterministic
// in (h, w, seed).
Image synth_image(int h, int w, uint64_t seed);

// Writes `count` synthetic images into dir as img_000.pgm, img_001.pgm, ...
// Returns the written paths.
std::vector<std::string> write_synth_dataset(const std::string& dir,
                                             int count, int h, int w,
                                             uint64_t seed);

}  // namespace coast
