// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ropim/image.hpp"

namespace ropim {

// 8-bit binary PPM (P6). Inputs are clamped to [0, 1]; single-channel
// images are written as gray RGB.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Affine display mapping for images that may hold signed values:
// v_display = (v - lo) / (hi - lo). Constant images render mid-gray.
struct DisplayMap {
    double lo = 0.0;
    double hi = 1.0;
};

DisplayMap minmax_display_map(const Image& img);
Image apply_display_map(const Image& img, const DisplayMap& map);

}  // namespace ropim
