// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace ropim {

// Row-major H x W x C, channel-fastest. Raw pixel range is [0, 1];
// standardized images may hold any finite values.
struct Image {
    uint32_t height = 0;
    uint32_t width = 0;
    uint32_t channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(uint32_t h, uint32_t w, uint32_t c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(size_t(h) * w * c, fill) {}

    double& at(uint32_t i, uint32_t j, uint32_t c) {
        return pixels[(size_t(i) * width + j) * channels + c];
    }
    double at(uint32_t i, uint32_t j, uint32_t c) const {
        return pixels[(size_t(i) * width + j) * channels + c];
    }
    size_t size() const { return pixels.size(); }
};

inline Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (uint32_t i = 0; i < img.height; ++i)
        for (uint32_t j = 0; j < img.width; ++j)
            for (uint32_t c = 0; c < img.channels; ++c)
                out.at(i, j, c) = img.at(i, img.width - 1 - j, c);
    return out;
}

}  // namespace ropim
