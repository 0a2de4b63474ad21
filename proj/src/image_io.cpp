// SPDX-License-Identifier: Apache-2.0

#include "ropim/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ropim/wire.hpp"

namespace ropim {

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_ppm: need 1 or 3 channels");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(size_t(img.width) * 3);
    for (uint32_t i = 0; i < img.height; ++i) {
        size_t t = 0;
        for (uint32_t j = 0; j < img.width; ++j)
            for (uint32_t c = 0; c < 3; ++c) {
                const double v = img.at(i, j, img.channels == 1 ? 0 : c);
                row[t++] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw wire::FormatError(path + ": not a P6 ppm");
    uint32_t w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || maxval != 255) throw wire::FormatError(path + ": unsupported ppm header");
    f.get();  // single whitespace after header
    Image img(h, w, 3);
    std::vector<uint8_t> row(size_t(w) * 3);
    for (uint32_t i = 0; i < h; ++i) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw wire::FormatError(path + ": truncated pixel data");
        size_t t = 0;
        for (uint32_t j = 0; j < w; ++j)
            for (uint32_t c = 0; c < 3; ++c) img.at(i, j, c) = row[t++] / 255.0;
    }
    return img;
}

DisplayMap minmax_display_map(const Image& img) {
    double lo = img.pixels.empty() ? 0.0 : img.pixels.front();
    double hi = lo;
    for (double v : img.pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) return {lo - 0.5, lo + 0.5};  // constant image -> mid-gray
    return {lo, hi};
}

Image apply_display_map(const Image& img, const DisplayMap& map) {
    Image out = img;
    const double scale = 1.0 / (map.hi - map.lo);
    for (double& v : out.pixels) v = (v - map.lo) * scale;
    return out;
}

}  // namespace ropim
