#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adgen/tensor.hpp"

namespace adgen {

// 8-bit interleaved image (RGB or grayscale), row-major.
struct Image8 {
    int w = 0, h = 0, c = 0;
    std::vector<uint8_t> pix;

    Image8() = default;
    Image8(int width, int height, int channels, uint8_t fill = 0)
        : w(width), h(height), c(channels),
          pix(static_cast<size_t>(width) * height * channels, fill) {}

    uint8_t& at(int y, int x, int ch) {
        return pix[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    uint8_t at(int y, int x, int ch) const {
        return pix[(static_cast<size_t>(y) * w + x) * c + ch];
    }
};

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

// Byte <-> tensor mapping: [0,255] maps linearly onto [-1,1]. Round-trips
// byte-exactly for every 8-bit value.
Tensor image_to_tensor(const Image8& img);           // c x h x w
Image8 tensor_to_image(const Tensor& t);             // clamps to [-1,1] first
double byte_to_unit(uint8_t b);
uint8_t unit_to_byte(double v);

// Masks are single-channel PNGs with {0,255}; in memory they are HxW {0,1}.
Tensor mask_to_tensor(const Image8& img);
Image8 mask_to_image(const Tensor& m);

}  // namespace adgen
