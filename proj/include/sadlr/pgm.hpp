#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sadlr/mask.hpp"
#include "sadlr/tensor.hpp"

namespace sadlr::pgm {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // row-major, maxval 255
};

void write(const std::string& path, const GrayImage& image);
GrayImage read(const std::string& path);

/// Mask as 0 / 255.
void write_mask(const std::string& path, const BinaryMask& mask);
/// Any nonzero pixel reads back as 1.
BinaryMask read_mask(const std::string& path);
/// One file per channel of a [C x H x W] image in [0, 1]: <stem>_c<k>.pgm
void write_channels(const std::string& stem, const Tensor<float>& image);

} // namespace sadlr::pgm
