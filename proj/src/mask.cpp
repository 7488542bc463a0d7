#include "sadlr/mask.hpp"

#include <algorithm>

#include "sadlr/errors.hpp"

namespace sadlr {

BinaryMask::BinaryMask(int height, int width)
    : height_(height), width_(width),
      bits_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0) {
    if (height < 1 || width < 1) {
        throw ShapeError("mask extents must be >= 1");
    }
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits) : BinaryMask(height, width) {
    if (bits.size() != bits_.size()) {
        throw ShapeError("mask payload of " + std::to_string(bits.size()) + " entries does not fit " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    if (std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b > 1; })) {
        throw ContractError("mask entries must be 0 or 1");
    }
    bits_ = std::move(bits);
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::inverted() const {
    BinaryMask out = *this;
    for (auto& b : out.bits_) {
        b = static_cast<std::uint8_t>(1 - b);
    }
    return out;
}

} // namespace sadlr
