#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sadlr {

/// H x W grid whose entries are exactly 0 or 1.
class BinaryMask {
  public:
    BinaryMask() = default;
    BinaryMask(int height, int width);
    /// Throws ContractError if any entry is not 0 or 1.
    BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return bits_.size(); }

    bool get(int y, int x) const { return bits_[index(y, x)] != 0; }
    void set(int y, int x, bool on) { bits_[index(y, x)] = on ? 1 : 0; }

    std::span<const std::uint8_t> bits() const { return bits_; }
    std::size_t count() const;
    BinaryMask inverted() const;

    bool operator==(const BinaryMask&) const = default;

  private:
    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

} // namespace sadlr
