#include "sadlr/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sadlr/errors.hpp"

namespace sadlr::pgm {

void write(const std::string& path, const GrayImage& image) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

GrayImage read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "' for reading");
    }
    std::string magic;
    GrayImage image;
    int maxval = 0;
    in >> magic >> image.width >> image.height >> maxval;
    if (magic != "P5" || maxval != 255 || image.width < 1 || image.height < 1) {
        throw FormatError("'" + path + "' is not an 8-bit binary PGM", 0);
    }
    in.get();
    const auto header = static_cast<std::size_t>(in.tellg());
    image.pixels.resize(static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height));
    in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
        throw FormatError("truncated PGM payload in '" + path + "'", header + static_cast<std::size_t>(in.gcount()));
    }
    return image;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
    GrayImage image{mask.width(), mask.height(), {}};
    image.pixels.reserve(mask.size());
    for (std::uint8_t b : mask.bits()) {
        image.pixels.push_back(b != 0 ? 255 : 0);
    }
    write(path, image);
}

BinaryMask read_mask(const std::string& path) {
    GrayImage image = read(path);
    std::vector<std::uint8_t> bits(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bits.begin(),
                   [](std::uint8_t p) { return static_cast<std::uint8_t>(p != 0 ? 1 : 0); });
    return BinaryMask(image.height, image.width, std::move(bits));
}

void write_channels(const std::string& stem, const Tensor<float>& image) {
    if (image.rank() != 3) {
        throw ShapeError("write_channels: expected [C x H x W], got " + shape_string(image.shape()));
    }
    for (int c = 0; c < image.dim(0); ++c) {
        GrayImage out{image.dim(2), image.dim(1), {}};
        for (int y = 0; y < image.dim(1); ++y) {
            for (int x = 0; x < image.dim(2); ++x) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                out.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
            }
        }
        write(stem + "_c" + std::to_string(c) + ".pgm", out);
    }
}

} // namespace sadlr::pgm
