#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "sadlr/errors.hpp"

namespace sadlr::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
  public:
    template <typename U>
    void put(U value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(U));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

  private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const char* what) {
        U value;
        get_bytes(&value, sizeof(U), what);
        return value;
    }
    void get_bytes(void* out, std::size_t n, const char* what) {
        if (bytes_.size() - offset_ < n) {
            throw FormatError(std::string("truncated file while reading ") + what, offset_);
        }
        std::memcpy(out, bytes_.data() + offset_, n);
        offset_ += n;
    }
    std::size_t offset() const { return offset_; }
    bool at_end() const { return offset_ == bytes_.size(); }

  private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

} // namespace sadlr::detail
