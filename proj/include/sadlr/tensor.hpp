#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sadlr {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. A default-constructed tensor is "unset" and only
/// used as a lazy placeholder; every constructed tensor has rank >= 1 and
/// extents >= 1.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

    bool empty() const { return shape_.empty(); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::size_t size() const { return data_.size(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int i, int j) { return data_[offset2(i, j)]; }
    const T& at(int i, int j) const { return data_[offset2(i, j)]; }
    T& at(int c, int h, int w) { return data_[offset3(c, h, w)]; }
    const T& at(int c, int h, int w) const { return data_[offset3(c, h, w)]; }

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;
    void fill(T value);
    /// Elementwise accumulate; shapes must match.
    void add_(const Tensor& other);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const = default;

  private:
    std::size_t offset2(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(j);
    }
    std::size_t offset3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(h)) *
                   static_cast<std::size_t>(shape_[2]) +
               static_cast<std::size_t>(w);
    }

    Shape shape_;
    std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace sadlr
