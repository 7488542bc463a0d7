#pragma once

#include <random>

#include "sadlr/tensor.hpp"

namespace sadlr::detail {

// Draws in double and narrows, so float and double models built from the same
// seed hold the same rounded weights.
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor<T> out(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : out.data()) {
        v = static_cast<T>(static_cast<float>(dist(rng)));
    }
    return out;
}

} // namespace sadlr::detail
