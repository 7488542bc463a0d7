#pragma once

#include <cstdint>

#include "sadlr/model.hpp"

namespace sadlr {

/// Analytic multiply-add counts for one single-sample forward pass.
/// Selection by a binary mask, argmax, normalization and activations are
/// not multiply-adds and are not counted.
struct FlopReport {
    std::int64_t encoder = 0;
    std::int64_t head = 0;
    /// Sentence projection, paid once per forward (zero when n = 0).
    std::int64_t head_fixed = 0;
    /// Kernel generation + dynamic layers + classifier for one iteration.
    std::int64_t head_per_iteration = 0;
    int iterations = 0;

    double overhead_percent() const { return encoder == 0 ? 0.0 : 100.0 * double(head) / double(encoder); }
};

FlopReport count_flops(const ModelConfig& config, int image_height, int image_width);

} // namespace sadlr
