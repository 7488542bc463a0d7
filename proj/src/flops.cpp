#include "sadlr/flops.hpp"

#include "sadlr/errors.hpp"

namespace sadlr {

namespace {

int conv_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

} // namespace

FlopReport count_flops(const ModelConfig& config, int image_height, int image_width) {
    config.validate();
    if (image_height % 4 != 0 || image_width % 4 != 0) {
        throw ConfigError("count_flops: image extents must be divisible by 4");
    }
    const std::int64_t c = config.encoder.channels;
    const std::int64_t half = c / 2;
    const std::int64_t lang = config.encoder.lang_channels;
    const std::int64_t h1 = conv_extent(image_height, 3, 2, 1);
    const std::int64_t w1 = conv_extent(image_width, 3, 2, 1);
    const std::int64_t h2 = conv_extent(static_cast<int>(h1), 3, 2, 1);
    const std::int64_t w2 = conv_extent(static_cast<int>(w1), 3, 2, 1);
    const std::int64_t plane = h2 * w2;

    FlopReport r;
    r.encoder = half * h1 * w1 * 3 * 9     // conv1
                + c * plane * half * 9     // conv2
                + c * lang                 // sentence projection
                + c * plane * 2 * c;       // 1x1 fusion
    r.iterations = config.head.iterations;
    if (r.iterations == 0) {
        r.head = plane * c * 2;
        return r;
    }
    r.head_fixed = c * lang;
    std::int64_t in = c;
    for (int out : config.head.structure) {
        r.head_per_iteration += c * in * out;     // kernel generator
        r.head_per_iteration += plane * in * out; // per-pixel channel mixing
        in = out;
    }
    r.head_per_iteration += plane * in * 2; // classifier
    r.head = r.head_fixed + r.iterations * r.head_per_iteration;
    return r;
}

} // namespace sadlr
