#include "sadlr/encoder.hpp"

#include <cmath>

#include "init.hpp"
#include "sadlr/errors.hpp"

namespace sadlr {

void TokenSeq::validate() const {
    if (valid < 1 || valid > static_cast<int>(ids.size())) {
        throw ContractError("token sequence: valid count " + std::to_string(valid) + " outside [1, " +
                            std::to_string(ids.size()) + "]");
    }
    for (std::size_t i = static_cast<std::size_t>(valid); i < ids.size(); ++i) {
        if (ids[i] != kPadId) {
            throw ContractError("token sequence: non-pad id after the valid prefix");
        }
    }
}

template <typename T>
ToyEncoder<T>::ToyEncoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
    const int c = config.channels;
    const int l = config.lang_channels;
    if (c < 2 || c % 2 != 0 || l < 1 || config.vocab < 2) {
        throw ConfigError("toy encoder needs an even channel count >= 2, language channels >= 1 and vocab >= 2");
    }
    const int half = c / 2;
    conv1_weight = Param<T>("encoder.conv1.weight", detail::normal_tensor<T>({half, 3, 3, 3}, std::sqrt(2.0 / 27), rng));
    conv1_bias = Param<T>("encoder.conv1.bias", Tensor<T>(Shape{half}));
    conv2_weight =
        Param<T>("encoder.conv2.weight", detail::normal_tensor<T>({c, half, 3, 3}, std::sqrt(2.0 / (half * 9)), rng));
    conv2_bias = Param<T>("encoder.conv2.bias", Tensor<T>(Shape{c}));
    embedding = Param<T>("encoder.embed.table", detail::normal_tensor<T>({config.vocab, l}, 1.0, rng));
    sent_weight = Param<T>("encoder.sent.weight", detail::normal_tensor<T>({c, l}, 1.0 / std::sqrt(l), rng));
    sent_bias = Param<T>("encoder.sent.bias", Tensor<T>(Shape{c}));
    fuse_weight =
        Param<T>("encoder.fuse.weight", detail::normal_tensor<T>({c, 2 * c, 1, 1}, std::sqrt(2.0 / (2 * c)), rng));
    fuse_bias = Param<T>("encoder.fuse.bias", Tensor<T>(Shape{c}));
}

template <typename T>
std::vector<Param<T>*> ToyEncoder<T>::params() {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &embedding,
            &sent_weight,  &sent_bias,  &fuse_weight,  &fuse_bias};
}

template <typename T>
Encoded ToyEncoder<T>::encode(Tape<T>& t, const Tensor<T>& image, const TokenSeq& tokens) {
    tokens.validate();
    Var img = t.constant(image);
    Var visual = encode_image(t, *this, img);
    Var words = encode_tokens(t, embedding, tokens);
    return Encoded{fuse_multimodal(t, *this, visual, words, tokens.valid), words, tokens.valid};
}

template <typename T>
Var encode_tokens(Tape<T>& t, Param<T>& table, const TokenSeq& tokens) {
    return embedding_lookup(t, t.param(table), std::span<const int>(tokens.ids));
}

template <typename T>
Var encode_image(Tape<T>& t, ToyEncoder<T>& enc, Var image) {
    const Tensor<T>& img = t.value(image);
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw ShapeError("encode_image: expected [3 x H x W], got " + shape_string(img.shape()));
    }
    if (img.dim(1) % ToyEncoder<T>::kStride != 0 || img.dim(2) % ToyEncoder<T>::kStride != 0) {
        throw ConfigError("encode_image: image " + shape_string(img.shape()) + " is not divisible by stride " +
                          std::to_string(ToyEncoder<T>::kStride));
    }
    Var h = relu(t, conv2d(t, image, t.param(enc.conv1_weight), t.param(enc.conv1_bias), 2, 1));
    return relu(t, conv2d(t, h, t.param(enc.conv2_weight), t.param(enc.conv2_bias), 2, 1));
}

template <typename T>
Var fuse_multimodal(Tape<T>& t, ToyEncoder<T>& enc, Var visual, Var words, int valid) {
    const Tensor<T>& v = t.value(visual);
    if (v.rank() != 3 || v.dim(0) != enc.channels()) {
        throw ShapeError("fuse_multimodal: visual features " + shape_string(v.shape()) + " do not have " +
                         std::to_string(enc.channels()) + " channels");
    }
    Var sentence = linear(t, t.param(enc.sent_weight), t.param(enc.sent_bias), mean_columns(t, words, valid));
    Var spread = broadcast_spatial(t, sentence, v.dim(1), v.dim(2));
    Var joint = concat_channels(t, visual, spread);
    return relu(t, conv2d(t, joint, t.param(enc.fuse_weight), t.param(enc.fuse_bias), 1, 0));
}

template class ToyEncoder<float>;
template class ToyEncoder<double>;
template Var encode_tokens<float>(Tape<float>&, Param<float>&, const TokenSeq&);
template Var encode_tokens<double>(Tape<double>&, Param<double>&, const TokenSeq&);
template Var encode_image<float>(Tape<float>&, ToyEncoder<float>&, Var);
template Var encode_image<double>(Tape<double>&, ToyEncoder<double>&, Var);
template Var fuse_multimodal<float>(Tape<float>&, ToyEncoder<float>&, Var, Var, int);
template Var fuse_multimodal<double>(Tape<double>&, ToyEncoder<double>&, Var, Var, int);

} // namespace sadlr
