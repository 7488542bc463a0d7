#pragma once

#include <random>
#include <span>
#include <vector>

#include "sadlr/autodiff.hpp"

namespace sadlr {

inline constexpr int kPadId = 0;

/// Fixed-length token ids; entries at and beyond `valid` are the pad id.
struct TokenSeq {
    std::vector<int> ids;
    int valid = 0;

    /// Throws ContractError if the padding invariant does not hold.
    void validate() const;
    bool operator==(const TokenSeq&) const = default;
};

struct EncoderConfig {
    int channels = 32;
    int lang_channels = 48;
    int vocab = 11;
};

/// Multi-modal features Y, word features L, and the live word count.
struct Encoded {
    Var features;
    Var words;
    int valid = 0;
};

/// Anything that turns an image and an expression into (Y, L, valid) can
/// feed the iterative head.
template <typename T>
class MultiModalEncoder {
  public:
    virtual ~MultiModalEncoder() = default;
    virtual Encoded encode(Tape<T>& t, const Tensor<T>& image, const TokenSeq& tokens) = 0;
    virtual int stride() const = 0;
    virtual int channels() const = 0;
    virtual int lang_channels() const = 0;
    virtual std::vector<Param<T>*> params() = 0;
};

/// Two strided conv stages for vision, an embedding table for language, and
/// a 1x1 fusion of the visual map with the broadcast sentence vector.
template <typename T>
class ToyEncoder final : public MultiModalEncoder<T> {
  public:
    static constexpr int kStride = 4;

    ToyEncoder(const EncoderConfig& config, std::mt19937_64& rng);

    Encoded encode(Tape<T>& t, const Tensor<T>& image, const TokenSeq& tokens) override;
    int stride() const override { return kStride; }
    int channels() const override { return config_.channels; }
    int lang_channels() const override { return config_.lang_channels; }
    std::vector<Param<T>*> params() override;

    const EncoderConfig& config() const { return config_; }

    Param<T> conv1_weight; // [C/2 x 3 x 3 x 3]
    Param<T> conv1_bias;
    Param<T> conv2_weight; // [C x C/2 x 3 x 3]
    Param<T> conv2_bias;
    Param<T> embedding;    // [V x C_l]
    Param<T> sent_weight;  // [C x C_l]
    Param<T> sent_bias;
    Param<T> fuse_weight;  // [C x 2C x 1 x 1]
    Param<T> fuse_bias;

  private:
    EncoderConfig config_;
};

template <typename T>
Var encode_tokens(Tape<T>& t, Param<T>& table, const TokenSeq& tokens);

/// image [3 x H0 x W0] -> V [C x H0/4 x W0/4]
template <typename T>
Var encode_image(Tape<T>& t, ToyEncoder<T>& enc, Var image);

template <typename T>
Var fuse_multimodal(Tape<T>& t, ToyEncoder<T>& enc, Var visual, Var words, int valid);

} // namespace sadlr
