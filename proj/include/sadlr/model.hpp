#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sadlr/encoder.hpp"
#include "sadlr/head.hpp"

namespace sadlr {

struct ModelConfig {
    EncoderConfig encoder;
    SadlrConfig head;

    void validate() const;
};

/// Encoder plus iterative head.
template <typename T>
class Model {
  public:
    struct Forward {
        Encoded encoded;
        HeadOutput head;
    };

    /// Toy encoder and head, initialized from `seed`.
    Model(const ModelConfig& config, std::uint64_t seed);
    /// Any encoder honoring the interface; `head` must match its channel sizes.
    Model(std::unique_ptr<MultiModalEncoder<T>> encoder, HeadParams<T> head);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Forward forward(Tape<T>& t, const Tensor<T>& image, const TokenSeq& tokens);

    const ModelConfig& config() const { return config_; }
    MultiModalEncoder<T>& encoder() { return *encoder_; }
    HeadParams<T>& head() { return head_; }
    std::vector<Param<T>*> params();
    void zero_grad();

    /// Copies every parameter value from a model of identical layout.
    template <typename U>
    void copy_values_from(Model<U>& other);

  private:
    ModelConfig config_;
    std::unique_ptr<MultiModalEncoder<T>> encoder_;
    HeadParams<T> head_;
};

extern template class Model<float>;
extern template class Model<double>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// SDLR checkpoint bytes (values stored as f32).
template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(Model<T>& model);
template <typename T>
std::unique_ptr<Model<T>> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(Model<float>& model, const std::string& path);
template <typename T>
std::unique_ptr<Model<T>> load_checkpoint(const std::string& path);

} // namespace sadlr
