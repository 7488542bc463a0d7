#pragma once

#include <random>
#include <string>
#include <vector>

#include "sadlr/autodiff.hpp"
#include "sadlr/mask.hpp"

namespace sadlr {

enum class UpdateMode { sum, replace };

std::string to_string(UpdateMode mode);
UpdateMode parse_update_mode(const std::string& text);

/// Hyper-parameters of the iterative head.
struct SadlrConfig {
    int iterations = 3;
    int channels = 32;
    /// Output channels of each dynamic layer; layer 0 maps `channels` to
    /// structure[0], layer l maps structure[l-1] to structure[l].
    std::vector<int> structure{8, 32};
    std::vector<double> lambdas{0.15, 0.15, 0.7};
    UpdateMode update_mode = UpdateMode::sum;
    double ln_eps = 1e-5;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
    /// Input channels of the shared classifier.
    int classifier_channels() const { return iterations == 0 ? channels : structure.back(); }
};

/// Loss weights per iteration count: a heavy last iteration, the rest split evenly.
std::vector<double> lambda_preset(int iterations);

/// Query vector Q_i (Q_1 is the sentence vector S).
struct Query {
    Var vector;
};

/// Per-sample kernels generated from one query, one per dynamic layer.
struct DynKernel {
    std::vector<Var> layers;
};

template <typename T>
struct DynLayerParams {
    int in = 0;
    int out = 0;
    Param<T> gen_weight; // [(in*out) x C]
    Param<T> gen_bias;   // [in*out]
    Param<T> ln_gamma;   // [out]
    Param<T> ln_beta;    // [out]
};

/// The single set of head weights. Every iteration reuses these.
template <typename T>
struct HeadParams {
    SadlrConfig config;
    int lang_channels = 0;
    Param<T> sent_weight; // [C x C_l]
    Param<T> sent_bias;   // [C]
    std::vector<DynLayerParams<T>> layers;
    Param<T> cls_weight; // [2 x Ccls x 1 x 1]
    Param<T> cls_bias;   // [2]

    HeadParams() = default;
    HeadParams(const HeadParams&) = delete;
    HeadParams& operator=(const HeadParams&) = delete;
    HeadParams(HeadParams&&) = default;
    HeadParams& operator=(HeadParams&&) = default;

    static HeadParams init(const SadlrConfig& config, int lang_channels, std::mt19937_64& rng);
    std::vector<Param<T>*> params();
};

/// Everything one forward pass of the head produces.
struct HeadOutput {
    std::vector<Var> scores;        // R_i, [2 x H x W]
    std::vector<BinaryMask> masks;  // M_i at feature resolution
    std::vector<Query> queries;     // Q_i
    std::vector<Var> objects;       // O_i for i < n
};

template <typename T>
Query init_sentence_query(Tape<T>& t, HeadParams<T>& head, Var words, int valid);

template <typename T>
Var generate_kernel(Tape<T>& t, Query q, Param<T>& gen_weight, Param<T>& gen_bias, int in, int out);

template <typename T>
DynKernel generate_kernels(Tape<T>& t, HeadParams<T>& head, Query q);

/// Two (or more) query-conditioned channel-mixing layers, each followed by
/// layer norm and ReLU. Pure per-location transform.
template <typename T>
Var dynconv_block(Tape<T>& t, HeadParams<T>& head, Query q, Var features);

template <typename T>
Var classify_scores(Tape<T>& t, HeadParams<T>& head, Var z);

/// 1 where the object score strictly beats the background score.
template <typename T>
BinaryMask mask_argmax(const Tensor<T>& scores);

template <typename T>
Var pool_object(Tape<T>& t, const BinaryMask& mask, Var features);

template <typename T>
Query update_query(Tape<T>& t, Query q, Var object, UpdateMode mode);

template <typename T>
HeadOutput sadlr_forward(Tape<T>& t, HeadParams<T>& head, Var features, Var words, int valid);

} // namespace sadlr
