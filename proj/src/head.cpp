#include "sadlr/head.hpp"

#include <cmath>
#include <numeric>

#include "init.hpp"
#include "sadlr/errors.hpp"

namespace sadlr {

std::string to_string(UpdateMode mode) { return mode == UpdateMode::sum ? "sum" : "replace"; }

UpdateMode parse_update_mode(const std::string& text) {
    if (text == "sum") {
        return UpdateMode::sum;
    }
    if (text == "replace") {
        return UpdateMode::replace;
    }
    throw ConfigError("unknown update mode '" + text + "' (expected sum or replace)");
}

void SadlrConfig::validate() const {
    if (iterations < 0) {
        throw ConfigError("iterations must be >= 0");
    }
    if (channels < 1) {
        throw ConfigError("channels must be >= 1");
    }
    if (!(ln_eps > 0.0)) {
        throw ConfigError("layer norm eps must be positive");
    }
    if (lambdas.size() != static_cast<std::size_t>(iterations)) {
        throw ConfigError("expected " + std::to_string(iterations) + " loss weights, got " +
                          std::to_string(lambdas.size()));
    }
    if (iterations == 0) {
        return;
    }
    if (structure.empty()) {
        throw ConfigError("structure must list at least one dynamic layer");
    }
    for (int s : structure) {
        if (s < 1) {
            throw ConfigError("structure entries must be >= 1");
        }
    }
    double total = 0.0;
    for (double l : lambdas) {
        if (!(l > 0.0)) {
            throw ConfigError("loss weights must be positive");
        }
        total += l;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw ConfigError("loss weights must sum to 1, got " + std::to_string(total));
    }
}

std::vector<double> lambda_preset(int iterations) {
    if (iterations <= 0) {
        return {};
    }
    if (iterations == 1) {
        return {1.0};
    }
    std::vector<double> out(static_cast<std::size_t>(iterations), 0.3 / (iterations - 1));
    out.back() = 0.7;
    return out;
}

template <typename T>
HeadParams<T> HeadParams<T>::init(const SadlrConfig& config, int lang_channels, std::mt19937_64& rng) {
    config.validate();
    if (lang_channels < 1) {
        throw ConfigError("language channels must be >= 1");
    }
    HeadParams<T> head;
    head.config = config;
    head.lang_channels = lang_channels;
    const int c = config.channels;
    if (config.iterations > 0) {
        head.sent_weight = Param<T>("head.sent.weight",
                                    detail::normal_tensor<T>({c, lang_channels}, 1.0 / std::sqrt(lang_channels), rng));
        head.sent_bias = Param<T>("head.sent.bias", Tensor<T>(Shape{c}));
        int in = c;
        for (std::size_t l = 0; l < config.structure.size(); ++l) {
            const int out = config.structure[l];
            const std::string prefix = "head.dyn" + std::to_string(l);
            DynLayerParams<T> layer;
            layer.in = in;
            layer.out = out;
            layer.gen_weight = Param<T>(prefix + ".gen.weight",
                                        detail::normal_tensor<T>({in * out, c}, 1.0 / std::sqrt(double(in) * c), rng));
            layer.gen_bias =
                Param<T>(prefix + ".gen.bias", detail::normal_tensor<T>({in * out}, 1.0 / std::sqrt(double(in)), rng));
            layer.ln_gamma = Param<T>(prefix + ".ln.gamma", Tensor<T>(Shape{out}, T(1)));
            layer.ln_beta = Param<T>(prefix + ".ln.beta", Tensor<T>(Shape{out}));
            head.layers.push_back(std::move(layer));
            in = out;
        }
    }
    const int ccls = config.classifier_channels();
    head.cls_weight =
        Param<T>("head.cls.weight", detail::normal_tensor<T>({2, ccls, 1, 1}, 1.0 / std::sqrt(double(ccls)), rng));
    head.cls_bias = Param<T>("head.cls.bias", Tensor<T>(Shape{2}));
    return head;
}

template <typename T>
std::vector<Param<T>*> HeadParams<T>::params() {
    std::vector<Param<T>*> out;
    if (config.iterations > 0) {
        out.push_back(&sent_weight);
        out.push_back(&sent_bias);
        for (auto& layer : layers) {
            out.push_back(&layer.gen_weight);
            out.push_back(&layer.gen_bias);
            out.push_back(&layer.ln_gamma);
            out.push_back(&layer.ln_beta);
        }
    }
    out.push_back(&cls_weight);
    out.push_back(&cls_bias);
    return out;
}

template <typename T>
Query init_sentence_query(Tape<T>& t, HeadParams<T>& head, Var words, int valid) {
    if (valid < 1) {
        throw ContractError("init_sentence_query: at least one valid word is required");
    }
    Var pooled = mean_columns(t, words, valid);
    return Query{linear(t, t.param(head.sent_weight), t.param(head.sent_bias), pooled)};
}

template <typename T>
Var generate_kernel(Tape<T>& t, Query q, Param<T>& gen_weight, Param<T>& gen_bias, int in, int out) {
    const Tensor<T>& w = gen_weight.value;
    if (w.rank() != 2 || w.dim(0) != in * out) {
        throw ShapeError("generate_kernel: generator " + shape_string(w.shape()) + " cannot produce a " +
                         std::to_string(in) + "x" + std::to_string(out) + " kernel");
    }
    Var flat = linear(t, t.param(gen_weight), t.param(gen_bias), q.vector);
    return reshape(t, flat, Shape{in, out});
}

template <typename T>
DynKernel generate_kernels(Tape<T>& t, HeadParams<T>& head, Query q) {
    DynKernel kernel;
    for (auto& layer : head.layers) {
        kernel.layers.push_back(generate_kernel(t, q, layer.gen_weight, layer.gen_bias, layer.in, layer.out));
    }
    return kernel;
}

template <typename T>
Var dynconv_block(Tape<T>& t, HeadParams<T>& head, Query q, Var features) {
    const Tensor<T>& y = t.value(features);
    if (y.rank() != 3 || y.dim(0) != head.config.channels) {
        throw ShapeError("dynconv_block: features " + shape_string(y.shape()) + " do not have " +
                         std::to_string(head.config.channels) + " channels");
    }
    const int height = y.dim(1);
    const int width = y.dim(2);
    DynKernel kernel = generate_kernels(t, head, q);
    Var current = features;
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        auto& layer = head.layers[l];
        // Kernel is [in x out]; each pixel's feature vector f maps to K^T f.
        Var mixed = matmul(t, transpose(t, kernel.layers[l]), reshape(t, current, Shape{layer.in, height * width}));
        Var normed = layer_norm(t, reshape(t, mixed, Shape{layer.out, height, width}), t.param(layer.ln_gamma),
                                t.param(layer.ln_beta), static_cast<T>(head.config.ln_eps));
        current = relu(t, normed);
    }
    return current;
}

template <typename T>
Var classify_scores(Tape<T>& t, HeadParams<T>& head, Var z) {
    return conv2d(t, z, t.param(head.cls_weight), t.param(head.cls_bias), 1, 0);
}

template <typename T>
BinaryMask mask_argmax(const Tensor<T>& scores) {
    if (scores.rank() != 3 || scores.dim(0) != 2) {
        throw ShapeError("mask_argmax: expected [2 x H x W] scores, got " + shape_string(scores.shape()));
    }
    const int height = scores.dim(1);
    const int width = scores.dim(2);
    BinaryMask mask(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            mask.set(y, x, scores.at(1, y, x) > scores.at(0, y, x));
        }
    }
    return mask;
}

template <typename T>
Var pool_object(Tape<T>& t, const BinaryMask& mask, Var features) {
    const Tensor<T>& y = t.value(features);
    if (y.rank() != 3 || y.dim(1) != mask.height() || y.dim(2) != mask.width()) {
        throw ShapeError("pool_object: mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                         " vs features " + shape_string(y.shape()));
    }
    return masked_spatial_mean(t, features, mask.bits());
}

template <typename T>
Query update_query(Tape<T>& t, Query q, Var object, UpdateMode mode) {
    if (t.value(q.vector).shape() != t.value(object).shape()) {
        throw ShapeError("update_query: query " + shape_string(t.value(q.vector).shape()) + " vs object " +
                         shape_string(t.value(object).shape()));
    }
    if (mode == UpdateMode::replace) {
        return Query{object};
    }
    return Query{add(t, q.vector, object)};
}

template <typename T>
HeadOutput sadlr_forward(Tape<T>& t, HeadParams<T>& head, Var features, Var words, int valid) {
    HeadOutput out;
    const int n = head.config.iterations;
    if (n == 0) {
        Var scores = classify_scores(t, head, features);
        out.scores.push_back(scores);
        out.masks.push_back(mask_argmax(t.value(scores)));
        return out;
    }
    Query q = init_sentence_query(t, head, words, valid);
    for (int i = 0; i < n; ++i) {
        out.queries.push_back(q);
        Var z = dynconv_block(t, head, q, features);
        Var scores = classify_scores(t, head, z);
        out.scores.push_back(scores);
        out.masks.push_back(mask_argmax(t.value(scores)));
        if (i + 1 < n) {
            Var object = pool_object(t, out.masks.back(), features);
            out.objects.push_back(object);
            q = update_query(t, q, object, head.config.update_mode);
        }
    }
    return out;
}

#define SADLR_INSTANTIATE_HEAD(T)                                                                  \
    template struct HeadParams<T>;                                                                 \
    template Query init_sentence_query<T>(Tape<T>&, HeadParams<T>&, Var, int);                     \
    template Var generate_kernel<T>(Tape<T>&, Query, Param<T>&, Param<T>&, int, int);              \
    template DynKernel generate_kernels<T>(Tape<T>&, HeadParams<T>&, Query);                       \
    template Var dynconv_block<T>(Tape<T>&, HeadParams<T>&, Query, Var);                           \
    template Var classify_scores<T>(Tape<T>&, HeadParams<T>&, Var);                                \
    template BinaryMask mask_argmax<T>(const Tensor<T>&);                                          \
    template Var pool_object<T>(Tape<T>&, const BinaryMask&, Var);                                 \
    template Query update_query<T>(Tape<T>&, Query, Var, UpdateMode);                              \
    template HeadOutput sadlr_forward<T>(Tape<T>&, HeadParams<T>&, Var, Var, int);

SADLR_INSTANTIATE_HEAD(float)
SADLR_INSTANTIATE_HEAD(double)

} // namespace sadlr
