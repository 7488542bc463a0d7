#include "sadlr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sadlr/errors.hpp"
#include "sadlr/loss.hpp"

namespace sadlr {

AdamW::AdamW(std::vector<Param<float>*> params, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param<float>* p : params_) {
        m_.emplace_back(p->value.size(), 0.0f);
        v_.emplace_back(p->value.size(), 0.0f);
    }
}

void AdamW::step(double lr, double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param<float>& p = *params_[k];
        if (!p.trainable) {
            continue;
        }
        auto value = p.value.data();
        auto grad = p.grad.data();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = static_cast<double>(grad[i]) * grad_scale;
            m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
            v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
            const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            value[i] = static_cast<float>(value[i] - lr * (update + weight_decay_ * value[i]));
        }
    }
}

double poly_lr(double base, std::int64_t step, std::int64_t total, double power) {
    if (total <= 0) {
        return base;
    }
    const double frac = std::clamp(1.0 - static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return base * std::pow(frac, power);
}

namespace {

int feature_stride(Model<float>& model) { return model.encoder().stride(); }

} // namespace

LossReport sample_loss(Model<float>& model, const refshapes::Sample& sample) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    auto fwd = model.forward(tape, sample.image, sample.tokens);
    auto loss = head_loss(tape, fwd.head, sample.gt, feature_stride(model), model.config().head.lambdas);
    std::vector<double> per;
    for (Var v : loss.per_iteration) {
        per.push_back(tape.value(v)[0]);
    }
    LossReport report;
    report.per_iteration = std::move(per);
    report.total = tape.value(loss.total)[0];
    return report;
}

double dataset_loss(Model<float>& model, std::span<const refshapes::Sample> samples) {
    if (samples.empty()) {
        throw ContractError("dataset_loss: empty dataset");
    }
    double total = 0.0;
    for (const auto& s : samples) {
        total += sample_loss(model, s).total;
    }
    return total / static_cast<double>(samples.size());
}

TrainResult train(Model<float>& model, std::span<const refshapes::Sample> samples, const TrainOptions& options,
                  const std::function<void(int, double)>& on_epoch) {
    if (samples.empty()) {
        throw ContractError("train: empty dataset");
    }
    check_compatible(model.config(), samples);
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = samples.size();
    const auto batch = static_cast<std::size_t>(options.batch_size);
    const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
    const std::int64_t total_steps = steps_per_epoch * options.epochs;
    AdamW optimizer(model.params(), options.weight_decay);
    std::mt19937_64 shuffle_rng(options.seed ^ 0x5eed5eed5eed5eedULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const int stride = feature_stride(model);
    const auto& lambdas = model.config().head.lambdas;

    TrainResult result;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += batch) {
            const std::size_t end = std::min(n, begin + batch);
            model.zero_grad();
            for (std::size_t k = begin; k < end; ++k) {
                const auto& sample = samples[order[k]];
                Tape<float> tape;
                auto fwd = model.forward(tape, sample.image, sample.tokens);
                auto loss = head_loss(tape, fwd.head, sample.gt, stride, lambdas);
                const double value = tape.value(loss.total)[0];
                if (!std::isfinite(value)) {
                    throw std::runtime_error("non-finite loss at step " + std::to_string(result.steps) + " (epoch " +
                                             std::to_string(epoch) + ", sample " + std::to_string(order[k]) + ")");
                }
                epoch_loss += value;
                tape.backward(loss.total);
            }
            const double lr = poly_lr(options.lr, result.steps, total_steps, options.poly_power);
            optimizer.step(lr, 1.0 / static_cast<double>(end - begin));
            ++result.steps;
        }
        epoch_loss /= static_cast<double>(n);
        result.epoch_losses.push_back(epoch_loss);
        if (on_epoch) {
            on_epoch(epoch, epoch_loss);
        }
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<BinaryMask> predict(Model<float>& model, const refshapes::Sample& sample) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    auto fwd = model.forward(tape, sample.image, sample.tokens);
    std::vector<BinaryMask> masks;
    for (Var scores : fwd.head.scores) {
        masks.push_back(mask_argmax(tape.value(bilinear_upsample(tape, scores, feature_stride(model)))));
    }
    return masks;
}

Predictor model_predictor(Model<float>& model) {
    return [&model](const refshapes::Sample& s) { return predict(model, s); };
}

EvalResult evaluate(const Predictor& predictor, std::span<const refshapes::Sample> samples,
                    const std::function<void(std::size_t, const std::vector<BinaryMask>&)>& on_sample) {
    if (samples.empty()) {
        throw ContractError("evaluate: empty dataset");
    }
    std::vector<MetricAccumulator> acc;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<BinaryMask> masks = predictor(samples[i]);
        if (masks.empty()) {
            throw ContractError("evaluate: predictor returned no masks");
        }
        if (acc.empty()) {
            acc.resize(masks.size());
        } else if (acc.size() != masks.size()) {
            throw ContractError("evaluate: predictor changed its iteration count");
        }
        for (std::size_t k = 0; k < masks.size(); ++k) {
            acc[k].add(masks[k], samples[i].gt);
        }
        if (on_sample) {
            on_sample(i, masks);
        }
    }
    EvalResult result;
    for (const auto& a : acc) {
        result.per_iteration.push_back(a.report());
    }
    return result;
}

void check_compatible(const ModelConfig& config, std::span<const refshapes::Sample> samples) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.image.rank() != 3 || s.image.dim(0) != 3 || s.image.dim(1) % 4 != 0 || s.image.dim(2) % 4 != 0) {
            throw ConfigError("sample " + std::to_string(i) + ": image " + shape_string(s.image.shape()) +
                              " cannot be encoded at stride 4");
        }
        for (int id : s.tokens.ids) {
            if (config.encoder.vocab > 0 && id >= config.encoder.vocab) {
                throw ConfigError("sample " + std::to_string(i) + ": token id " + std::to_string(id) +
                                  " exceeds the checkpoint vocabulary of " + std::to_string(config.encoder.vocab) +
                                  " (checkpoint format v" + std::to_string(kCheckpointVersion) + ")");
            }
        }
    }
}

} // namespace sadlr
