#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sadlr/loss.hpp"
#include "sadlr/metrics.hpp"
#include "sadlr/model.hpp"
#include "sadlr/refshapes.hpp"

namespace sadlr {

/// Adam with decoupled weight decay.
class AdamW {
  public:
    AdamW(std::vector<Param<float>*> params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8);

    /// Applies one update using grad * grad_scale.
    void step(double lr, double grad_scale = 1.0);
    std::int64_t steps() const { return t_; }

  private:
    std::vector<Param<float>*> params_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    double weight_decay_;
    double beta1_;
    double beta2_;
    double eps_;
    std::int64_t t_ = 0;
};

/// base * (1 - step / total)^power
double poly_lr(double base, std::int64_t step, std::int64_t total, double power);

struct TrainOptions {
    std::uint64_t seed = 0;
    int epochs = 15;
    int batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double poly_power = 0.9;
};

struct TrainResult {
    std::vector<double> epoch_losses;
    std::int64_t steps = 0;
    double seconds = 0.0;
};

/// Loss (forward only) of one sample.
LossReport sample_loss(Model<float>& model, const refshapes::Sample& sample);
/// Mean total loss over a dataset with the current weights.
double dataset_loss(Model<float>& model, std::span<const refshapes::Sample> samples);

/// Every sample is visited once per epoch in a seeded shuffled order.
/// Throws std::runtime_error naming the step if the loss becomes non-finite.
TrainResult train(Model<float>& model, std::span<const refshapes::Sample> samples, const TrainOptions& options,
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Per-iteration masks at input resolution; the last one is the prediction.
using Predictor = std::function<std::vector<BinaryMask>(const refshapes::Sample&)>;

std::vector<BinaryMask> predict(Model<float>& model, const refshapes::Sample& sample);
Predictor model_predictor(Model<float>& model);

struct EvalResult {
    std::vector<MetricReport> per_iteration;
    const MetricReport& headline() const { return per_iteration.back(); }
};

EvalResult evaluate(const Predictor& predictor, std::span<const refshapes::Sample> samples,
                    const std::function<void(std::size_t, const std::vector<BinaryMask>&)>& on_sample = {});

/// Throws ConfigError when the dataset cannot be fed to the model.
void check_compatible(const ModelConfig& config, std::span<const refshapes::Sample> samples);

} // namespace sadlr
