#pragma once

#include <span>
#include <vector>

#include "sadlr/autodiff.hpp"
#include "sadlr/head.hpp"
#include "sadlr/mask.hpp"

namespace sadlr {

inline constexpr double kDiceEps = 1.0;

/// Per-iteration Dice losses and their weighted total.
struct LossReport {
    std::vector<double> per_iteration;
    double total = 0.0;
};

/// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) for a probability map.
template <typename T>
double dice_loss_per_class(const Tensor<T>& prob, const BinaryMask& gt, double eps = kDiceEps);

/// Mean of the object-class and background-class Dice losses of the
/// softmaxed scores. `upsampled` must already be at the mask resolution.
template <typename T>
Var iteration_loss(Tape<T>& t, Var upsampled, const BinaryMask& gt, T eps = T(kDiceEps));

double total_loss(std::span<const double> losses, std::span<const double> lambdas);

template <typename T>
Var total_loss(Tape<T>& t, std::span<const Var> losses, std::span<const double> lambdas);

template <typename T>
struct SampleLoss {
    Var total;
    std::vector<Var> per_iteration;
};

/// Upsamples every R_i by `factor`, scores it against `gt`, and weights the
/// results. With zero iterations the single baseline output gets weight 1.
template <typename T>
SampleLoss<T> head_loss(Tape<T>& t, const HeadOutput& out, const BinaryMask& gt, int factor,
                        std::span<const double> lambdas);

LossReport loss_report(const std::vector<double>& per_iteration, std::span<const double> lambdas);

} // namespace sadlr
