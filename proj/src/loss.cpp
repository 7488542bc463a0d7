#include "sadlr/loss.hpp"

#include <array>

#include "sadlr/errors.hpp"

namespace sadlr {

template <typename T>
double dice_loss_per_class(const Tensor<T>& prob, const BinaryMask& gt, double eps) {
    if (prob.size() != gt.size()) {
        throw ShapeError("dice_loss_per_class: prediction " + shape_string(prob.shape()) + " vs mask " +
                         std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
    }
    double inter = 0.0;
    double psum = 0.0;
    double gsum = 0.0;
    const auto bits = gt.bits();
    for (std::size_t i = 0; i < prob.size(); ++i) {
        inter += static_cast<double>(prob[i]) * bits[i];
        psum += static_cast<double>(prob[i]);
        gsum += bits[i];
    }
    return 1.0 - (2.0 * inter + eps) / (psum + gsum + eps);
}

template <typename T>
Var iteration_loss(Tape<T>& t, Var upsampled, const BinaryMask& gt, T eps) {
    const Tensor<T>& r = t.value(upsampled);
    if (r.rank() != 3 || r.dim(0) != 2 || r.dim(1) != gt.height() || r.dim(2) != gt.width()) {
        throw ContractError("iteration_loss: scores " + shape_string(r.shape()) + " are not at mask resolution " +
                            std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
    }
    Var probs = softmax_channel(t, upsampled);
    const BinaryMask background = gt.inverted();
    Var object_loss = dice_loss(t, select_channel(t, probs, 1), gt.bits(), eps);
    Var background_loss = dice_loss(t, select_channel(t, probs, 0), background.bits(), eps);
    return scale(t, add(t, object_loss, background_loss), T(0.5));
}

double total_loss(std::span<const double> losses, std::span<const double> lambdas) {
    if (losses.size() != lambdas.size()) {
        throw ContractError("total_loss: " + std::to_string(losses.size()) + " losses vs " +
                            std::to_string(lambdas.size()) + " weights");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        total += lambdas[i] * losses[i];
    }
    return total;
}

template <typename T>
Var total_loss(Tape<T>& t, std::span<const Var> losses, std::span<const double> lambdas) {
    if (losses.size() != lambdas.size() || losses.empty()) {
        throw ContractError("total_loss: " + std::to_string(losses.size()) + " losses vs " +
                            std::to_string(lambdas.size()) + " weights");
    }
    Var total = scale(t, losses[0], static_cast<T>(lambdas[0]));
    for (std::size_t i = 1; i < losses.size(); ++i) {
        total = add(t, total, scale(t, losses[i], static_cast<T>(lambdas[i])));
    }
    return total;
}

template <typename T>
SampleLoss<T> head_loss(Tape<T>& t, const HeadOutput& out, const BinaryMask& gt, int factor,
                        std::span<const double> lambdas) {
    SampleLoss<T> result;
    for (Var scores : out.scores) {
        result.per_iteration.push_back(iteration_loss(t, bilinear_upsample(t, scores, factor), gt));
    }
    static constexpr std::array<double, 1> kBaseline{1.0};
    std::span<const double> weights = lambdas.empty() ? std::span<const double>(kBaseline) : lambdas;
    result.total = total_loss(t, std::span<const Var>(result.per_iteration), weights);
    return result;
}

LossReport loss_report(const std::vector<double>& per_iteration, std::span<const double> lambdas) {
    LossReport report;
    report.per_iteration = per_iteration;
    report.total = lambdas.empty() && per_iteration.size() == 1 ? per_iteration[0] : total_loss(per_iteration, lambdas);
    return report;
}

template double dice_loss_per_class<float>(const Tensor<float>&, const BinaryMask&, double);
template double dice_loss_per_class<double>(const Tensor<double>&, const BinaryMask&, double);
template Var iteration_loss<float>(Tape<float>&, Var, const BinaryMask&, float);
template Var iteration_loss<double>(Tape<double>&, Var, const BinaryMask&, double);
template Var total_loss<float>(Tape<float>&, std::span<const Var>, std::span<const double>);
template Var total_loss<double>(Tape<double>&, std::span<const Var>, std::span<const double>);
template SampleLoss<float> head_loss<float>(Tape<float>&, const HeadOutput&, const BinaryMask&, int,
                                            std::span<const double>);
template SampleLoss<double> head_loss<double>(Tape<double>&, const HeadOutput&, const BinaryMask&, int,
                                              std::span<const double>);

} // namespace sadlr
