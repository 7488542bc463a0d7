#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sadlr/tensor.hpp"

namespace sadlr {

/// A trainable weight with its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string param_name, Tensor<T> initial, bool is_trainable = true)
        : name(std::move(param_name)), value(std::move(initial)), grad(value.shape()), trainable(is_trainable) {}

    void zero_grad() { grad = Tensor<T>(value.shape()); }
};

/// Handle to a value recorded on a Tape.
struct Var {
    std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
    bool valid() const { return index != std::numeric_limits<std::uint32_t>::max(); }
};

/// Record of executed differentiable operations. One tape per forward pass;
/// backward replays it in reverse execution order and flushes leaf
/// gradients into the owning Params.
template <typename T>
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor<T> value);
    /// Differentiable input that is not a Param (gradients readable via grad()).
    Var input(Tensor<T> value);
    /// Leaf for a Param; repeated calls with the same Param return the same Var.
    Var param(Param<T>& p);

    /// Used by operations: appends a node whose gradient flows to `inputs`.
    Var record(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn);

    const Tensor<T>& value(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
    /// Gradient of the last backward pass w.r.t. v; zeros if unreached.
    Tensor<T> grad(Var v) const;
    /// Mutable gradient slot, allocated as zeros on first use.
    Tensor<T>& grad_slot(Var v);

    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    std::size_t param_leaf_count() const { return param_vars_.size(); }
    const std::vector<std::uint32_t>& last_backward_order() const { return visit_order_; }

    /// Inference mode: nothing is differentiable and no closures are stored.
    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }

    /// Test hook: scale gradients flushed into params whose name starts with
    /// `prefix`. Used to check that the gradient audit catches a bad backward.
    void corrupt_param_grads(std::string prefix, T factor) {
        corrupt_prefix_ = std::move(prefix);
        corrupt_factor_ = factor;
    }

  private:
    struct Node {
        Tensor<T> owned;
        Param<T>* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    std::unordered_map<const Param<T>*, Var> param_vars_;
    std::vector<std::uint32_t> visit_order_;
    bool grad_enabled_ = true;
    std::string corrupt_prefix_;
    T corrupt_factor_ = T(1);
};

extern template class Tape<float>;
extern template class Tape<double>;

// ---------------------------------------------------------------------------
// Differentiable operations. All validate shapes before computing.

/// [M x K] x [K x N] -> [M x N]
template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
/// 2-D transpose.
template <typename T> Var transpose(Tape<T>& t, Var a);
template <typename T> Var reshape(Tape<T>& t, Var a, Shape shape);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var mul(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, T factor);
/// Sum of all elements -> [1].
template <typename T> Var sum(Tape<T>& t, Var a);
template <typename T> Var relu(Tape<T>& t, Var x);

/// Cross-correlation of x [Cin x H x W] with w [Cout x Cin x k x k] plus bias.
template <typename T> Var conv2d(Tape<T>& t, Var x, Var w, Var b, int stride, int pad);
/// Normalizes the channel vector at each spatial location of x [C x H x W].
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps);
/// Per-pixel softmax over the 2 channels of x [2 x H x W].
template <typename T> Var softmax_channel(Tape<T>& t, Var x);
/// Half-pixel-center bilinear upsampling of x [C x H x W] by an integer factor.
template <typename T> Var bilinear_upsample(Tape<T>& t, Var x, int factor);
/// table [V x D], ids -> [D x N] with column j = table row ids[j].
template <typename T> Var embedding_lookup(Tape<T>& t, Var table, std::span<const int> ids);

/// Mean of the first `count` columns of x [D x N] -> [D].
template <typename T> Var mean_columns(Tape<T>& t, Var x, int count);
/// Average of the columns of x [C x H x W] selected by a {0,1} mask of H*W
/// entries -> [C]. An empty selection yields zeros. The mask is a constant.
template <typename T> Var masked_spatial_mean(Tape<T>& t, Var x, std::span<const std::uint8_t> mask);
/// v [C] -> [C x H x W] with every location equal to v.
template <typename T> Var broadcast_spatial(Tape<T>& t, Var v, int height, int width);
/// Stack along the channel axis: [Ca x H x W], [Cb x H x W] -> [(Ca+Cb) x H x W].
template <typename T> Var concat_channels(Tape<T>& t, Var a, Var b);
/// x [C x H x W] -> [H x W] for channel c.
template <typename T> Var select_channel(Tape<T>& t, Var x, int channel);
/// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), p [H x W], g a {0,1} grid.
template <typename T> Var dice_loss(Tape<T>& t, Var prob, std::span<const std::uint8_t> target, T eps);

/// weight [Out x In], bias [Out], x [In] -> [Out]
template <typename T> Var linear(Tape<T>& t, Var weight, Var bias, Var x);

// ---------------------------------------------------------------------------

/// Central-difference gradient of `loss` w.r.t. every coordinate of `p`,
/// perturbing p.value in place (restored on return).
Tensor<double> finite_diff_grad(const std::function<double()>& loss, Param<double>& p, double h);

} // namespace sadlr
