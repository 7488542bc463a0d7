#include <cmath>

#include "sadlr/autodiff.hpp"
#include "sadlr/errors.hpp"

namespace sadlr {

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, false, {}});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::input(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, grad_enabled_, {}});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::param(Param<T>& p) {
    if (auto it = param_vars_.find(&p); it != param_vars_.end()) {
        return it->second;
    }
    nodes_.push_back(Node{Tensor<T>(), &p, grad_enabled_ && p.trainable, {}});
    Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
    param_vars_.emplace(&p, v);
    return v;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
        for (Var in : inputs) {
            needs = needs || nodes_.at(in.index).requires_grad;
        }
    }
    nodes_.push_back(Node{std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{}});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
    const Node& node = nodes_.at(v.index);
    return node.param != nullptr ? node.param->value : node.owned;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
    if (v.index < grads_.size() && !grads_[v.index].empty()) {
        return grads_[v.index];
    }
    return Tensor<T>(value(v).shape());
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(Var v) {
    Tensor<T>& slot = grads_.at(v.index);
    if (slot.empty()) {
        slot = Tensor<T>(value(v).shape());
    }
    return slot;
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (!loss.valid() || loss.index >= nodes_.size()) {
        throw ContractError("backward: loss is not a value on this tape");
    }
    if (value(loss).size() != 1) {
        throw ContractError("backward expects a scalar loss, got shape " + shape_string(value(loss).shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    visit_order_.clear();
    if (!nodes_[loss.index].requires_grad) {
        return;
    }
    grad_slot(loss).fill(T(1));
    for (std::int64_t i = loss.index; i >= 0; --i) {
        Node& node = nodes_[static_cast<std::size_t>(i)];
        if (!node.backward || grads_[static_cast<std::size_t>(i)].empty()) {
            continue;
        }
        visit_order_.push_back(static_cast<std::uint32_t>(i));
        node.backward(*this, grads_[static_cast<std::size_t>(i)]);
    }
    for (auto& [param, var] : param_vars_) {
        const Tensor<T>& g = grads_[var.index];
        if (g.empty() || !nodes_[var.index].requires_grad) {
            continue;
        }
        Param<T>* p = nodes_[var.index].param;
        if (!corrupt_prefix_.empty() && p->name.starts_with(corrupt_prefix_)) {
            Tensor<T> bad = g;
            for (auto& x : bad.data()) {
                x *= corrupt_factor_;
            }
            p->grad.add_(bad);
        } else {
            p->grad.add_(g);
        }
    }
}

template class Tape<float>;
template class Tape<double>;

Tensor<double> finite_diff_grad(const std::function<double()>& loss, Param<double>& p, double h) {
    if (!(h > 0.0)) {
        throw ContractError("finite_diff_grad: step must be positive");
    }
    Tensor<double> out(p.value.shape());
    auto values = p.value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double plus = loss();
        values[i] = orig - h;
        const double minus = loss();
        values[i] = orig;
        out[i] = (plus - minus) / (2.0 * h);
    }
    return out;
}

} // namespace sadlr
