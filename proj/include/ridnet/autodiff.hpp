#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ridnet/tensor.hpp"

namespace ridnet {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    bool valid() const { return tape_ != nullptr; }
    Tape<T>& tape() const { return *tape_; }
    std::size_t id() const { return id_; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Name -> d(loss)/d(parameter), same shape as the parameter.
template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

/// Discrete choices made during a forward pass (neighbour sets, activation
/// branches). Recorded once, then replayed so that repeated evaluations stay
/// on the same smooth piece of a piecewise-smooth function.
class Decisions {
public:
    enum class Mode { record, replay };

    Mode mode() const { return mode_; }
    void start_replay() {
        mode_ = Mode::replay;
        cursor_ = 0;
    }
    std::size_t size() const { return entries_.size(); }

    /// Returns the recorded entry in replay mode, otherwise computes and records it.
    std::vector<std::uint32_t> pin(const std::function<std::vector<std::uint32_t>()>& compute);

private:
    Mode mode_ = Mode::record;
    std::size_t cursor_ = 0;
    std::vector<std::vector<std::uint32_t>> entries_;
};

/// Gives a backward rule write access to the gradient buffers of its inputs.
template <typename T>
class GradSink {
public:
    GradSink(Tape<T>& tape, const std::vector<std::size_t>& inputs) : tape_(tape), inputs_(inputs) {}

    bool wants(std::size_t input) const;
    /// Zero-initialised on first access; rules accumulate (+=) into it.
    std::span<T> grad(std::size_t input);

private:
    Tape<T>& tape_;
    const std::vector<std::size_t>& inputs_;
};

template <typename T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

/// Differentiable form of a backward rule: builds the input gradients as new
/// tape nodes. Entries for inputs not in `wants` may be left invalid.
template <typename T>
using GraphBackwardFn =
    std::function<std::vector<Var<T>>(const Var<T>& grad_out, const std::vector<bool>& wants)>;

/// Define-by-run reverse-mode tape. Nodes are appended in creation order,
/// which is also a topological order. Single writer; not shareable across
/// threads.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value, bool requires_grad = true, std::string name = {});
    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Appends an op result. The result tracks gradients iff any input does;
    /// untracked results drop their rules.
    Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn<T> backward,
                  GraphBackwardFn<T> graph_backward = {});

    /// Accumulates d(loss)/d(node) for every node reachable from `loss`.
    void backward(const Var<T>& loss);

    /// Gradient of the last backward() w.r.t. `v`; zeros if unreachable.
    Tensor<T> grad(const Var<T>& v) const;

    /// Gradients of every named leaf; unreachable leaves map to zeros.
    GradMap<T> named_grads() const;

    /// d(out)/d(wrt) built as tape nodes, so the result can itself be
    /// differentiated. Every op on the path must provide a graph rule.
    std::vector<Var<T>> grad_graph(const Var<T>& out, const std::vector<Var<T>>& wrt);

    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    void set_decisions(Decisions* d) { decisions_ = d; }
    Decisions* decisions() const { return decisions_; }

private:
    friend class GradSink<T>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::string name;
        std::vector<std::size_t> inputs;
        BackwardFn<T> backward;
        GraphBackwardFn<T> graph_backward;
    };

    std::span<T> grad_buffer(std::size_t id);

    std::deque<Node> nodes_;
    Decisions* decisions_ = nullptr;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
    return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradSink<float>;
extern template class GradSink<double>;

}  // namespace ridnet
