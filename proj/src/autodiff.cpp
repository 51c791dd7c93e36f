#include "ridnet/autodiff.hpp"

#include <stdexcept>

namespace ridnet {

std::vector<std::uint32_t> Decisions::pin(
    const std::function<std::vector<std::uint32_t>()>& compute) {
    if (mode_ == Mode::record) {
        entries_.push_back(compute());
        return entries_.back();
    }
    if (cursor_ >= entries_.size())
        throw std::logic_error("decision replay ran past the recorded forward pass");
    return entries_[cursor_++];
}

template <typename T>
bool GradSink<T>::wants(std::size_t input) const {
    return tape_.nodes_[inputs_.at(input)].requires_grad;
}

template <typename T>
std::span<T> GradSink<T>::grad(std::size_t input) {
    return tape_.grad_buffer(inputs_.at(input));
}

template <typename T>
std::span<T> Tape<T>::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor<T>(n.value.shape());
        n.has_grad = true;
    }
    return n.grad.mutable_data();
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad, std::string name) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn<T> backward,
                       GraphBackwardFn<T> graph_backward) {
    Node n;
    n.value = std::move(value);
    for (const auto& in : inputs) {
        if (&in.tape() != this) throw std::invalid_argument("op inputs live on different tapes");
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (n.requires_grad) {
        n.backward = std::move(backward);
        n.graph_backward = std::move(graph_backward);
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss lives on another tape");
    if (loss.value().size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(loss.shape()));
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor<T>();
    }
    grad_buffer(loss.id())[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        GradSink<T> sink(*this, n.inputs);
        n.backward(n.grad, sink);
    }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    if (!n.has_grad) return Tensor<T>(n.value.shape());
    return n.grad;
}

template <typename T>
GradMap<T> Tape<T>::named_grads() const {
    GradMap<T> out;
    for (const auto& n : nodes_) {
        if (n.name.empty()) continue;
        out[n.name] = n.has_grad ? n.grad : Tensor<T>(n.value.shape());
    }
    return out;
}

namespace {

template <typename T>
Var<T> add_graph(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = a.value().clone();
    auto o = out.mutable_data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return a.tape().record(
        std::move(out), {a, b},
        [](const Tensor<T>& g, GradSink<T>& sink) {
            auto gv = g.data();
            for (std::size_t k = 0; k < 2; ++k) {
                if (!sink.wants(k)) continue;
                auto d = sink.grad(k);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i];
            }
        },
        [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g, g}; });
}

}  // namespace

template <typename T>
std::vector<Var<T>> Tape<T>::grad_graph(const Var<T>& out, const std::vector<Var<T>>& wrt) {
    const std::size_t last = out.id();
    std::vector<bool> on_path(last + 1, false);
    for (const auto& w : wrt)
        if (w.id() <= last) on_path[w.id()] = true;
    for (std::size_t id = 0; id <= last; ++id) {
        if (on_path[id]) continue;
        for (auto in : nodes_[id].inputs)
            if (on_path[in]) {
                on_path[id] = true;
                break;
            }
    }

    std::vector<Var<T>> grads(last + 1);
    grads[last] = constant(Tensor<T>(out.shape(), T(1)));
    for (std::size_t id = last + 1; id-- > 0;) {
        if (!on_path[id] || !grads[id].valid()) continue;
        // Copy what we need: recording below appends to nodes_.
        const std::vector<std::size_t> inputs = nodes_[id].inputs;
        if (inputs.empty()) continue;
        std::vector<bool> wants(inputs.size());
        bool any = false;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            wants[k] = on_path[inputs[k]];
            any = any || wants[k];
        }
        if (!any) continue;
        GraphBackwardFn<T> rule = nodes_[id].graph_backward;
        if (!rule) throw std::logic_error("op on the differentiated path has no graph backward rule");
        auto contrib = rule(grads[id], wants);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (!wants[k] || k >= contrib.size() || !contrib[k].valid()) continue;
            auto& slot = grads[inputs[k]];
            slot = slot.valid() ? add_graph(slot, contrib[k]) : contrib[k];
        }
    }

    std::vector<Var<T>> result;
    for (const auto& w : wrt) {
        if (w.id() <= last && grads[w.id()].valid()) {
            result.push_back(grads[w.id()]);
        } else {
            result.push_back(constant(Tensor<T>(w.shape())));
        }
    }
    return result;
}

template class Tape<float>;
template class Tape<double>;
template class GradSink<float>;
template class GradSink<double>;

}  // namespace ridnet
