#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ridnet/autodiff.hpp"
#include "ridnet/rng.hpp"
#include "ridnet/tensor.hpp"

namespace ridnet {

/// Ordered collection of named learnable tensors. Order is insertion order
/// and defines checkpoint layout.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        /// Projected onto [0,1] after every optimiser step.
        bool unit_interval = false;
    };

    void add(std::string name, Tensor<T> value, bool unit_interval = false);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor<T>& get(const std::string& name) const;
    /// Replaces the value; the shape must not change.
    void set(const std::string& name, Tensor<T> value);

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    std::size_t parameter_count() const;

    /// Copy of the entries whose name starts with `prefix`.
    ParamStore subset(const std::string& prefix) const;
    /// Appends all entries of `other`.
    void merge(const ParamStore& other);

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : entries_) out.add(e.name, tensor_cast<U>(e.value), e.unit_interval);
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Binds store entries to tape leaves on first use. Trainable binders make
/// named leaves (so Tape::named_grads() reports them); frozen binders make
/// constants.
template <typename T>
class ParamBinder {
public:
    ParamBinder(Tape<T>& tape, const ParamStore<T>& store, bool trainable = true);

    Var<T> operator()(const std::string& name) const;
    /// Makes `name` (relative to the prefix) resolve to `v` instead of the store entry.
    void provide(const std::string& name, const Var<T>& v) const;
    /// Binder resolving names relative to `prefix` + ".", sharing bindings.
    ParamBinder scoped(const std::string& prefix) const;
    Tape<T>& tape() const { return *tape_; }
    const ParamStore<T>& store() const { return *store_; }

private:
    Tape<T>* tape_;
    const ParamStore<T>* store_;
    bool trainable_;
    std::string prefix_;
    std::shared_ptr<std::map<std::string, Var<T>>> bound_;
};

/// Uniform in +-sqrt(6 / fan_in) (He-uniform).
template <typename T>
Tensor<T> he_uniform(const Shape& shape, std::size_t fan_in, rng::CounterRng& rng);

/// Uniform in [-bound, bound].
template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, rng::CounterRng& rng);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class ParamBinder<float>;
extern template class ParamBinder<double>;

}  // namespace ridnet
