#include "ridnet/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ridnet {

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> value, bool unit_interval) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(value), unit_interval});
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return entries_[it->second].value;
}

template <typename T>
void ParamStore<T>::set(const std::string& name, Tensor<T> value) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    auto& e = entries_[it->second];
    require_shape(value.shape(), e.value.shape(), "parameter '" + name + "'");
    e.value = std::move(value);
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

template <typename T>
ParamStore<T> ParamStore<T>::subset(const std::string& prefix) const {
    ParamStore out;
    for (const auto& e : entries_)
        if (e.name.rfind(prefix, 0) == 0) out.add(e.name, e.value, e.unit_interval);
    return out;
}

template <typename T>
void ParamStore<T>::merge(const ParamStore& other) {
    for (const auto& e : other.entries_) add(e.name, e.value, e.unit_interval);
}

template <typename T>
ParamBinder<T>::ParamBinder(Tape<T>& tape, const ParamStore<T>& store, bool trainable)
    : tape_(&tape),
      store_(&store),
      trainable_(trainable),
      bound_(std::make_shared<std::map<std::string, Var<T>>>()) {}

template <typename T>
Var<T> ParamBinder<T>::operator()(const std::string& name) const {
    const std::string full = prefix_.empty() ? name : prefix_ + "." + name;
    auto it = bound_->find(full);
    if (it != bound_->end()) return it->second;
    const auto& value = store_->get(full);
    Var<T> v = trainable_ ? tape_->leaf(value, true, full) : tape_->constant(value);
    bound_->emplace(full, v);
    return v;
}

template <typename T>
void ParamBinder<T>::provide(const std::string& name, const Var<T>& v) const {
    const std::string full = prefix_.empty() ? name : prefix_ + "." + name;
    require_shape(v.shape(), store_->get(full).shape(), "provided parameter '" + full + "'");
    (*bound_)[full] = v;
}

template <typename T>
ParamBinder<T> ParamBinder<T>::scoped(const std::string& prefix) const {
    ParamBinder out = *this;
    out.prefix_ = prefix_.empty() ? prefix : prefix_ + "." + prefix;
    return out;
}

template <typename T>
Tensor<T> he_uniform(const Shape& shape, std::size_t fan_in, rng::CounterRng& rng) {
    return uniform_tensor<T>(shape, std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, rng::CounterRng& rng) {
    Tensor<T> t(shape);
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamBinder<float>;
template class ParamBinder<double>;
template Tensor<float> he_uniform(const Shape&, std::size_t, rng::CounterRng&);
template Tensor<double> he_uniform(const Shape&, std::size_t, rng::CounterRng&);
template Tensor<float> uniform_tensor(const Shape&, double, rng::CounterRng&);
template Tensor<double> uniform_tensor(const Shape&, double, rng::CounterRng&);

}  // namespace ridnet
