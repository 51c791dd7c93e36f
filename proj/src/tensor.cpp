#include "ridnet/tensor.hpp"

#include <stdexcept>

namespace ridnet {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_shape(const Shape& got, const Shape& want, const std::string& what) {
    if (got != want)
        throw std::invalid_argument(what + ": expected shape " + shape_str(want) + ", got " +
                                    shape_str(got));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<T>>(shape_size(shape_), fill)) {
    for (auto d : shape_)
        if (d == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(values))) {
    for (auto d : shape_)
        if (d == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
    if (shape_size(shape_) != data_->size())
        throw std::invalid_argument("tensor data length " + std::to_string(data_->size()) +
                                    " does not match shape " + shape_str(shape_));
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
    return {data_->data(), data_->size()};
}

template <typename T>
T Tensor<T>::item() const {
    if (data_->size() != 1)
        throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != size())
        throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(shape_, std::vector<T>(*data_));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ridnet
