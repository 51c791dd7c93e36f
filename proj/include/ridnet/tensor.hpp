#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ridnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Copies share storage; writers go through
/// mutable_data(), which detaches a shared buffer first.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : Tensor(Shape{}) {}
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_->size(); }

    std::span<const T> data() const { return {data_->data(), data_->size()}; }
    std::span<T> mutable_data();
    const T* ptr() const { return data_->data(); }
    T* mutable_ptr() { return mutable_data().data(); }

    T operator[](std::size_t i) const { return (*data_)[i]; }
    T& operator[](std::size_t i) { return mutable_data()[i]; }

    /// Value of a one-element tensor.
    T item() const;

    Tensor reshaped(Shape shape) const;
    Tensor clone() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Storage identity, used to check whether two tensors alias.
    const void* storage_id() const { return data_.get(); }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
    std::vector<To> out(src.size());
    auto in = src.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
    return Tensor<To>(src.shape(), std::move(out));
}

/// Throws std::invalid_argument naming `what` unless the shapes match.
void require_shape(const Shape& got, const Shape& want, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ridnet
