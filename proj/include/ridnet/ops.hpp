#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ridnet/autodiff.hpp"

namespace ridnet {

enum class Padding { reflect, zero, none };

Padding parse_padding(const std::string& s);

struct Activation {
    enum class Kind { relu, leaky_relu };
    Kind kind = Kind::relu;
    double slope = 0.0;

    static Activation relu() { return {Kind::relu, 0.0}; }
    static Activation leaky(double slope) { return {Kind::leaky_relu, slope}; }
};

/// Reflect index without repeating the edge sample: -1 -> 1, n -> n-2.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

/// Geometry of a stride-s convolution over up to three spatial axes.
/// conv2d uses a depth axis of extent 1.
struct ConvGeometry {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::array<std::size_t, 3> in{};
    std::array<std::size_t, 3> kernel{};
    std::array<std::size_t, 3> pad{};
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padded{};
    std::array<std::size_t, 3> out{};
    Padding padding = Padding::none;

    static ConvGeometry make(std::size_t cin, std::size_t cout, std::array<std::size_t, 3> in,
                             std::array<std::size_t, 3> kernel, Padding padding,
                             std::array<std::size_t, 3> stride);
    std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
    std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
    std::size_t padded_volume() const { return padded[0] * padded[1] * padded[2]; }
    std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
};

namespace kernels {

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv_backward_input(const ConvGeometry& g, const T* gy, const T* w, T* gx);
template <typename T>
void conv_backward_kernel(const ConvGeometry& g, const T* x, const T* gy, T* gw);

}  // namespace kernels

namespace ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T s);
template <typename T>
Var<T> square(const Var<T>& a);
/// Elementwise sqrt; the derivative at exactly 0 is taken as 0.
template <typename T>
Var<T> sqrt(const Var<T>& a);
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);
/// Scalar -> tensor of `shape` filled with that scalar.
template <typename T>
Var<T> expand(const Var<T>& scalar, const Shape& shape);
template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape);

template <typename T>
Var<T> activate(const Var<T>& a, Activation act);
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi);

/// [C_in,H,W] * [C_out,C_in,kh,kw] + [C_out]. `bias` may be invalid (no bias).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding padding,
              std::size_t stride = 1);
/// [C_in,D,H,W] * [C_out,C_in,kd,kh,kw] + [C_out], stride 1.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding padding);

/// x:[N,in] W:[in,out] b:[out] (b may be invalid) -> [N,out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Softmax within each segment [offsets[s], offsets[s+1]) of a flat vector.
template <typename T>
Var<T> segment_softmax(const Var<T>& x, std::span<const std::size_t> offsets);
template <typename T>
Var<T> softmax(const Var<T>& x);

/// [C,H,W] -> [C,H/k,W/k], non-overlapping mean.
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t k);

/// Slice d of a channels-first stack [C,D,H,W] -> [C,H,W].
template <typename T>
Var<T> select_slice(const Var<T>& stack, std::size_t d);
/// Copy of `stack` with slice d replaced by `slice`.
template <typename T>
Var<T> replace_slice(const Var<T>& stack, std::size_t d, const Var<T>& slice);

/// x:[C,...] + b:[C] broadcast over trailing axes.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b);

}  // namespace ops
}  // namespace ridnet
