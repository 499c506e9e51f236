#pragma once

// Layer kernels for the curvature regressor. Everything is templated on the
// scalar type: training runs in float, gradient checks in double.

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "curvepose/errors.hpp"

namespace curvepose::nn {

/// Storage at Eigen's maximum alignment.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Tensor {
    std::vector<int> shape;
    AlignedVector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(
                        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>())),
                    fill);
    }

    std::size_t size() const { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }
};

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ShapeError(what);
    }
}

/// (C, H, W) input -> (C*K*K, Ho*Wo) patch matrix for valid cross-correlation.
template <typename T>
MatrixRM<T> im2col(const Tensor<T>& in, int k) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int ho = h - k + 1, wo = w - k + 1;
    MatrixRM<T> cols(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(ho) * wo);
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = in.data.data() + static_cast<std::size_t>(ch) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols.row((ch * k + ki) * k + kj).data();
                for (int oy = 0; oy < ho; ++oy) {
                    const T* src = plane + static_cast<std::size_t>(oy + ki) * w + kj;
                    std::copy(src, src + wo, row + static_cast<std::size_t>(oy) * wo);
                }
            }
        }
    }
    return cols;
}

template <typename T>
void col2im_add(const MatrixRM<T>& cols, int k, Tensor<T>& grad_in) {
    const int c = grad_in.dim(0), h = grad_in.dim(1), w = grad_in.dim(2);
    const int ho = h - k + 1, wo = w - k + 1;
    for (int ch = 0; ch < c; ++ch) {
        T* plane = grad_in.data.data() + static_cast<std::size_t>(ch) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols.row((ch * k + ki) * k + kj).data();
                for (int oy = 0; oy < ho; ++oy) {
                    T* dst = plane + static_cast<std::size_t>(oy + ki) * w + kj;
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        dst[ox] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution (valid padding, stride 1, cross-correlation)

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weight;
    Tensor<T> bias;
};

/// input (C,H,W), weight (O,C,K,K), bias (O) -> (O, H-K+1, W-K+1).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::require(input.shape.size() == 3 && weight.shape.size() == 4 && bias.shape.size() == 1,
                    "conv2d: expected input (C,H,W), weight (O,C,K,K), bias (O)");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int o = weight.dim(0), k = weight.dim(2);
    detail::require(weight.dim(1) == c && weight.dim(3) == k && bias.dim(0) == o, "conv2d: weight/bias shape mismatch");
    detail::require(h >= k && w >= k, "conv2d: input smaller than kernel");
    const int ho = h - k + 1, wo = w - k + 1;
    const MatrixRM<T> cols = detail::im2col(input, k);
    Tensor<T> out({o, ho, wo});
    MapRM<T> om(out.data.data(), o, static_cast<Eigen::Index>(ho) * wo);
    const ConstMapRM<T> wm(weight.data.data(), o, static_cast<Eigen::Index>(c) * k * k);
    om.noalias() = wm * cols;
    for (int oc = 0; oc < o; ++oc) {
        om.row(oc).array() += bias[oc];
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             bool need_input_grad = true) {
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int o = weight.dim(0), k = weight.dim(2);
    const int ho = h - k + 1, wo = w - k + 1;
    detail::require(grad_out.shape == std::vector<int>{o, ho, wo}, "conv2d_backward: grad_out shape mismatch");
    const MatrixRM<T> cols = detail::im2col(input, k);
    const ConstMapRM<T> g(grad_out.data.data(), o, static_cast<Eigen::Index>(ho) * wo);
    const ConstMapRM<T> wm(weight.data.data(), o, static_cast<Eigen::Index>(c) * k * k);

    ConvGrads<T> grads{Tensor<T>(input.shape), Tensor<T>(weight.shape), Tensor<T>({o})};
    MapRM<T>(grads.weight.data.data(), o, static_cast<Eigen::Index>(c) * k * k).noalias() = g * cols.transpose();
    for (int oc = 0; oc < o; ++oc) {
        grads.bias[oc] = g.row(oc).sum();
    }
    if (need_input_grad) {
        const MatrixRM<T> grad_cols = wm.transpose() * g;
        detail::col2im_add(grad_cols, k, grads.input);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

template <typename T>
struct PoolResult {
    Tensor<T> output;
    /// Flat input index of the selected element for every output element.
    std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& input) {
    detail::require(input.shape.size() == 3, "maxpool: expected (C,H,W)");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int ho = h / 2, wo = w / 2;
    PoolResult<T> r{Tensor<T>({c, ho, wo}), std::vector<std::size_t>(static_cast<std::size_t>(c) * ho * wo)};
    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x, ++oi) {
                std::size_t best = base + static_cast<std::size_t>(2 * y) * w + 2 * x;
                // Scan order TL, TR, BL, BR; strict comparison keeps the first on ties.
                for (const auto& [dy, dx] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}}) {
                    const std::size_t idx = base + static_cast<std::size_t>(2 * y + dy) * w + 2 * x + dx;
                    if (input.data[idx] > input.data[best]) {
                        best = idx;
                    }
                }
                r.output.data[oi] = input.data[best];
                r.argmax[oi] = best;
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const std::vector<int>& input_shape, const std::vector<std::size_t>& argmax,
                              const Tensor<T>& grad_out) {
    detail::require(argmax.size() == grad_out.size(), "maxpool_backward: argmax/grad size mismatch");
    Tensor<T> grad_in(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_in.data[argmax[i]] += grad_out.data[i];
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out = input;
    for (auto& v : out.data) {
        v = v > T(0) ? v : T(0);
    }
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    detail::require(input.size() == grad_out.size(), "relu_backward: size mismatch");
    Tensor<T> g(input.shape);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Fully connected: weight (M, N), bias (M), input (N) -> (M)

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
    Tensor<T> out = input;
    out.shape = {static_cast<int>(input.size())};
    return out;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::require(weight.shape.size() == 2 && bias.shape.size() == 1, "fc: expected weight (M,N), bias (M)");
    const int m = weight.dim(0), n = weight.dim(1);
    detail::require(static_cast<int>(input.size()) == n && bias.dim(0) == m, "fc: shape mismatch");
    Tensor<T> out({m});
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> o(out.data.data(), m);
    o.noalias() = ConstMapRM<T>(weight.data.data(), m, n) *
                  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(input.data.data(), n);
    for (int i = 0; i < m; ++i) {
        out[i] += bias[i];
    }
    return out;
}

template <typename T>
struct FcGrads {
    Tensor<T> input;
    Tensor<T> weight;
    Tensor<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out) {
    const int m = weight.dim(0), n = weight.dim(1);
    detail::require(static_cast<int>(grad_out.size()) == m && static_cast<int>(input.size()) == n,
                    "fc_backward: shape mismatch");
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    const Eigen::Map<const Vec> g(grad_out.data.data(), m);
    const Eigen::Map<const Vec> x(input.data.data(), n);
    FcGrads<T> r{Tensor<T>(input.shape), Tensor<T>(weight.shape), grad_out};
    MapRM<T>(r.weight.data.data(), m, n).noalias() = g * x.transpose();
    Eigen::Map<Vec>(r.input.data.data(), n).noalias() = ConstMapRM<T>(weight.data.data(), m, n).transpose() * g;
    return r;
}

// ---------------------------------------------------------------------------
// Losses on a scalar prediction

struct LossValue {
    double loss = 0.0;
    /// d loss / d prediction
    double grad = 0.0;
};

/// 0.5 e^2 for |e| <= delta, delta (|e| - delta/2) beyond.
inline LossValue huber_loss(double pred, double target, double delta) {
    if (!(delta > 0.0)) {
        throw ConfigError("huber_loss: delta must be positive");
    }
    const double e = pred - target;
    if (std::abs(e) <= delta) {
        return {0.5 * e * e, e};
    }
    return {delta * (std::abs(e) - 0.5 * delta), e > 0.0 ? delta : -delta};
}

inline LossValue mse_loss(double pred, double target) {
    const double e = pred - target;
    return {e * e, 2.0 * e};
}

}  // namespace curvepose::nn
