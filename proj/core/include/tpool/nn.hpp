#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tpool/tensor.hpp"

namespace tpool {

template <class S>
struct LinearParams {
    Tensor<S> weight;  // [out x in]
    Tensor<S> bias;    // [out]

    static LinearParams make(std::size_t in, std::size_t out, Rng& rng, S stddev) {
        LinearParams p;
        p.weight = Tensor<S>::randn({out, in}, rng, S(0), stddev, true);
        p.bias = Tensor<S>::zeros({out}, true);
        return p;
    }

    // torch-style default: U(-1/sqrt(in), 1/sqrt(in)) for weight and bias
    static LinearParams make_uniform(std::size_t in, std::size_t out, Rng& rng) {
        const S bound = S(1) / std::sqrt(static_cast<S>(in));
        LinearParams p;
        p.weight = Tensor<S>::rand_uniform({out, in}, rng, -bound, bound, true);
        p.bias = Tensor<S>::rand_uniform({out}, rng, -bound, bound, true);
        return p;
    }

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
    std::size_t param_count() const { return weight.size() + bias.size(); }
};

// x W^T + b. Accepts [m x in] (returns [m x out]) or [in] (returns [out]).
template <class S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& p) {
    const std::size_t in = p.in_dim();
    if (x.rank() == 1) {
        if (x.size() != in)
            throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                             shape_str(p.weight.shape()));
        Tensor<S> row = reshape(x, {1, in});
        return reshape(add_row(matmul(row, transpose(p.weight)), p.bias), {p.out_dim()});
    }
    if (x.rank() != 2 || x.cols() != in)
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(p.weight.shape()));
    return add_row(matmul(x, transpose(p.weight)), p.bias);
}

// ---------------------------------------------------------------------------
// 3D convolution (direct form)
// ---------------------------------------------------------------------------

struct Extent3 {
    std::size_t t = 1, h = 1, w = 1;
};

template <class S>
struct Conv3dParams {
    Tensor<S> kernel;  // [out_ch x in_ch x kT x kH x kW]
    Tensor<S> bias;    // [out_ch]
    Extent3 stride{1, 1, 1};
    Extent3 padding{0, 0, 0};

    static Conv3dParams make(std::size_t in_ch, std::size_t out_ch, Extent3 k, Extent3 stride,
                             Extent3 padding, Rng& rng, S stddev) {
        if (padding.t >= k.t || padding.h >= k.h || padding.w >= k.w)
            throw ConfigError("conv3d: padding must be smaller than the kernel extent");
        Conv3dParams p;
        p.kernel = Tensor<S>::randn({out_ch, in_ch, k.t, k.h, k.w}, rng, S(0), stddev, true);
        p.bias = Tensor<S>::zeros({out_ch}, true);
        p.stride = stride;
        p.padding = padding;
        return p;
    }

    std::size_t out_channels() const { return kernel.shape()[0]; }
    std::size_t in_channels() const { return kernel.shape()[1]; }
    std::size_t param_count() const { return kernel.size() + bias.size(); }
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p,
                                   const char* axis) {
    if (in + 2 * p < k)
        throw ShapeError(std::string("conv3d: ") + axis + " extent " + std::to_string(in) +
                         " too small for kernel " + std::to_string(k));
    return (in + 2 * p - k) / s + 1;
}

// direct convolution over [C x T x H x W]
template <class S>
Tensor<S> conv3d(const Tensor<S>& x, const Conv3dParams<S>& p) {
    x.require_rank(4, "conv3d input");
    const auto& xs = x.shape();
    const auto& ks = p.kernel.shape();
    if (xs[0] != ks[1])
        throw ShapeError("conv3d: input channels " + shape_str(xs) + " vs kernel " +
                         shape_str(ks));
    const std::size_t C = xs[0], T = xs[1], H = xs[2], W = xs[3];
    const std::size_t Co = ks[0], kT = ks[2], kH = ks[3], kW = ks[4];
    const std::size_t To = conv_out_extent(T, kT, p.stride.t, p.padding.t, "temporal");
    const std::size_t Ho = conv_out_extent(H, kH, p.stride.h, p.padding.h, "height");
    const std::size_t Wo = conv_out_extent(W, kW, p.stride.w, p.padding.w, "width");

    const auto x_at = [&](std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
        return x.data()[((c * T + t) * H + h) * W + w];
    };
    const auto k_at = [&](std::size_t co, std::size_t ci, std::size_t a, std::size_t b,
                          std::size_t c) {
        return p.kernel.data()[(((co * C + ci) * kT + a) * kH + b) * kW + c];
    };

    std::vector<S> out(Co * To * Ho * Wo);
    std::size_t idx = 0;
    for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t to = 0; to < To; ++to)
            for (std::size_t ho = 0; ho < Ho; ++ho)
                for (std::size_t wo = 0; wo < Wo; ++wo) {
                    S acc = p.bias(co);
                    for (std::size_t ci = 0; ci < C; ++ci)
                        for (std::size_t a = 0; a < kT; ++a) {
                            const std::ptrdiff_t t =
                                std::ptrdiff_t(to * p.stride.t + a) - std::ptrdiff_t(p.padding.t);
                            if (t < 0 || t >= std::ptrdiff_t(T)) continue;
                            for (std::size_t b = 0; b < kH; ++b) {
                                const std::ptrdiff_t h = std::ptrdiff_t(ho * p.stride.h + b) -
                                                         std::ptrdiff_t(p.padding.h);
                                if (h < 0 || h >= std::ptrdiff_t(H)) continue;
                                for (std::size_t c = 0; c < kW; ++c) {
                                    const std::ptrdiff_t w = std::ptrdiff_t(wo * p.stride.w + c) -
                                                             std::ptrdiff_t(p.padding.w);
                                    if (w < 0 || w >= std::ptrdiff_t(W)) continue;
                                    acc += x_at(ci, t, h, w) * k_at(co, ci, a, b, c);
                                }
                            }
                        }
                    out[idx++] = acc;
                }

    const Extent3 stride = p.stride, padding = p.padding;
    bool gx = x.requires_grad(), gk = p.kernel.requires_grad(), gb = p.bias.requires_grad();
    return make_op<S>({Co, To, Ho, Wo}, std::move(out), {x, p.kernel, p.bias},
                      [=](TensorImpl<S>& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pb = *self.parents[2];
        if (gx) px.ensure_grad();
        if (gk) pk.ensure_grad();
        if (gb) pb.ensure_grad();
        std::size_t idx2 = 0;
        for (std::size_t co = 0; co < Co; ++co)
            for (std::size_t to = 0; to < To; ++to)
                for (std::size_t ho = 0; ho < Ho; ++ho)
                    for (std::size_t wo = 0; wo < Wo; ++wo) {
                        const S g = self.grad[idx2++];
                        if (gb) pb.grad[co] += g;
                        if (!gx && !gk) continue;
                        for (std::size_t ci = 0; ci < C; ++ci)
                            for (std::size_t a = 0; a < kT; ++a) {
                                const std::ptrdiff_t t = std::ptrdiff_t(to * stride.t + a) -
                                                         std::ptrdiff_t(padding.t);
                                if (t < 0 || t >= std::ptrdiff_t(T)) continue;
                                for (std::size_t b = 0; b < kH; ++b) {
                                    const std::ptrdiff_t h = std::ptrdiff_t(ho * stride.h + b) -
                                                             std::ptrdiff_t(padding.h);
                                    if (h < 0 || h >= std::ptrdiff_t(H)) continue;
                                    for (std::size_t c = 0; c < kW; ++c) {
                                        const std::ptrdiff_t w =
                                            std::ptrdiff_t(wo * stride.w + c) -
                                            std::ptrdiff_t(padding.w);
                                        if (w < 0 || w >= std::ptrdiff_t(W)) continue;
                                        const std::size_t xi = ((ci * T + t) * H + h) * W + w;
                                        const std::size_t ki =
                                            (((co * C + ci) * kT + a) * kH + b) * kW + c;
                                        if (gx) px.grad[xi] += g * pk.data[ki];
                                        if (gk) pk.grad[ki] += g * px.data[xi];
                                    }
                                }
                            }
                    }
    });
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// gate layout inside the 4H axis: [input | forget | cell | output]
template <class S>
struct LstmLayerParams {
    LinearParams<S> ih;  // [4H x in]
    LinearParams<S> hh;  // [4H x H]
};

template <class S>
struct LstmParams {
    std::vector<LstmLayerParams<S>> layers;
    std::size_t hidden = 0;

    static LstmParams make(std::size_t input, std::size_t hidden, std::size_t num_layers,
                           Rng& rng) {
        LstmParams p;
        p.hidden = hidden;
        for (std::size_t l = 0; l < num_layers; ++l) {
            const std::size_t in = l == 0 ? input : hidden;
            LstmLayerParams<S> lp;
            lp.ih = LinearParams<S>::make_uniform(in, 4 * hidden, rng);
            lp.hh = LinearParams<S>::make_uniform(hidden, 4 * hidden, rng);
            p.layers.push_back(std::move(lp));
        }
        return p;
    }

    std::size_t input_dim() const { return layers.front().ih.in_dim(); }
    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.ih.param_count() + l.hh.param_count();
        return n;
    }
};

template <class S>
struct LstmOutput {
    Tensor<S> hidden_seq;    // [T x H], top layer
    Tensor<S> final_hidden;  // [H], top layer at t = T-1
};

// stacked LSTM over a [T x D] sequence, zero initial state
template <class S>
LstmOutput<S> lstm_forward(const Tensor<S>& seq, const LstmParams<S>& p) {
    seq.require_rank(2, "lstm_forward");
    if (seq.cols() != p.input_dim())
        throw ShapeError("lstm_forward: feature dim " + shape_str(seq.shape()) +
                         " does not match layer-1 input " + std::to_string(p.input_dim()));
    const std::size_t T = seq.rows(), H = p.hidden;

    std::vector<Tensor<S>> inputs(T);
    for (std::size_t t = 0; t < T; ++t) inputs[t] = slice_rows(seq, t, t + 1);

    for (const auto& layer : p.layers) {
        Tensor<S> h = Tensor<S>::zeros({1, H});
        Tensor<S> c = Tensor<S>::zeros({1, H});
        for (std::size_t t = 0; t < T; ++t) {
            Tensor<S> gates = add(linear(inputs[t], layer.ih), linear(h, layer.hh));
            Tensor<S> i = sigmoid(slice_cols(gates, 0, H));
            Tensor<S> f = sigmoid(slice_cols(gates, H, 2 * H));
            Tensor<S> g = tanh(slice_cols(gates, 2 * H, 3 * H));
            Tensor<S> o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
            c = add(mul(f, c), mul(i, g));
            h = mul(o, tanh(c));
            inputs[t] = h;  // feeds the next layer
        }
    }

    Tensor<S> seq_out = inputs[0];
    for (std::size_t t = 1; t < T; ++t) seq_out = concat_rows(seq_out, inputs[t]);
    return {seq_out, reshape(inputs[T - 1], {H})};
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

struct DropoutSpec {
    double drop_probability = 0.0;
    bool training = false;
    std::uint64_t rng_seed = 0;
};

// inverted dropout: survivors scaled by 1/(1-p) so the expectation is kept
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: probability " + std::to_string(p) + " outside [0, 1)");
    if (!training || p == 0.0) return x;
    const S keep_scale = S(1.0 / (1.0 - p));
    std::vector<S> mask(x.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.bernoulli(p) ? S(0) : keep_scale;
    std::vector<S> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x(i) * mask[i];
    return make_op<S>(x.shape(), std::move(out), {x},
                      [mask = std::move(mask)](TensorImpl<S>& self) {
        auto& px = *self.parents[0];
        px.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            px.grad[i] += self.grad[i] * mask[i];
    });
}

template <class S>
Tensor<S> dropout(const Tensor<S>& x, const DropoutSpec& spec) {
    Rng rng(spec.rng_seed);
    return dropout(x, spec.drop_probability, spec.training, rng);
}

}  // namespace tpool
