#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpool/backbone.hpp"
#include "tpool/tensor.hpp"

namespace tpool {

// FLOP convention used everywhere in this library: one multiply-accumulate
// counts as 2 FLOPs. Elementwise functions are charged a flat per-element
// cost, stated here so reports are reproducible from the architecture alone.
inline constexpr std::uint64_t kMacFlops = 2;
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;
inline constexpr std::uint64_t kGeluFlopsPerElement = 8;
inline constexpr std::uint64_t kLayerNormFlopsPerElement = 8;
inline constexpr std::uint64_t kSigmoidFlopsPerElement = 4;
inline constexpr std::uint64_t kTanhFlopsPerElement = 4;
inline constexpr std::uint64_t kAddFlopsPerElement = 1;

inline std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
    return kMacFlops * m * k * n;
}

// x[rows x in] W^T + b: MACs plus one add per output element for the bias
inline std::uint64_t linear_flops(std::uint64_t rows, std::uint64_t in, std::uint64_t out) {
    return matmul_flops(rows, in, out) + rows * out * kAddFlopsPerElement;
}

inline std::uint64_t conv3d_flops(std::uint64_t out_elems, std::uint64_t in_ch, std::uint64_t kT,
                                  std::uint64_t kH, std::uint64_t kW) {
    return kMacFlops * out_elems * in_ch * kT * kH * kW;
}

struct ParamEntry {
    std::string component;
    std::uint64_t count = 0;
};

struct ParamReport {
    std::vector<ParamEntry> components;
    std::uint64_t total = 0;

    std::uint64_t total_matching(const std::string& prefix) const;
    std::string to_text() const;
};

struct FlopEntry {
    std::string component;
    std::uint64_t flops = 0;
};

struct FlopReport {
    std::vector<FlopEntry> components;
    std::uint64_t total = 0;
    std::string geometry;  // human-readable input geometry the count is for

    std::uint64_t total_matching(const std::string& prefix) const;
    std::string to_text() const;
};

// Accumulates per-component FLOP entries; components keep first-seen order.
class FlopCounter {
public:
    void add(const std::string& component, std::uint64_t flops);
    FlopReport report(std::string geometry) const;

private:
    std::vector<FlopEntry> entries_;
};

// Combined per-component table. Components missing on one side show 0.
std::string profile_csv(const ParamReport& params, const FlopReport& flops);
std::string profile_text(const ParamReport& params, const FlopReport& flops);

namespace detail {
ParamReport group_params(const std::vector<std::pair<std::string, std::uint64_t>>& leaves);
}

// Exact learnable-scalar count, grouped by component (the first two dotted
// segments of each parameter name).
template <class S>
ParamReport count_params(const std::vector<std::pair<std::string, Tensor<S>>>& named) {
    std::vector<std::pair<std::string, std::uint64_t>> leaves;
    leaves.reserve(named.size());
    for (const auto& [name, tensor] : named) leaves.emplace_back(name, tensor.size());
    return detail::group_params(leaves);
}

// Analytic per-component count for one encoder layer: four D->D projections,
// the two PFFN maps, and both layer-norm affine pairs.
inline std::uint64_t bert_layer_param_count(std::uint64_t d, std::uint64_t pffn_hidden) {
    const std::uint64_t projections = 4 * (d * d + d);
    const std::uint64_t pffn = pffn_hidden * d + pffn_hidden + d * pffn_hidden + d;
    const std::uint64_t norms = 4 * d;
    return projections + pffn + norms;
}

inline std::uint64_t lstm_param_count(std::uint64_t input, std::uint64_t hidden,
                                      std::uint64_t layers) {
    std::uint64_t n = 0;
    for (std::uint64_t l = 0; l < layers; ++l) {
        const std::uint64_t in = l == 0 ? input : hidden;
        n += 4 * hidden * in + 4 * hidden + 4 * hidden * hidden + 4 * hidden;
    }
    return n;
}

// One forward pass of the toy backbone at its configured clip geometry.
template <class S>
FlopReport count_flops(const ToyBackbone<S>& backbone) {
    FlopCounter counter;
    const ClipGeometry& in = backbone.config().input;
    std::size_t C = in.channels, T = in.T, H = in.H, W = in.W;

    auto track_conv = [&](const std::string& name, const Conv3dParams<S>& p) {
        const auto& ks = p.kernel.shape();
        const std::size_t To = conv_out_extent(T, ks[2], p.stride.t, p.padding.t, "temporal");
        const std::size_t Ho = conv_out_extent(H, ks[3], p.stride.h, p.padding.h, "height");
        const std::size_t Wo = conv_out_extent(W, ks[4], p.stride.w, p.padding.w, "width");
        const std::uint64_t out_elems = std::uint64_t(ks[0]) * To * Ho * Wo;
        counter.add(name, conv3d_flops(out_elems, C, ks[2], ks[3], ks[4]));
        counter.add(name, out_elems * kGeluFlopsPerElement);
        C = ks[0];
        T = To;
        H = Ho;
        W = Wo;
    };

    const auto& stages = backbone.stages();
    for (std::size_t i = 0; i < stages.size(); ++i)
        track_conv("backbone.stage" + std::to_string(i + 1), stages[i]);
    if (backbone.block()) {
        track_conv("backbone.block", backbone.block()->reduce);
        track_conv("backbone.block", backbone.block()->mid);
        track_conv("backbone.block", backbone.block()->expand);
    }
    counter.add("backbone.spatial_pool", std::uint64_t(C) * T * H * W * kAddFlopsPerElement);

    return counter.report(std::to_string(in.channels) + "x" + std::to_string(in.T) + "x" +
                          std::to_string(in.H) + "x" + std::to_string(in.W) + " clip");
}

template <class S>
ParamReport count_params(const ToyBackbone<S>& backbone) {
    return count_params(backbone.named_parameters());
}

}  // namespace tpool
