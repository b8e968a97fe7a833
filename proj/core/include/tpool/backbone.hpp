#pragma once

#include <string>
#include <vector>

#include "tpool/nn.hpp"
#include "tpool/pool.hpp"
#include "tpool/tensor.hpp"

namespace tpool {

// One conv stage of the toy backbone. Kernels are cubic with same-padding
// so extents follow floor((L + 2p - k)/s) + 1.
struct StageSpec {
    std::size_t out_channels = 0;
    std::size_t kernel = 3;  // k x k x k, padding k/2
    Extent3 stride{1, 1, 1};
};

struct ClipGeometry {
    std::size_t channels = 3;
    std::size_t T = 16, H = 32, W = 32;
};

enum class ReductionMode { kOriginal, kFRMB, kFRAB };

inline const char* reduction_name(ReductionMode m) {
    switch (m) {
        case ReductionMode::kOriginal: return "original";
        case ReductionMode::kFRMB: return "frmb";
        default: return "frab";
    }
}

// FRMB swaps the final stage for a narrower bottleneck; FRAB appends a
// reducing bottleneck after the untouched backbone.
struct UnitBlockSpec {
    ReductionMode mode = ReductionMode::kOriginal;
    std::size_t in_dim = 0;   // width the original backbone ends with
    std::size_t out_dim = 0;  // reduced width (FRMB/FRAB)
};

struct ToyBackboneConfig {
    ClipGeometry input;
    std::vector<StageSpec> stages;  // last stage width is the feature dim

    // stand-in scale: widths {16, 32, d_out}, temporal stride 2 at stages 2-3
    static ToyBackboneConfig preset(ClipGeometry input, std::size_t d_out) {
        ToyBackboneConfig cfg;
        cfg.input = input;
        cfg.stages = {
            {16, 3, {1, 2, 2}},
            {32, 3, {2, 2, 2}},
            {d_out, 3, {2, 2, 2}},
        };
        return cfg;
    }

    std::size_t feature_dim() const { return stages.back().out_channels; }

    std::size_t out_T() const {
        std::size_t t = input.T;
        for (const auto& s : stages)
            t = conv_out_extent(t, s.kernel, s.stride.t, s.kernel / 2, "temporal");
        return t;
    }
};

// 1x1x1 reduce -> 3x3x3 -> 1x1x1 expand; mid width is out/4 (floored, min 1)
template <class S>
struct BottleneckParams {
    Conv3dParams<S> reduce, mid, expand;

    static BottleneckParams make(std::size_t in, std::size_t out, Extent3 stride, Rng& rng,
                                 S stddev) {
        const std::size_t m = std::max<std::size_t>(out / 4, 1);
        BottleneckParams p;
        p.reduce = Conv3dParams<S>::make(in, m, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng, stddev);
        p.mid = Conv3dParams<S>::make(m, m, {3, 3, 3}, stride, {1, 1, 1}, rng, stddev);
        p.expand = Conv3dParams<S>::make(m, out, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng, stddev);
        return p;
    }

    std::size_t param_count() const {
        return reduce.param_count() + mid.param_count() + expand.param_count();
    }

    std::size_t out_channels() const { return expand.out_channels(); }
};

template <class S>
Tensor<S> bottleneck_forward(const Tensor<S>& x, const BottleneckParams<S>& p) {
    return gelu(conv3d(gelu(conv3d(gelu(conv3d(x, p.reduce)), p.mid)), p.expand));
}

// Toy 3D-convolutional backbone: conv stages with GELU, spatial global
// average pooling at the end, temporal axis preserved. FRMB replaces the
// final stage with a reduced bottleneck; FRAB appends one.
template <class S>
class ToyBackbone {
public:
    ToyBackbone() = default;

    static ToyBackbone make(const ToyBackboneConfig& cfg, Rng& rng, S stddev = S(0.05)) {
        if (cfg.stages.empty()) throw ConfigError("backbone: needs at least one stage");
        ToyBackbone b;
        b.cfg_ = cfg;
        std::size_t in_ch = cfg.input.channels;
        for (const auto& s : cfg.stages) {
            const std::size_t k = s.kernel, pad = k / 2;
            b.stages_.push_back(Conv3dParams<S>::make(in_ch, s.out_channels, {k, k, k}, s.stride,
                                                      {pad, pad, pad}, rng, stddev));
            in_ch = s.out_channels;
        }
        return b;
    }

    // FRMB: drop the final stage, put a bottleneck with its stride in its
    // place. FRAB: keep everything, add a stride-1 bottleneck after.
    static ToyBackbone make_reduced(const ToyBackboneConfig& cfg, const UnitBlockSpec& spec,
                                    Rng& rng, S stddev = S(0.05)) {
        if (spec.in_dim != cfg.feature_dim())
            throw ShapeError("reduction: spec in_dim " + std::to_string(spec.in_dim) +
                             " vs backbone width " + std::to_string(cfg.feature_dim()));
        if (spec.mode == ReductionMode::kOriginal) return make(cfg, rng, stddev);

        ToyBackbone b;
        b.cfg_ = cfg;
        b.mode_ = spec.mode;
        const bool replace = spec.mode == ReductionMode::kFRMB;
        std::size_t in_ch = cfg.input.channels;
        const std::size_t n_plain = replace ? cfg.stages.size() - 1 : cfg.stages.size();
        for (std::size_t i = 0; i < n_plain; ++i) {
            const auto& s = cfg.stages[i];
            const std::size_t k = s.kernel, pad = k / 2;
            b.stages_.push_back(Conv3dParams<S>::make(in_ch, s.out_channels, {k, k, k}, s.stride,
                                                      {pad, pad, pad}, rng, stddev));
            in_ch = s.out_channels;
        }
        const Extent3 stride = replace ? cfg.stages.back().stride : Extent3{1, 1, 1};
        b.block_ = BottleneckParams<S>::make(in_ch, spec.out_dim, stride, rng, stddev);
        return b;
    }

    ReductionMode mode() const { return mode_; }

    std::size_t feature_dim() const {
        return block_ ? block_->out_channels() : stages_.back().out_channels();
    }

    // clip [C x T x H x W] -> [T_out x D_out]
    TemporalFeatures<S> forward(const Tensor<S>& clip) const {
        clip.require_rank(4, "backbone clip");
        if (clip.shape()[0] != cfg_.input.channels)
            throw ShapeError("backbone: clip channels " + shape_str(clip.shape()) +
                             " vs configured " + std::to_string(cfg_.input.channels));
        Tensor<S> x = clip;
        for (const auto& stage : stages_) x = gelu(conv3d(x, stage));
        if (block_) x = bottleneck_forward(x, *block_);
        return TemporalFeatures<S>(spatial_mean(x));
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const std::string prefix = "stage" + std::to_string(i + 1);
            out.emplace_back(prefix + ".kernel", stages_[i].kernel);
            out.emplace_back(prefix + ".bias", stages_[i].bias);
        }
        if (block_) {
            const char* names[3] = {"reduce", "mid", "expand"};
            const Conv3dParams<S>* convs[3] = {&block_->reduce, &block_->mid, &block_->expand};
            for (int i = 0; i < 3; ++i) {
                out.emplace_back(std::string("block.") + names[i] + ".kernel", convs[i]->kernel);
                out.emplace_back(std::string("block.") + names[i] + ".bias", convs[i]->bias);
            }
        }
        return out;
    }

    const ToyBackboneConfig& config() const { return cfg_; }
    const std::vector<Conv3dParams<S>>& stages() const { return stages_; }
    const std::optional<BottleneckParams<S>>& block() const { return block_; }

private:
    // [C x T x H x W] -> [T x C], spatial dims averaged away
    static Tensor<S> spatial_mean(const Tensor<S>& x) {
        const auto& s = x.shape();
        const std::size_t C = s[0], T = s[1], HW = s[2] * s[3];
        Tensor<S> flat = reshape(x, {C * T, HW});
        Tensor<S> avg = scale(matmul(flat, Tensor<S>::filled({HW, 1}, S(1))), S(1) / S(HW));
        return transpose(reshape(avg, {C, T}));
    }

    ToyBackboneConfig cfg_;
    std::vector<Conv3dParams<S>> stages_;
    std::optional<BottleneckParams<S>> block_;
    ReductionMode mode_ = ReductionMode::kOriginal;
};

}  // namespace tpool
