#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tpool/nn.hpp"
#include "tpool/tensor.hpp"

namespace tpool {

// [T x D] matrix of per-timestep features, the input to every pooler.
template <class S>
struct TemporalFeatures {
    Tensor<S> features;  // [T x D]

    TemporalFeatures() = default;
    explicit TemporalFeatures(Tensor<S> f) : features(std::move(f)) {
        features.require_rank(2, "TemporalFeatures");
        if (T() < 1 || D() < 1)
            throw ConfigError("TemporalFeatures: extents must be >= 1, got " +
                              shape_str(features.shape()));
    }

    std::size_t T() const { return features.rows(); }
    std::size_t D() const { return features.cols(); }
};

template <class S>
struct ClassifierOutput {
    Tensor<S> logits;  // [num_classes]
    std::size_t label = 0;
};

// argmax with lowest-index tie break
template <class S>
std::size_t argmax_label(const Tensor<S>& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;
    return best;
}

template <class S>
ClassifierOutput<S> classify(const Tensor<S>& pooled, const LinearParams<S>& head) {
    Tensor<S> logits = linear(pooled, head);
    return {logits, argmax_label(logits)};
}

// ---------------------------------------------------------------------------
// order-free baselines
// ---------------------------------------------------------------------------

// temporal global average pooling: mean over the T axis
template <class S>
Tensor<S> tgap(const TemporalFeatures<S>& f) {
    return mean_axis0(f.features);
}

// rows flattened in temporal order -> [T*D]
template <class S>
Tensor<S> concat_pool(const TemporalFeatures<S>& f) {
    return reshape(f.features, {f.T() * f.D()});
}

// Largest hidden width w such that a concat(T*D) -> w -> num_classes stack
// stays within the parameter budget: (T*D)*w + w + w*classes + classes.
inline std::size_t fc_width_for_budget(std::size_t target_params, std::size_t T, std::size_t D,
                                       std::size_t num_classes) {
    const std::size_t per_unit = T * D + 1 + num_classes;
    if (target_params < num_classes + per_unit)
        throw ConfigError("fc budget " + std::to_string(target_params) +
                          " infeasible: one hidden unit already needs " +
                          std::to_string(num_classes + per_unit) + " parameters");
    return (target_params - num_classes) / per_unit;
}

// final top-layer hidden state
template <class S>
Tensor<S> lstm_pool(const TemporalFeatures<S>& f, const LstmParams<S>& p) {
    return lstm_forward(f.features, p).final_hidden;
}

// ---------------------------------------------------------------------------
// non-local block (embedded Gaussian), ablation baseline
// ---------------------------------------------------------------------------

template <class S>
struct NonlocalParams {
    LinearParams<S> theta, phi, g, out;  // all D -> D; inter dim equals input dim

    static NonlocalParams make(std::size_t d, Rng& rng, S stddev = S(0.02)) {
        NonlocalParams p;
        p.theta = LinearParams<S>::make(d, d, rng, stddev);
        p.phi = LinearParams<S>::make(d, d, rng, stddev);
        p.g = LinearParams<S>::make(d, d, rng, stddev);
        p.out = LinearParams<S>::make(d, d, rng, stddev);
        return p;
    }

    std::size_t param_count() const {
        return theta.param_count() + phi.param_count() + g.param_count() + out.param_count();
    }
};

// f + W_out( softmax(theta(f) phi(f)^T) g(f) ); no scaling, no positions,
// no classification token
template <class S>
Tensor<S> nonlocal_block(const TemporalFeatures<S>& f, const NonlocalParams<S>& p) {
    if (p.theta.in_dim() != f.D())
        throw ShapeError("nonlocal_block: params built for dim " +
                         std::to_string(p.theta.in_dim()) + ", features are " +
                         shape_str(f.features.shape()));
    const Tensor<S>& x = f.features;
    Tensor<S> attn = softmax(matmul(linear(x, p.theta), transpose(linear(x, p.phi))), 1);
    Tensor<S> mixed = matmul(attn, linear(x, p.g));
    return add(x, linear(mixed, p.out));
}

// ---------------------------------------------------------------------------
// BERT pooler
// ---------------------------------------------------------------------------

struct BertPoolerConfig {
    std::size_t d_model = 0;
    std::size_t num_heads = 1;
    std::size_t num_layers = 1;
    std::size_t pffn_hidden = 0;  // 0 -> 4 * d_model
    double dropout_p = 0.1;
    double mask_prob = 0.0;
    bool renormalize_mask = false;  // mask columns are zeroed post-softmax; rows
                                    // are left unnormalized unless this is set
    bool use_cls_token = true;
    bool use_positional = true;
    std::size_t max_positions = 0;

    std::size_t hidden() const { return pffn_hidden == 0 ? 4 * d_model : pffn_hidden; }

    void validate() const {
        if (d_model == 0 || num_heads == 0 || num_layers == 0 || max_positions == 0)
            throw ConfigError("bert config: extents must be positive");
        if (d_model % num_heads != 0)
            throw ConfigError("bert config: d_model " + std::to_string(d_model) +
                              " not divisible by " + std::to_string(num_heads) + " heads");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ConfigError("bert config: dropout_p outside [0, 1)");
        if (mask_prob < 0.0 || mask_prob >= 1.0)
            throw ConfigError("bert config: mask_prob outside [0, 1)");
    }
};

template <class S>
struct BertLayerParams {
    LinearParams<S> query, key, value, out;  // D -> D each
    LinearParams<S> pffn1, pffn2;            // D -> hidden, hidden -> D
    Tensor<S> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // [D]
};

template <class S>
struct BertPoolerParams {
    std::vector<BertLayerParams<S>> layers;
    Tensor<S> cls;         // [1 x D]; undefined when use_cls_token is off
    Tensor<S> positional;  // [(max_positions + 1) x D]; row 0 belongs to the
                           // classification slot

    // cls, positional and projection weights start N(0, 0.02^2); norms at 1/0
    static BertPoolerParams make(const BertPoolerConfig& cfg, Rng& rng) {
        cfg.validate();
        const std::size_t d = cfg.d_model;
        const S stddev = S(0.02);
        BertPoolerParams p;
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            BertLayerParams<S> lp;
            lp.query = LinearParams<S>::make(d, d, rng, stddev);
            lp.key = LinearParams<S>::make(d, d, rng, stddev);
            lp.value = LinearParams<S>::make(d, d, rng, stddev);
            lp.out = LinearParams<S>::make(d, d, rng, stddev);
            lp.pffn1 = LinearParams<S>::make(d, cfg.hidden(), rng, stddev);
            lp.pffn2 = LinearParams<S>::make(cfg.hidden(), d, rng, stddev);
            lp.ln1_gamma = Tensor<S>::filled({d}, S(1), true);
            lp.ln1_beta = Tensor<S>::zeros({d}, true);
            lp.ln2_gamma = Tensor<S>::filled({d}, S(1), true);
            lp.ln2_beta = Tensor<S>::zeros({d}, true);
            p.layers.push_back(std::move(lp));
        }
        if (cfg.use_cls_token) p.cls = Tensor<S>::randn({1, d}, rng, S(0), stddev, true);
        if (cfg.use_positional)
            p.positional =
                Tensor<S>::randn({cfg.max_positions + 1, d}, rng, S(0), stddev, true);
        return p;
    }
};

template <class S>
struct PoolOutput {
    Tensor<S> y_cls;  // [D]
    Tensor<S> y_i;    // [T x D]
};

// Per-head attention rows softmax_j( q_i . k_j / sqrt(D/H) ) over the
// augmented (cls + temporal) sequence. Rows sum to 1.
template <class S>
std::vector<Tensor<S>> attention_scores(const Tensor<S>& f_aug, const BertLayerParams<S>& layer,
                                        std::size_t num_heads) {
    const std::size_t d = f_aug.cols();
    const std::size_t dh = d / num_heads;
    Tensor<S> q = linear(f_aug, layer.query);
    Tensor<S> k = linear(f_aug, layer.key);
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
    std::vector<Tensor<S>> weights;
    weights.reserve(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        Tensor<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
        weights.push_back(softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1));
    }
    return weights;
}

// Zeroes the attention columns of masked temporal positions after the
// softmax, so those features contribute nothing downstream. Position 0 is
// the classification slot and may never be masked. Rows keep their reduced
// sums unless `renormalize` is set.
template <class S>
Tensor<S> apply_feature_mask(const Tensor<S>& weights, const std::set<std::size_t>& masked,
                             bool renormalize = false) {
    weights.require_rank(2, "apply_feature_mask");
    const std::size_t n = weights.cols();
    if (masked.empty()) return weights;
    for (std::size_t j : masked) {
        if (j == 0) throw ContractError("apply_feature_mask: position 0 (cls) cannot be masked");
        if (j >= n)
            throw ContractError("apply_feature_mask: position " + std::to_string(j) +
                                " outside sequence of " + std::to_string(n));
    }
    Tensor<S> col_mask = Tensor<S>::filled({weights.rows(), n}, S(1));
    for (std::size_t j : masked)
        for (std::size_t i = 0; i < weights.rows(); ++i) col_mask.ref(i, j) = S(0);
    Tensor<S> out = mul(weights, col_mask);
    return renormalize ? normalize_rows(out) : out;
}

// position-wise feed-forward: W2 gelu(W1 x + b1) + b2, same map per row
template <class S>
Tensor<S> pffn(const Tensor<S>& x, const LinearParams<S>& w1, const LinearParams<S>& w2) {
    return linear(gelu(linear(x, w1)), w2);
}

// Optional taps into the encoder; `value_taps[l]`, when present, is a
// zero [(T+1) x D] tensor added to layer l's value projection so callers
// can read gradients at that point after backward.
template <class S>
struct BertForwardHooks {
    std::vector<Tensor<S>> value_taps;
};

// Masked temporal positions for one forward pass: independent
// Bernoulli(mask_prob) per position, training mode only.
inline std::set<std::size_t> sample_mask_set(std::size_t T, double mask_prob, bool training,
                                             Rng& rng) {
    std::set<std::size_t> masked;
    if (!training || mask_prob <= 0.0) return masked;
    for (std::size_t t = 1; t <= T; ++t)
        if (rng.bernoulli(mask_prob)) masked.insert(t);
    return masked;
}

// BERT late temporal pooling. Position 0 of the augmented sequence carries
// either the learned classification token or, with use_cls_token off, the
// mean of the temporal features; the block output at position 0 is y_cls.
template <class S>
PoolOutput<S> bert_pool(const TemporalFeatures<S>& f, const BertPoolerConfig& cfg,
                        const BertPoolerParams<S>& params, Rng& rng, bool training,
                        const BertForwardHooks<S>* hooks = nullptr) {
    cfg.validate();
    if (f.D() != cfg.d_model)
        throw ShapeError("bert_pool: features " + shape_str(f.features.shape()) +
                         " vs d_model " + std::to_string(cfg.d_model));
    if (f.T() > cfg.max_positions)
        throw ConfigError("bert_pool: sequence length " + std::to_string(f.T()) +
                          " exceeds max_positions " + std::to_string(cfg.max_positions));
    const std::size_t T = f.T(), d = cfg.d_model;

    Tensor<S> seed =
        cfg.use_cls_token ? params.cls : reshape(mean_axis0(f.features), {1, d});
    Tensor<S> x = concat_rows(seed, f.features);  // [(T+1) x d]
    if (cfg.use_positional) x = add(x, slice_rows(params.positional, 0, T + 1));

    const std::set<std::size_t> masked = sample_mask_set(T, cfg.mask_prob, training, rng);

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const BertLayerParams<S>& layer = params.layers[l];
        const std::size_t dh = d / cfg.num_heads;

        std::vector<Tensor<S>> attn = attention_scores(x, layer, cfg.num_heads);
        Tensor<S> v = linear(x, layer.value);
        if (hooks && l < hooks->value_taps.size() && hooks->value_taps[l].defined())
            v = add(v, hooks->value_taps[l]);

        Tensor<S> heads;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            Tensor<S> w = apply_feature_mask(attn[h], masked, cfg.renormalize_mask);
            Tensor<S> mixed = matmul(w, slice_cols(v, h * dh, (h + 1) * dh));
            heads = h == 0 ? mixed : concat_cols(heads, mixed);
        }
        Tensor<S> attn_out = linear(heads, layer.out);
        x = layer_norm(add(x, attn_out), layer.ln1_gamma, layer.ln1_beta);

        Tensor<S> hmid = dropout(gelu(linear(x, layer.pffn1)), cfg.dropout_p, training, rng);
        Tensor<S> ffn_out = linear(hmid, layer.pffn2);
        x = layer_norm(add(x, ffn_out), layer.ln2_gamma, layer.ln2_beta);
    }

    return {reshape(slice_rows(x, 0, 1), {d}), slice_rows(x, 1, T + 1)};
}

// ---------------------------------------------------------------------------
// two-stream fusion
// ---------------------------------------------------------------------------

template <class S>
struct TwoStreamFeatures {
    TemporalFeatures<S> slow;  // [T_s x D_s]
    TemporalFeatures<S> fast;  // [T_f x D_f], T_f = speed_ratio * T_s

    std::size_t speed_ratio() const {
        if (slow.T() == 0 || fast.T() % slow.T() != 0)
            throw ConfigError("two-stream: fast length " + std::to_string(fast.T()) +
                              " is not a multiple of slow length " + std::to_string(slow.T()));
        return fast.T() / slow.T();
    }
};

// non-overlapping window mean over each block of `factor` timesteps
template <class S>
TemporalFeatures<S> temporal_downsample(const TemporalFeatures<S>& f, std::size_t factor) {
    if (factor == 0 || f.T() % factor != 0)
        throw ConfigError("temporal_downsample: factor " + std::to_string(factor) +
                          " does not divide T = " + std::to_string(f.T()));
    if (factor == 1) return f;
    const std::size_t To = f.T() / factor;
    Tensor<S> out;
    for (std::size_t b = 0; b < To; ++b) {
        Tensor<S> window =
            reshape(mean_axis0(slice_rows(f.features, b * factor, (b + 1) * factor)),
                    {std::size_t(1), f.D()});
        out = b == 0 ? window : concat_rows(out, window);
    }
    return TemporalFeatures<S>(out);
}

template <class S>
struct EarlyFusionParams {
    BertPoolerConfig cfg;  // d_model = D_slow + D_fast
    BertPoolerParams<S> bert;
    LinearParams<S> head;
};

// Fast stream is brought down to the slow temporal resolution, channels are
// concatenated per timestep, and a single BERT module pools the fused
// sequence.
template <class S>
ClassifierOutput<S> early_fusion_bert(const TwoStreamFeatures<S>& ts,
                                      const EarlyFusionParams<S>& p, Rng& rng, bool training) {
    const std::size_t ratio = ts.speed_ratio();
    TemporalFeatures<S> fast_ds = temporal_downsample(ts.fast, ratio);
    if (fast_ds.T() != ts.slow.T())
        throw ShapeError("early fusion: downsampled fast length " + std::to_string(fast_ds.T()) +
                         " vs slow " + std::to_string(ts.slow.T()));
    TemporalFeatures<S> fused(concat_cols(ts.slow.features, fast_ds.features));
    PoolOutput<S> pooled = bert_pool(fused, p.cfg, p.bert, rng, training);
    return classify(pooled.y_cls, p.head);
}

template <class S>
struct LateFusionParams {
    BertPoolerConfig cfg_slow, cfg_fast;
    BertPoolerParams<S> bert_slow, bert_fast;
    LinearParams<S> head;  // in = D_slow + D_fast
};

// One BERT module per stream; the two y_cls vectors are concatenated and
// classified jointly.
template <class S>
ClassifierOutput<S> late_fusion_bert(const TwoStreamFeatures<S>& ts, const LateFusionParams<S>& p,
                                     Rng& rng, bool training) {
    PoolOutput<S> slow = bert_pool(ts.slow, p.cfg_slow, p.bert_slow, rng, training);
    PoolOutput<S> fast = bert_pool(ts.fast, p.cfg_fast, p.bert_fast, rng, training);
    Tensor<S> joint = reshape(
        concat_cols(reshape(slow.y_cls, {std::size_t(1), slow.y_cls.size()}),
                    reshape(fast.y_cls, {std::size_t(1), fast.y_cls.size()})),
        {slow.y_cls.size() + fast.y_cls.size()});
    return classify(joint, p.head);
}

enum class FuseMode { kClipMean, kStreamSum };

// clip mode averages logits of non-overlapping clips; stream mode sums the
// per-stream scores
template <class S>
ClassifierOutput<S> fuse_scores(const std::vector<ClassifierOutput<S>>& outputs, FuseMode mode) {
    if (outputs.empty()) throw ConfigError("fuse_scores: empty input");
    const std::size_t classes = outputs.front().logits.size();
    for (const auto& o : outputs)
        if (o.logits.size() != classes)
            throw ShapeError("fuse_scores: class counts differ: " + std::to_string(classes) +
                             " vs " + std::to_string(o.logits.size()));
    Tensor<S> acc = outputs.front().logits;
    for (std::size_t i = 1; i < outputs.size(); ++i) acc = add(acc, outputs[i].logits);
    if (mode == FuseMode::kClipMean) acc = scale(acc, S(1) / S(outputs.size()));
    return {acc, argmax_label(acc)};
}

}  // namespace tpool
