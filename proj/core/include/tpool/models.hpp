#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tpool/pool.hpp"
#include "tpool/profiler.hpp"

namespace tpool {

struct SeqGeometry {
    std::size_t T = 0;
    std::size_t D = 0;

    std::string str() const {
        return std::to_string(T) + "x" + std::to_string(D) + " features";
    }
};

// A pooling head plus its classifier: maps [T x D] temporal features to
// class logits. Parameters are exposed by dotted name for the optimizer
// and the profiler.
template <class S>
class PoolerModel {
public:
    virtual ~PoolerModel() = default;

    virtual const std::string& name() const = 0;
    virtual std::size_t num_classes() const = 0;
    virtual Tensor<S> logits(const TemporalFeatures<S>& f, Rng& rng, bool training) = 0;
    virtual std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const = 0;
    virtual void add_flops(FlopCounter& counter, const SeqGeometry& g) const = 0;

    ClassifierOutput<S> classify(const TemporalFeatures<S>& f, Rng& rng, bool training) {
        Tensor<S> z = logits(f, rng, training);
        return {z, argmax_label(z)};
    }

    std::vector<Tensor<S>> parameters() const {
        std::vector<Tensor<S>> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }
};

namespace detail {

template <class S>
void push_linear(std::vector<std::pair<std::string, Tensor<S>>>& out, const std::string& prefix,
                 const LinearParams<S>& p) {
    out.emplace_back(prefix + ".weight", p.weight);
    out.emplace_back(prefix + ".bias", p.bias);
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <class S>
class TgapModel final : public PoolerModel<S> {
public:
    TgapModel(std::size_t d, std::size_t classes, Rng& rng)
        : name_("avg"), head_(LinearParams<S>::make_uniform(d, classes, rng)) {}

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return head_.out_dim(); }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng&, bool) override {
        return linear(tgap(f), head_);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        detail::push_linear(out, "classifier", head_);
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        c.add("pool.avg", std::uint64_t(g.T) * g.D * kAddFlopsPerElement);
        c.add("classifier", linear_flops(1, g.D, num_classes()));
    }

private:
    std::string name_;
    LinearParams<S> head_;
};

template <class S>
class ConcatModel final : public PoolerModel<S> {
public:
    ConcatModel(std::size_t t, std::size_t d, std::size_t classes, Rng& rng)
        : name_("concat"), head_(LinearParams<S>::make_uniform(t * d, classes, rng)) {}

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return head_.out_dim(); }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng&, bool) override {
        return linear(concat_pool(f), head_);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        detail::push_linear(out, "classifier", head_);
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        c.add("classifier", linear_flops(1, g.T * g.D, num_classes()));
    }

private:
    std::string name_;
    LinearParams<S> head_;
};

template <class S>
class LstmModel final : public PoolerModel<S> {
public:
    LstmModel(std::size_t d, std::size_t hidden, std::size_t layers, std::size_t classes,
              Rng& rng)
        : name_("lstm"),
          lstm_(LstmParams<S>::make(d, hidden, layers, rng)),
          head_(LinearParams<S>::make_uniform(hidden, classes, rng)) {}

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return head_.out_dim(); }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng&, bool) override {
        return linear(lstm_pool(f, lstm_), head_);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        for (std::size_t l = 0; l < lstm_.layers.size(); ++l) {
            const std::string prefix = "lstm.layer" + std::to_string(l);
            detail::push_linear(out, prefix + ".ih", lstm_.layers[l].ih);
            detail::push_linear(out, prefix + ".hh", lstm_.layers[l].hh);
        }
        detail::push_linear(out, "classifier", head_);
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        const std::size_t h = lstm_.hidden;
        for (std::size_t l = 0; l < lstm_.layers.size(); ++l) {
            const std::size_t in = l == 0 ? g.D : h;
            std::uint64_t per_step = linear_flops(1, in, 4 * h) + linear_flops(1, h, 4 * h);
            per_step += 3 * h * kSigmoidFlopsPerElement + 2 * h * kTanhFlopsPerElement;
            per_step += 4 * h;  // gate/state elementwise products and adds
            c.add("lstm.layer" + std::to_string(l), g.T * per_step);
        }
        c.add("classifier", linear_flops(1, h, num_classes()));
    }

private:
    std::string name_;
    LstmParams<S> lstm_;
    LinearParams<S> head_;
};

// concat -> gelu(fc) -> classifier, fc width solved from a parameter budget
template <class S>
class ConcatFcModel final : public PoolerModel<S> {
public:
    ConcatFcModel(std::size_t t, std::size_t d, std::size_t classes, std::size_t budget,
                  Rng& rng, std::string name = "concat_fc")
        : name_(std::move(name)), width_(fc_width_for_budget(budget, t, d, classes)) {
        if (width_ == 0) throw ConfigError("concat_fc: budget leaves no hidden units");
        fc_ = LinearParams<S>::make_uniform(t * d, width_, rng);
        head_ = LinearParams<S>::make_uniform(width_, classes, rng);
    }

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return head_.out_dim(); }
    std::size_t fc_width() const { return width_; }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng&, bool) override {
        return linear(gelu(linear(concat_pool(f), fc_)), head_);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        detail::push_linear(out, "fc", fc_);
        detail::push_linear(out, "classifier", head_);
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        c.add("fc", linear_flops(1, g.T * g.D, width_) + width_ * kGeluFlopsPerElement);
        c.add("classifier", linear_flops(1, width_, num_classes()));
    }

private:
    std::string name_;
    std::size_t width_;
    LinearParams<S> fc_;
    LinearParams<S> head_;
};

// non-local block in front of the concat+fc stack; fc width is solved from
// whatever budget remains after the block's own parameters
template <class S>
class NonlocalConcatFcModel final : public PoolerModel<S> {
public:
    NonlocalConcatFcModel(std::size_t t, std::size_t d, std::size_t classes, std::size_t budget,
                          Rng& rng)
        : name_("nonlocal_concat_fc"), block_(NonlocalParams<S>::make(d, rng)) {
        const std::size_t block_params = block_.param_count();
        if (budget <= block_params)
            throw ConfigError("nonlocal_concat_fc: budget " + std::to_string(budget) +
                              " consumed by the non-local block (" +
                              std::to_string(block_params) + ")");
        stack_ = std::make_unique<ConcatFcModel<S>>(t, d, classes, budget - block_params, rng,
                                                    "nonlocal_concat_fc");
    }

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return stack_->num_classes(); }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng& rng, bool training) override {
        TemporalFeatures<S> attended(nonlocal_block(f, block_));
        return stack_->logits(attended, rng, training);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        detail::push_linear(out, "nonlocal.theta", block_.theta);
        detail::push_linear(out, "nonlocal.phi", block_.phi);
        detail::push_linear(out, "nonlocal.g", block_.g);
        detail::push_linear(out, "nonlocal.out", block_.out);
        for (auto& p : stack_->named_parameters()) out.push_back(std::move(p));
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        const std::uint64_t T = g.T, D = g.D;
        std::uint64_t n = 4 * linear_flops(T, D, D);     // theta, phi, g, out
        n += 2 * matmul_flops(T, D, T);                  // scores and mixing
        n += T * T * kSoftmaxFlopsPerElement;
        n += T * D * kAddFlopsPerElement;                // residual
        c.add("nonlocal", n);
        stack_->add_flops(c, g);
    }

private:
    std::string name_;
    NonlocalParams<S> block_;
    std::unique_ptr<ConcatFcModel<S>> stack_;
};

template <class S>
class BertModel final : public PoolerModel<S> {
public:
    BertModel(BertPoolerConfig cfg, std::size_t classes, Rng& rng)
        : name_("bert"),
          cfg_(cfg),
          params_(BertPoolerParams<S>::make(cfg, rng)),
          head_(LinearParams<S>::make_uniform(cfg.d_model, classes, rng)) {}

    const std::string& name() const override { return name_; }
    std::size_t num_classes() const override { return head_.out_dim(); }
    const BertPoolerConfig& config() const { return cfg_; }
    BertPoolerParams<S>& params() { return params_; }

    Tensor<S> logits(const TemporalFeatures<S>& f, Rng& rng, bool training) override {
        return linear(bert_pool(f, cfg_, params_, rng, training).y_cls, head_);
    }

    std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const override {
        std::vector<std::pair<std::string, Tensor<S>>> out;
        for (std::size_t l = 0; l < params_.layers.size(); ++l) {
            const std::string prefix = "encoder.layer" + std::to_string(l);
            const BertLayerParams<S>& lp = params_.layers[l];
            detail::push_linear(out, prefix + ".query", lp.query);
            detail::push_linear(out, prefix + ".key", lp.key);
            detail::push_linear(out, prefix + ".value", lp.value);
            detail::push_linear(out, prefix + ".out", lp.out);
            detail::push_linear(out, prefix + ".pffn1", lp.pffn1);
            detail::push_linear(out, prefix + ".pffn2", lp.pffn2);
            out.emplace_back(prefix + ".ln1.gamma", lp.ln1_gamma);
            out.emplace_back(prefix + ".ln1.beta", lp.ln1_beta);
            out.emplace_back(prefix + ".ln2.gamma", lp.ln2_gamma);
            out.emplace_back(prefix + ".ln2.beta", lp.ln2_beta);
        }
        if (cfg_.use_cls_token) out.emplace_back("embed.cls", params_.cls);
        if (cfg_.use_positional) out.emplace_back("embed.positional", params_.positional);
        detail::push_linear(out, "classifier", head_);
        return out;
    }

    void add_flops(FlopCounter& c, const SeqGeometry& g) const override {
        const std::uint64_t n = g.T + 1;  // cls slot + temporal positions
        const std::uint64_t D = g.D, hidden = cfg_.hidden();
        if (cfg_.use_positional) c.add("embed", n * D * kAddFlopsPerElement);
        for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
            const std::string name = "encoder.layer" + std::to_string(l);
            std::uint64_t f = 4 * linear_flops(n, D, D);          // q, k, v, out
            f += 2 * matmul_flops(n, D / cfg_.num_heads, n) * cfg_.num_heads;
            f += cfg_.num_heads * n * n * kSoftmaxFlopsPerElement;
            f += linear_flops(n, D, hidden) + linear_flops(n, hidden, D);
            f += n * hidden * kGeluFlopsPerElement;
            f += 2 * n * D * kLayerNormFlopsPerElement;
            f += 2 * n * D * kAddFlopsPerElement;                 // residuals
            c.add(name, f);
        }
        c.add("classifier", linear_flops(1, D, num_classes()));
    }

private:
    std::string name_;
    BertPoolerConfig cfg_;
    BertPoolerParams<S> params_;
    LinearParams<S> head_;
};

// ---------------------------------------------------------------------------
// factory
// ---------------------------------------------------------------------------

struct PoolerSpec {
    std::string kind = "bert";  // avg | concat | lstm | concat_fc | nonlocal_concat_fc | bert

    // bert
    std::size_t num_layers = 1;
    std::size_t num_heads = 8;
    std::size_t pffn_hidden = 0;   // 0 -> 4 * D
    std::size_t max_positions = 0;  // 0 -> T of the dataset
    bool use_cls_token = true;
    bool use_positional = true;
    bool renormalize_mask = false;
    double dropout_p = 0.1;
    double mask_prob = 0.0;

    // lstm
    std::size_t lstm_hidden = 64;
    std::size_t lstm_layers = 2;

    // concat_fc / nonlocal_concat_fc; 0 means "match the bert head budget"
    std::size_t fc_budget = 0;

    BertPoolerConfig bert_config(std::size_t t, std::size_t d) const {
        BertPoolerConfig cfg;
        cfg.d_model = d;
        cfg.num_heads = num_heads;
        cfg.num_layers = num_layers;
        cfg.pffn_hidden = pffn_hidden;
        cfg.dropout_p = dropout_p;
        cfg.mask_prob = mask_prob;
        cfg.renormalize_mask = renormalize_mask;
        cfg.use_cls_token = use_cls_token;
        cfg.use_positional = use_positional;
        cfg.max_positions = max_positions == 0 ? t : max_positions;
        return cfg;
    }

    // full parameter budget of the matching bert head (encoder + embeddings
    // + classifier), used when fc_budget is left at 0
    std::size_t matched_budget(std::size_t t, std::size_t d, std::size_t classes) const {
        const BertPoolerConfig cfg = bert_config(t, d);
        std::size_t n = cfg.num_layers * bert_layer_param_count(d, cfg.hidden());
        if (cfg.use_cls_token) n += d;
        if (cfg.use_positional) n += (cfg.max_positions + 1) * d;
        n += d * classes + classes;
        return n;
    }
};

template <class S>
std::unique_ptr<PoolerModel<S>> make_pooler(const PoolerSpec& spec, std::size_t t, std::size_t d,
                                            std::size_t classes, Rng& rng) {
    const std::size_t budget =
        spec.fc_budget == 0 ? spec.matched_budget(t, d, classes) : spec.fc_budget;
    if (spec.kind == "avg") return std::make_unique<TgapModel<S>>(d, classes, rng);
    if (spec.kind == "concat") return std::make_unique<ConcatModel<S>>(t, d, classes, rng);
    if (spec.kind == "lstm")
        return std::make_unique<LstmModel<S>>(d, spec.lstm_hidden, spec.lstm_layers, classes,
                                              rng);
    if (spec.kind == "concat_fc")
        return std::make_unique<ConcatFcModel<S>>(t, d, classes, budget, rng);
    if (spec.kind == "nonlocal_concat_fc")
        return std::make_unique<NonlocalConcatFcModel<S>>(t, d, classes, budget, rng);
    if (spec.kind == "bert")
        return std::make_unique<BertModel<S>>(spec.bert_config(t, d), classes, rng);
    throw ConfigError("unknown pooler kind '" + spec.kind + "'");
}

template <class S>
ParamReport count_params(const PoolerModel<S>& model) {
    return count_params(model.named_parameters());
}

template <class S>
FlopReport count_flops(const PoolerModel<S>& model, const SeqGeometry& g) {
    FlopCounter counter;
    model.add_flops(counter, g);
    return counter.report(g.str());
}

}  // namespace tpool
