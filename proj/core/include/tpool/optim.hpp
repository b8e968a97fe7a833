#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "tpool/dataset.hpp"
#include "tpool/models.hpp"
#include "tpool/tensor.hpp"

namespace tpool {

// -log softmax(logits)[label], stabilized via logsumexp
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::size_t label) {
    logits.require_rank(1, "cross_entropy");
    const std::size_t c = logits.size();
    if (label >= c)
        throw ContractError("cross_entropy: label " + std::to_string(label) + " outside " +
                            std::to_string(c) + " classes");
    S mx = logits(0);
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits(i));
    S sum = S(0);
    for (std::size_t i = 0; i < c; ++i) sum += std::exp(logits(i) - mx);
    const S loss = std::log(sum) + mx - logits(label);
    return make_op<S>({1}, {loss}, {logits}, [label, mx, sum](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const S g = self.grad[0];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const S softmax_i = std::exp(p.data[i] - mx) / sum;
            p.grad[i] += g * (softmax_i - (i == label ? S(1) : S(0)));
        }
    });
}

// ---------------------------------------------------------------------------
// optimizers
// ---------------------------------------------------------------------------

struct AdamwConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class S>
struct AdamwState {
    AdamwConfig cfg;
    std::size_t step = 0;
    std::unordered_map<const void*, std::vector<S>> m, v;

    explicit AdamwState(AdamwConfig c = {}) : cfg(c) {}
};

// Decoupled weight decay: w <- w - lr*wd*w - lr*mhat/(sqrt(vhat)+eps).
// Parameters absent from the gradient map are treated as zero-gradient.
template <class S>
void adamw_step(const std::vector<Tensor<S>>& params, const GradientMap<S>& grads,
                AdamwState<S>& state) {
    const AdamwConfig& c = state.cfg;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
    for (const Tensor<S>& p : params) {
        Tensor<S> param = p;
        auto& m = state.m[param.id()];
        auto& v = state.v[param.id()];
        if (m.size() != param.size()) m.assign(param.size(), S(0));
        if (v.size() != param.size()) v.assign(param.size(), S(0));
        const Tensor<S>* g = grads.contains(param) ? &grads.at(param) : nullptr;
        S* w = param.data();
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double gi = g ? double((*g)(i)) : 0.0;
            m[i] = S(c.beta1 * double(m[i]) + (1.0 - c.beta1) * gi);
            v[i] = S(c.beta2 * double(v[i]) + (1.0 - c.beta2) * gi * gi);
            const double mhat = double(m[i]) / bc1;
            const double vhat = double(v[i]) / bc2;
            w[i] = S(double(w[i]) - c.lr * c.weight_decay * double(w[i]) -
                     c.lr * mhat / (std::sqrt(vhat) + c.eps));
        }
    }
}

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.9;
};

template <class S>
struct SgdState {
    SgdConfig cfg;
    std::unordered_map<const void*, std::vector<S>> buffer;

    explicit SgdState(SgdConfig c = {}) : cfg(c) {}
};

// b <- mu*b + g; w <- w - lr*b
template <class S>
void sgd_step(const std::vector<Tensor<S>>& params, const GradientMap<S>& grads,
              SgdState<S>& state) {
    for (const Tensor<S>& p : params) {
        Tensor<S> param = p;
        auto& b = state.buffer[param.id()];
        if (b.size() != param.size()) b.assign(param.size(), S(0));
        const Tensor<S>* g = grads.contains(param) ? &grads.at(param) : nullptr;
        S* w = param.data();
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double gi = g ? double((*g)(i)) : 0.0;
            b[i] = S(state.cfg.momentum * double(b[i]) + gi);
            w[i] = S(double(w[i]) - state.cfg.lr * double(b[i]));
        }
    }
}

template <class S>
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<Tensor<S>>& params, const GradientMap<S>& grads) = 0;
    virtual double lr() const = 0;
    virtual void set_lr(double lr) = 0;
    virtual const char* name() const = 0;
};

template <class S>
class AdamwOptimizer final : public Optimizer<S> {
public:
    explicit AdamwOptimizer(AdamwConfig cfg = {}) : state_(cfg) {}
    void step(const std::vector<Tensor<S>>& params, const GradientMap<S>& grads) override {
        adamw_step(params, grads, state_);
    }
    double lr() const override { return state_.cfg.lr; }
    void set_lr(double lr) override { state_.cfg.lr = lr; }
    const char* name() const override { return "adamw"; }

private:
    AdamwState<S> state_;
};

template <class S>
class SgdOptimizer final : public Optimizer<S> {
public:
    explicit SgdOptimizer(SgdConfig cfg = {}) : state_(cfg) {}
    void step(const std::vector<Tensor<S>>& params, const GradientMap<S>& grads) override {
        sgd_step(params, grads, state_);
    }
    double lr() const override { return state_.cfg.lr; }
    void set_lr(double lr) override { state_.cfg.lr = lr; }
    const char* name() const override { return "sgd"; }

private:
    SgdState<S> state_;
};

// ---------------------------------------------------------------------------
// reduce-on-plateau schedule
// ---------------------------------------------------------------------------

// lr is multiplied by `factor` once the monitored metric has gone `patience`
// consecutive epochs without improving; it never increases.
struct PlateauScheduler {
    double factor = 0.1;
    std::size_t patience = 5;
    double lr = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    bool enabled = true;

    double step(double metric) {
        if (!enabled) return lr;
        if (metric < best) {
            best = metric;
            bad_epochs = 0;
        } else if (++bad_epochs >= patience) {
            lr *= factor;
            bad_epochs = 0;
        }
        return lr;
    }
};

inline double plateau_step(PlateauScheduler& state, double metric) {
    return state.step(metric);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string precision = "double";  // double | single

    std::string optimizer = "adamw";  // adamw | sgd
    AdamwConfig adamw;
    SgdConfig sgd;

    bool use_plateau = true;
    double plateau_factor = 0.1;
    std::size_t plateau_patience = 5;

    // stop once train top-1 has stayed at or above this for
    // `early_stop_patience` consecutive epochs; 0 disables
    double early_stop_top1 = 0.0;
    std::size_t early_stop_patience = 3;

    void validate() const {
        if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
        if (optimizer != "adamw" && optimizer != "sgd")
            throw ConfigError("train: unknown optimizer '" + optimizer + "'");
        if (precision != "double" && precision != "single")
            throw ConfigError("train: precision must be 'double' or 'single'");
        if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
            throw ConfigError("train: plateau factor outside (0, 1)");
    }
};

struct EpochRow {
    std::size_t epoch = 0;
    std::string split;  // "train" or "eval"
    double loss = 0.0;
    double top1 = 0.0;
    double lr = 0.0;
};

using MetricHistory = std::vector<EpochRow>;

std::string metrics_csv(const MetricHistory& history);
void write_metrics_csv(const MetricHistory& history, const std::string& path);

template <class S>
std::unique_ptr<Optimizer<S>> make_optimizer(const TrainConfig& cfg) {
    if (cfg.optimizer == "sgd") return std::make_unique<SgdOptimizer<S>>(cfg.sgd);
    return std::make_unique<AdamwOptimizer<S>>(cfg.adamw);
}

template <class S>
struct EvalResult {
    double loss = 0.0;
    double top1 = 0.0;
};

template <class S>
EvalResult<S> evaluate(PoolerModel<S>& model, const SyntheticDataset& ds, Rng& rng) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.n; ++i) {
        TemporalFeatures<S> f = ds.sample_features<S>(i);
        Tensor<S> z = model.logits(f, rng, /*training=*/false);
        loss += double(cross_entropy(z, ds.labels[i]).value());
        correct += argmax_label(z) == ds.labels[i];
    }
    return {loss / double(ds.n), double(correct) / double(ds.n)};
}

// Seeded, shuffled mini-batch loop. Per epoch it reports train metrics from
// the training-mode passes and eval metrics on the held-out set; the plateau
// schedule monitors the eval loss (train loss when no eval set is given).
template <class S>
MetricHistory train(PoolerModel<S>& model, const SyntheticDataset& train_ds,
                    const SyntheticDataset* eval_ds, const TrainConfig& cfg) {
    cfg.validate();
    if (train_ds.n == 0) throw ConfigError("train: dataset is empty");

    Rng root(cfg.seed);
    Rng shuffle_rng = root.child("shuffle");
    Rng forward_rng = root.child("forward");
    Rng eval_rng = root.child("eval");

    const std::vector<Tensor<S>> params = model.parameters();
    std::unique_ptr<Optimizer<S>> opt = make_optimizer<S>(cfg);
    PlateauScheduler scheduler{cfg.plateau_factor, cfg.plateau_patience, opt->lr()};
    scheduler.enabled = cfg.use_plateau;

    std::vector<std::size_t> order(train_ds.n);
    std::iota(order.begin(), order.end(), std::size_t(0));

    MetricHistory history;
    std::size_t good_epochs = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        double train_loss = 0.0;
        std::size_t train_correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tensor<S> batch_loss;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                TemporalFeatures<S> f = train_ds.sample_features<S>(i);
                Tensor<S> z = model.logits(f, forward_rng, /*training=*/true);
                train_correct += argmax_label(z) == train_ds.labels[i];
                Tensor<S> sample_loss = cross_entropy(z, train_ds.labels[i]);
                batch_loss = batch_loss.defined() ? add(batch_loss, sample_loss) : sample_loss;
            }
            batch_loss = scale(batch_loss, S(1) / S(end - start));
            train_loss += double(batch_loss.value()) * double(end - start);
            GradientMap<S> grads = backward(batch_loss);
            opt->step(params, grads);
        }
        train_loss /= double(train_ds.n);
        const double train_top1 = double(train_correct) / double(train_ds.n);
        history.push_back({epoch, "train", train_loss, train_top1, opt->lr()});

        double monitored = train_loss;
        if (eval_ds) {
            EvalResult<S> ev = evaluate(model, *eval_ds, eval_rng);
            history.push_back({epoch, "eval", ev.loss, ev.top1, opt->lr()});
            monitored = ev.loss;
        }
        opt->set_lr(scheduler.step(monitored));

        if (cfg.early_stop_top1 > 0.0) {
            good_epochs = train_top1 >= cfg.early_stop_top1 ? good_epochs + 1 : 0;
            if (good_epochs >= cfg.early_stop_patience) break;
        }
    }
    return history;
}

}  // namespace tpool
