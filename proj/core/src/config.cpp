#include "tpool/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tpool {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class V>
void read(const json& j, const char* key, V& out) {
    if (j.contains(key)) out = j.at(key).get<V>();
}

PoolerSpec parse_pooler(const json& j, const std::string& where) {
    reject_unknown(j,
                   {"kind", "num_layers", "num_heads", "pffn_hidden", "max_positions",
                    "use_cls_token", "use_positional", "renormalize_mask", "dropout_p",
                    "mask_prob", "lstm_hidden", "lstm_layers", "fc_budget"},
                   where);
    PoolerSpec p;
    read(j, "kind", p.kind);
    read(j, "num_layers", p.num_layers);
    read(j, "num_heads", p.num_heads);
    read(j, "pffn_hidden", p.pffn_hidden);
    read(j, "max_positions", p.max_positions);
    read(j, "use_cls_token", p.use_cls_token);
    read(j, "use_positional", p.use_positional);
    read(j, "renormalize_mask", p.renormalize_mask);
    read(j, "dropout_p", p.dropout_p);
    read(j, "mask_prob", p.mask_prob);
    read(j, "lstm_hidden", p.lstm_hidden);
    read(j, "lstm_layers", p.lstm_layers);
    read(j, "fc_budget", p.fc_budget);
    return p;
}

TrainConfig parse_train(const json& j) {
    reject_unknown(j,
                   {"epochs", "batch_size", "precision", "optimizer", "lr", "beta1", "beta2",
                    "eps", "weight_decay", "momentum", "plateau", "early_stop_top1",
                    "early_stop_patience"},
                   "train");
    TrainConfig t;
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "precision", t.precision);
    read(j, "optimizer", t.optimizer);
    read(j, "beta1", t.adamw.beta1);
    read(j, "beta2", t.adamw.beta2);
    read(j, "eps", t.adamw.eps);
    read(j, "weight_decay", t.adamw.weight_decay);
    read(j, "momentum", t.sgd.momentum);
    if (j.contains("lr")) {
        const double lr = j.at("lr").get<double>();
        t.adamw.lr = lr;
        t.sgd.lr = lr;
    }
    if (j.contains("plateau")) {
        const json& p = j.at("plateau");
        reject_unknown(p, {"enabled", "factor", "patience"}, "train.plateau");
        read(p, "enabled", t.use_plateau);
        read(p, "factor", t.plateau_factor);
        read(p, "patience", t.plateau_patience);
    }
    read(j, "early_stop_top1", t.early_stop_top1);
    read(j, "early_stop_patience", t.early_stop_patience);
    return t;
}

}  // namespace

void RunConfig::validate_paths() const {
    if (train_path.empty()) throw ConfigError("config: dataset.train path missing");
    if (!std::filesystem::exists(train_path))
        throw ConfigError("config: dataset '" + train_path + "' does not exist");
    if (!eval_path.empty() && !std::filesystem::exists(eval_path))
        throw ConfigError("config: dataset '" + eval_path + "' does not exist");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"seed", "out_dir", "dataset", "pooler", "train", "variants"}, "config");

    RunConfig cfg;
    read(j, "seed", cfg.seed);
    read(j, "out_dir", cfg.out_dir);
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown(d, {"train", "eval"}, "dataset");
        read(d, "train", cfg.train_path);
        read(d, "eval", cfg.eval_path);
    }
    if (j.contains("pooler")) cfg.pooler = parse_pooler(j.at("pooler"), "pooler");
    if (j.contains("train")) cfg.train = parse_train(j.at("train"));
    cfg.train.seed = cfg.seed;
    if (j.contains("variants")) {
        std::size_t idx = 0;
        for (const json& v : j.at("variants")) {
            if (v.is_string()) {
                PoolerSpec p = cfg.pooler;
                p.kind = v.get<std::string>();
                cfg.variants.push_back(p);
            } else {
                cfg.variants.push_back(parse_pooler(v, "variants[" + std::to_string(idx) + "]"));
            }
            ++idx;
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace tpool
