// tpool: generate synthetic sequence datasets, train and ablate temporal
// pooling heads, check gradients, and profile parameters/FLOPs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tpool/backbone.hpp"
#include "tpool/config.hpp"
#include "tpool/dataset.hpp"
#include "tpool/models.hpp"
#include "tpool/optim.hpp"
#include "tpool/profiler.hpp"
#include "tpool/validation.hpp"

namespace fs = std::filesystem;
using namespace tpool;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct GenArgs {
    std::string task = "order";
    std::size_t n = 1000, t = 8, d = 16;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen(const GenArgs& args) {
    SyntheticDataset ds;
    if (args.task == "order")
        ds = gen_order_task(args.n, args.t, args.d, args.seed);
    else if (args.task == "bag")
        ds = gen_bag_task(args.n, args.t, args.d, args.seed);
    else
        throw ConfigError("gen: task must be 'order' or 'bag', got '" + args.task + "'");
    write_dataset(ds, args.out);
    std::printf("wrote %s: task=%s n=%u t=%u d=%u classes=%u balance=%.4f\n", args.out.c_str(),
                task_name(ds.task), ds.n, ds.T, ds.D, ds.n_classes, ds.class_balance());
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct LoadedData {
    SyntheticDataset train;
    SyntheticDataset eval;
    bool has_eval = false;
};

LoadedData load_data(const RunConfig& cfg) {
    cfg.validate_paths();
    LoadedData data;
    data.train = read_dataset(cfg.train_path);
    if (!cfg.eval_path.empty()) {
        data.eval = read_dataset(cfg.eval_path);
        data.has_eval = true;
        if (data.eval.T != data.train.T || data.eval.D != data.train.D)
            throw ConfigError("train/eval geometry mismatch");
    }
    return data;
}

std::string variant_name(const PoolerSpec& spec) {
    if (spec.kind != "bert") return spec.kind;
    std::string name = "bert_L" + std::to_string(spec.num_layers) + "_H" +
                       std::to_string(spec.num_heads);
    name += spec.use_cls_token ? "_cls" : "_nocls";
    return name;
}

struct RunResult {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    double top1 = 0.0;
    MetricHistory history;
};

template <class S>
RunResult run_one(const PoolerSpec& spec, const LoadedData& data, const TrainConfig& train_cfg,
                  std::uint64_t model_seed) {
    const SyntheticDataset& tr = data.train;
    Rng init(model_seed);
    Rng model_rng = init.child("init");
    auto model = make_pooler<S>(spec, tr.T, tr.D, tr.n_classes, model_rng);

    RunResult result;
    result.name = variant_name(spec);
    result.params = count_params(*model).total;
    result.flops = count_flops(*model, {tr.T, tr.D}).total;
    result.history = train(*model, tr, data.has_eval ? &data.eval : nullptr, train_cfg);

    for (auto it = result.history.rbegin(); it != result.history.rend(); ++it) {
        if (it->split == (data.has_eval ? "eval" : "train")) {
            result.top1 = it->top1;
            break;
        }
    }
    return result;
}

RunResult run_variant(const RunConfig& cfg, const PoolerSpec& spec, const LoadedData& data,
                      std::uint64_t model_seed) {
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = model_seed;
    if (cfg.train.precision == "single")
        return run_one<float>(spec, data, train_cfg, model_seed);
    return run_one<double>(spec, data, train_cfg, model_seed);
}

int cmd_train(const RunConfig& cfg) {
    LoadedData data = load_data(cfg);
    fs::create_directories(cfg.out_dir);
    RunResult result = run_variant(cfg, cfg.pooler, data, cfg.seed);
    write_metrics_csv(result.history, cfg.out_dir + "/metrics.csv");
    std::printf("pooler=%s params=%llu final_top1=%.4f epochs_run=%zu\n", result.name.c_str(),
                static_cast<unsigned long long>(result.params), result.top1,
                result.history.empty() ? std::size_t(0) : result.history.back().epoch);
    std::printf("metrics: %s/metrics.csv\n", cfg.out_dir.c_str());
    return kExitOk;
}

int cmd_ablate(const RunConfig& cfg) {
    if (cfg.variants.empty())
        throw ConfigError("ablate: config lists no variants");
    LoadedData data = load_data(cfg);
    fs::create_directories(cfg.out_dir);

    std::vector<RunResult> rows;
    bool any_failed = false;
    Rng root(cfg.seed);
    for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
        const PoolerSpec& spec = cfg.variants[i];
        const std::uint64_t seed =
            root.child("variant" + std::to_string(i) + ":" + variant_name(spec)).seed();
        try {
            rows.push_back(run_variant(cfg, spec, data, seed));
            const RunResult& r = rows.back();
            std::printf("done %-22s params=%-10llu top1=%.4f\n", r.name.c_str(),
                        static_cast<unsigned long long>(r.params), r.top1);
        } catch (const std::exception& e) {
            any_failed = true;
            std::fprintf(stderr, "variant %s failed: %s\n", variant_name(spec).c_str(),
                         e.what());
        }
    }

    std::string csv = "pooler,params,flops,top1\n";
    for (const RunResult& r : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s,%llu,%llu,%.10g\n", r.name.c_str(),
                      static_cast<unsigned long long>(r.params),
                      static_cast<unsigned long long>(r.flops), r.top1);
        csv += line;
    }
    {
        std::ofstream out(cfg.out_dir + "/ablation.csv", std::ios::trunc);
        if (!out) throw IoError("cannot write " + cfg.out_dir + "/ablation.csv");
        out << csv;
    }

    std::size_t name_w = 6;
    for (const RunResult& r : rows) name_w = std::max(name_w, r.name.size());
    std::printf("%-*s  %12s  %14s  %8s\n", int(name_w), "pooler", "params", "flops", "top1");
    for (const RunResult& r : rows)
        std::printf("%-*s  %12llu  %14llu  %8.4f\n", int(name_w), r.name.c_str(),
                    static_cast<unsigned long long>(r.params),
                    static_cast<unsigned long long>(r.flops), r.top1);
    std::printf("table: %s/ablation.csv\n", cfg.out_dir.c_str());
    return any_failed ? kExitRuntime : kExitOk;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
    std::vector<GradCheckResult> results;
    if (scope == "ops")
        results = gradcheck_ops(seed);
    else if (scope == "heads")
        results = gradcheck_heads(seed);
    else if (scope == "end2end")
        results = gradcheck_end2end(seed);
    else
        throw ConfigError("gradcheck: scope must be ops, heads or end2end");
    std::fputs(gradcheck_report(results).c_str(), stdout);
    return all_pass(results) ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------

void print_profile(const std::string& title, const ParamReport& params,
                   const FlopReport& flops) {
    std::printf("== %s ==\n%s\n", title.c_str(), profile_text(params, flops).c_str());
}

int cmd_profile(const std::string& config_path) {
    Rng rng(0);

    {  // single encoder layer at feature dim 512, the reduced-backbone case
        BertPoolerConfig cfg;
        cfg.d_model = 512;
        cfg.num_heads = 8;
        cfg.num_layers = 1;
        cfg.max_positions = 8;
        Rng r = rng.child("bert-512");
        BertModel<double> model(cfg, 51, r);
        print_profile("preset bert-512 (T=4)", count_params(model),
                      count_flops(model, {4, 512}));
    }
    {  // same layer at the unreduced 2048-wide feature dim
        BertPoolerConfig cfg;
        cfg.d_model = 2048;
        cfg.num_heads = 8;
        cfg.num_layers = 1;
        cfg.max_positions = 8;
        Rng r = rng.child("bert-2048");
        BertModel<double> model(cfg, 51, r);
        print_profile("preset bert-2048 (T=4)", count_params(model),
                      count_flops(model, {4, 2048}));
    }
    {  // two-stack hidden-450 recurrent baseline
        Rng r = rng.child("lstm-450");
        LstmModel<double> model(512, 450, 2, 51, r);
        print_profile("preset lstm-450 (T=8)", count_params(model),
                      count_flops(model, {8, 512}));
    }
    {  // concat + fc sized to the 512-wide encoder budget
        Rng r = rng.child("concat-fc");
        ConcatFcModel<double> model(8, 512, 51, 3152384, r);
        std::printf("== preset concat-fc-512 (budget 3152384 -> width %zu) ==\n",
                    model.fc_width());
        std::printf("%s\n",
                    profile_text(count_params(model), count_flops(model, {8, 512})).c_str());
    }

    // toy backbone at clip geometry 3x16x112x112: original vs reductions
    const ClipGeometry clip{3, 16, 112, 112};
    const ToyBackboneConfig bb_cfg = ToyBackboneConfig::preset(clip, 128);
    const UnitBlockSpec frmb{ReductionMode::kFRMB, 128, 32};
    const UnitBlockSpec frab{ReductionMode::kFRAB, 128, 32};
    std::uint64_t backbone_flops = 0;
    for (const auto& [name, spec] :
         std::vector<std::pair<std::string, UnitBlockSpec>>{
             {"original", {ReductionMode::kOriginal, 128, 128}},
             {"frmb", frmb},
             {"frab", frab}}) {
        Rng r = rng.child("backbone-" + name);
        auto backbone = ToyBackbone<double>::make_reduced(bb_cfg, spec, r);
        FlopReport flops = count_flops(backbone);
        if (name == "original") backbone_flops = flops.total;
        print_profile("preset backbone-" + name, count_params(backbone), flops);
    }

    {  // head cost relative to the backbone at the preset geometry
        BertPoolerConfig cfg;
        cfg.d_model = 128;
        cfg.num_heads = 8;
        cfg.num_layers = 1;
        cfg.max_positions = 4;
        Rng r = rng.child("bert-head-128");
        BertModel<double> model(cfg, 51, r);
        FlopReport head = count_flops(model, {4, 128});
        const std::uint64_t head_flops = head.total_matching("encoder") +
                                         head.total_matching("embed");
        std::printf("bert head vs backbone-original flops: %llu / %llu = %.4f%%\n\n",
                    static_cast<unsigned long long>(head_flops),
                    static_cast<unsigned long long>(backbone_flops),
                    100.0 * double(head_flops) / double(backbone_flops));
    }

    if (!config_path.empty()) {
        RunConfig cfg = load_run_config(config_path);
        cfg.validate_paths();
        SyntheticDataset header = read_dataset(cfg.train_path);
        Rng r = Rng(cfg.seed).child("init");
        auto model = make_pooler<double>(cfg.pooler, header.T, header.D, header.n_classes, r);
        ParamReport params = count_params(*model);
        FlopReport flops = count_flops(*model, {header.T, header.D});
        print_profile("configured pooler " + variant_name(cfg.pooler), params, flops);
        std::fputs(profile_csv(params, flops).c_str(), stdout);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal pooling heads over 3D-CNN features: generate, train, profile"};
    app.require_subcommand(1);

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic TPF1 dataset");
    gen->add_option("--task", gen_args.task, "order | bag");
    gen->add_option("--n", gen_args.n, "number of samples")->required();
    gen->add_option("--t", gen_args.t, "temporal length")->required();
    gen->add_option("--d", gen_args.d, "feature dimension")->required();
    gen->add_option("--seed", gen_args.seed, "generation seed");
    gen->add_option("--out", gen_args.out, "output path")->required();

    std::string config_path, out_dir_override;
    std::uint64_t seed_override = 0;
    bool seed_given = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train one pooler from a JSON config");
    train_cmd->add_option("--config", config_path, "JSON run config")->required();
    train_cmd->add_option("--seed", seed_override, "override config seed")
        ->each([&](const std::string&) { seed_given = true; });
    train_cmd->add_option("--out-dir", out_dir_override, "override output directory");

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "train every configured variant, emit comparison table");
    ablate_cmd->add_option("--config", config_path, "JSON run config")->required();
    ablate_cmd->add_option("--seed", seed_override, "override config seed")
        ->each([&](const std::string&) { seed_given = true; });
    ablate_cmd->add_option("--out-dir", out_dir_override, "override output directory");

    std::string scope = "ops";
    std::uint64_t gc_seed = 1;
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference gradient validation");
    gradcheck_cmd->add_option("--scope", scope, "ops | heads | end2end");
    gradcheck_cmd->add_option("--seed", gc_seed, "seed base");

    std::string profile_config;
    CLI::App* profile_cmd =
        app.add_subcommand("profile", "parameter and FLOP reports for the presets");
    profile_cmd->add_option("--config", profile_config, "also profile this run config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "tpool: argument error: %s\n", e.what());
        return kExitValidation;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_args);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(scope, gc_seed);
        if (profile_cmd->parsed()) return cmd_profile(profile_config);

        RunConfig cfg = load_run_config(config_path);
        if (seed_given) {
            cfg.seed = seed_override;
            cfg.train.seed = seed_override;
        }
        if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
        if (train_cmd->parsed()) return cmd_train(cfg);
        return cmd_ablate(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "tpool: %s\n", e.what());
        return kExitValidation;
    } catch (const DataFormatError& e) {
        std::fprintf(stderr, "tpool: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tpool: %s\n", e.what());
        return kExitRuntime;
    }
}
