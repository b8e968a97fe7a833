#pragma once

#include <string>
#include <vector>

#include "tpool/models.hpp"
#include "tpool/optim.hpp"

namespace tpool {

// One JSON document drives a run: dataset paths, pooler choice, optimizer
// and schedule, seed, output directory. Unknown keys are rejected so typos
// fail loudly instead of silently using defaults.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string train_path;
    std::string eval_path;  // optional

    PoolerSpec pooler;
    TrainConfig train;

    std::vector<PoolerSpec> variants;  // ablate mode

    void validate_paths() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace tpool
