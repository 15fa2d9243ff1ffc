#pragma once

#include <string>

#include "mgpf/guidance.hpp"
#include "mgpf/unet.hpp"

#include <json.hpp>

namespace mgpf {

struct ConfigInvalidError : std::runtime_error {
    explicit ConfigInvalidError(const std::string& m) : std::runtime_error("ConfigInvalid: " + m) {}
};

struct DataConfig {
    std::string dir = "data";
    int image_size = 64;
    int train_count = 2000;
    int eval_count = 200;
    std::uint64_t seed = 1;
    std::string condition_kind = "silhouette";
};

struct ScheduleParams {
    int T = 400;
    double beta_start = 1e-4;
    double beta_end = 0.025;
};

struct TrainParams {
    int denoiser_steps = 15000;
    int control_steps = 4000;
    int batch_size = 8;
    double lr = 2e-3;
    double null_prob = 0.1;
    std::uint64_t seed = 1;
    int holdout = 32;
};

struct SampleParams {
    int num_steps = 50;
    std::uint64_t seed = 1;
    std::string case_id;
};

struct AblateParams {
    int num_cases = 50;
    int num_seeds = 3;
    int num_steps = 50;
};

struct RunConfig {
    std::string run_dir = "runs/default";
    std::string denoiser_ckpt;
    std::string control_ckpt;
    DataConfig data;
    ScheduleParams schedule;
    UNetConfig model;  // vocab_size filled from the vocabulary at load time
    TrainParams train;
    GuidanceConfig guidance;
    SampleParams sample;
    AblateParams ablate;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    nlohmann::json to_json() const;
    void save(const std::string& path) const;
};

}  // namespace mgpf
