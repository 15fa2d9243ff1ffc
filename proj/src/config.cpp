#include "mgpf/config.hpp"

#include <fstream>

namespace mgpf {

namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw ConfigInvalidError("unknown key: " + (section.empty() ? key : section + "." + key));
}

template <typename T>
void get(const json& v, const std::string& section, const std::string& key, T& out) {
    try {
        out = v.get<T>();
    } catch (const json::exception&) {
        throw ConfigInvalidError("bad value for " + section + "." + key);
    }
}

void parse_data(const json& j, DataConfig& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "dir") get(v, "data", k, c.dir);
        else if (k == "image_size") get(v, "data", k, c.image_size);
        else if (k == "train_count") get(v, "data", k, c.train_count);
        else if (k == "eval_count") get(v, "data", k, c.eval_count);
        else if (k == "seed") get(v, "data", k, c.seed);
        else if (k == "condition_kind") get(v, "data", k, c.condition_kind);
        else unknown_key("data", k);
    }
    if (c.condition_kind != "edge" && c.condition_kind != "silhouette")
        throw ConfigInvalidError("data.condition_kind must be edge or silhouette");
}

void parse_schedule(const json& j, ScheduleParams& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "T") get(v, "schedule", k, c.T);
        else if (k == "beta_start") get(v, "schedule", k, c.beta_start);
        else if (k == "beta_end") get(v, "schedule", k, c.beta_end);
        else unknown_key("schedule", k);
    }
}

void parse_model(const json& j, UNetConfig& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "image_size") get(v, "model", k, c.image_size);
        else if (k == "c0") get(v, "model", k, c.c0);
        else if (k == "c1") get(v, "model", k, c.c1);
        else if (k == "c2") get(v, "model", k, c.c2);
        else if (k == "d_attn") get(v, "model", k, c.d_attn);
        else if (k == "d_tok") get(v, "model", k, c.d_tok);
        else if (k == "temb_dim") get(v, "model", k, c.temb_dim);
        else if (k == "groups") get(v, "model", k, c.groups);
        else unknown_key("model", k);
    }
}

void parse_train(const json& j, TrainParams& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "denoiser_steps") get(v, "train", k, c.denoiser_steps);
        else if (k == "control_steps") get(v, "train", k, c.control_steps);
        else if (k == "batch_size") get(v, "train", k, c.batch_size);
        else if (k == "lr") get(v, "train", k, c.lr);
        else if (k == "null_prob") get(v, "train", k, c.null_prob);
        else if (k == "seed") get(v, "train", k, c.seed);
        else if (k == "holdout") get(v, "train", k, c.holdout);
        else unknown_key("train", k);
    }
}

void parse_guidance(const json& j, GuidanceConfig& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "alpha") get(v, "guidance", k, c.alpha);
        else if (k == "lambda_I") get(v, "guidance", k, c.lambda_I);
        else if (k == "lambda_M") get(v, "guidance", k, c.lambda_M);
        else if (k == "guided_window") get(v, "guidance", k, c.guided_window);
        else if (k == "inner_iters") get(v, "guidance", k, c.inner_iters);
        else if (k == "cfg_scale") get(v, "guidance", k, c.cfg_scale);
        else if (k == "enable_MC") get(v, "guidance", k, c.enable_MC);
        else if (k == "enable_LL") get(v, "guidance", k, c.enable_LL);
        else if (k == "enable_ML") get(v, "guidance", k, c.enable_ML);
        else if (k == "repulsion_include_free") get(v, "guidance", k, c.repulsion_include_free);
        else if (k == "use_source_control_maps") get(v, "guidance", k, c.use_source_control_maps);
        else if (k == "alpha_auto_scale") get(v, "guidance", k, c.alpha_auto_scale);
        else if (k == "init_mean") get(v, "guidance", k, c.init_mean);
        else unknown_key("guidance", k);
    }
}

void parse_sample(const json& j, SampleParams& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "num_steps") get(v, "sample", k, c.num_steps);
        else if (k == "seed") get(v, "sample", k, c.seed);
        else if (k == "case_id") get(v, "sample", k, c.case_id);
        else unknown_key("sample", k);
    }
}

void parse_ablate(const json& j, AblateParams& c) {
    for (auto& [k, v] : j.items()) {
        if (k == "num_cases") get(v, "ablate", k, c.num_cases);
        else if (k == "num_seeds") get(v, "ablate", k, c.num_seeds);
        else if (k == "num_steps") get(v, "ablate", k, c.num_steps);
        else unknown_key("ablate", k);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    if (!j.is_object()) throw ConfigInvalidError("config root must be an object");
    for (auto& [k, v] : j.items()) {
        if (k == "run_dir") get(v, "", k, c.run_dir);
        else if (k == "denoiser_ckpt") get(v, "", k, c.denoiser_ckpt);
        else if (k == "control_ckpt") get(v, "", k, c.control_ckpt);
        else if (k == "data") parse_data(v, c.data);
        else if (k == "schedule") parse_schedule(v, c.schedule);
        else if (k == "model") parse_model(v, c.model);
        else if (k == "train") parse_train(v, c.train);
        else if (k == "guidance") parse_guidance(v, c.guidance);
        else if (k == "sample") parse_sample(v, c.sample);
        else if (k == "ablate") parse_ablate(v, c.ablate);
        else unknown_key("", k);
    }
    c.model.image_size = c.data.image_size;
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigInvalidError("cannot open config " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigInvalidError(std::string("parse error: ") + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["run_dir"] = run_dir;
    j["denoiser_ckpt"] = denoiser_ckpt;
    j["control_ckpt"] = control_ckpt;
    j["data"] = {{"dir", data.dir},
                 {"image_size", data.image_size},
                 {"train_count", data.train_count},
                 {"eval_count", data.eval_count},
                 {"seed", data.seed},
                 {"condition_kind", data.condition_kind}};
    j["schedule"] = {{"T", schedule.T}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}};
    j["model"] = {{"image_size", model.image_size}, {"c0", model.c0},           {"c1", model.c1},
                  {"c2", model.c2},                 {"d_attn", model.d_attn},   {"d_tok", model.d_tok},
                  {"temb_dim", model.temb_dim},     {"groups", model.groups}};
    j["train"] = {{"denoiser_steps", train.denoiser_steps},
                  {"control_steps", train.control_steps},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"null_prob", train.null_prob},
                  {"seed", train.seed},
                  {"holdout", train.holdout}};
    j["guidance"] = {{"alpha", guidance.alpha},
                     {"lambda_I", guidance.lambda_I},
                     {"lambda_M", guidance.lambda_M},
                     {"guided_window", guidance.guided_window},
                     {"inner_iters", guidance.inner_iters},
                     {"cfg_scale", guidance.cfg_scale},
                     {"enable_MC", guidance.enable_MC},
                     {"enable_LL", guidance.enable_LL},
                     {"enable_ML", guidance.enable_ML},
                     {"repulsion_include_free", guidance.repulsion_include_free},
                     {"use_source_control_maps", guidance.use_source_control_maps},
                     {"alpha_auto_scale", guidance.alpha_auto_scale},
                     {"init_mean", guidance.init_mean}};
    j["sample"] = {{"num_steps", sample.num_steps}, {"seed", sample.seed}, {"case_id", sample.case_id}};
    j["ablate"] = {{"num_cases", ablate.num_cases},
                   {"num_seeds", ablate.num_seeds},
                   {"num_steps", ablate.num_steps}};
    return j;
}

void RunConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigInvalidError("cannot write config " + path);
    os << to_json().dump(2) << "\n";
}

}  // namespace mgpf
