#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <atomic>
#include <thread>

#include "mgpf/checkpoint.hpp"
#include "mgpf/config.hpp"
#include "mgpf/study.hpp"
#include "mgpf/train.hpp"

using namespace mgpf;
namespace fs = std::filesystem;

namespace {

struct MissingDatasetError : std::runtime_error {
    explicit MissingDatasetError(const std::string& p)
        : std::runtime_error("MissingDataset: " + p) {}
};

/// Relative paths resolve against MGPF_HOME when it is set.
std::string resolve(const std::string& path) {
    const char* home = std::getenv("MGPF_HOME");
    if (!home || path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(home) / path).string();
}

std::string manifest_path(const RunConfig& cfg, const std::string& split) {
    return (fs::path(resolve(cfg.data.dir)) / ("manifest_" + split + ".jsonl")).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << text;
}

void snapshot_config(const RunConfig& cfg) {
    fs::create_directories(resolve(cfg.run_dir));
    cfg.save((fs::path(resolve(cfg.run_dir)) / "config.json").string());
}

nlohmann::json arch_header(const RunConfig& cfg, const Vocabulary& vocab,
                           const NoiseSchedule& sched) {
    char vh[32], sh[32];
    std::snprintf(vh, sizeof(vh), "%016llx", static_cast<unsigned long long>(vocab.hash()));
    std::snprintf(sh, sizeof(sh), "%016llx", static_cast<unsigned long long>(sched.hash()));
    return {{"image_size", cfg.model.image_size}, {"c0", cfg.model.c0},
            {"c1", cfg.model.c1},               {"c2", cfg.model.c2},
            {"d_attn", cfg.model.d_attn},       {"d_tok", cfg.model.d_tok},
            {"temb_dim", cfg.model.temb_dim},   {"groups", cfg.model.groups},
            {"vocab_hash", vh},                 {"schedule_hash", sh}};
}

struct LoadedModels {
    UNet<float> unet;
    ControlBranch<float> branch;
    TextEmbedder<float> emb;
};

void load_denoiser(const RunConfig& cfg, UNet<float>& unet, TextEmbedder<float>& emb) {
    std::string path = resolve(cfg.denoiser_ckpt);
    if (path.empty() || !fs::exists(path)) throw MissingCheckpointError(path.empty() ? "(denoiser_ckpt unset)" : path);
    Checkpoint ck = load_checkpoint(path);
    ParamList<float> pl;
    unet.collect(pl, "u");
    emb.collect(pl, "emb");
    ck.apply(pl);
}

LoadedModels load_models(const RunConfig& cfg, const Vocabulary& vocab, bool need_control) {
    UNetConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    LoadedModels m{UNet<float>(mc), ControlBranch<float>(mc, 1),
                   TextEmbedder<float>(mc.d_tok, mc.vocab_size)};
    load_denoiser(cfg, m.unet, m.emb);
    if (need_control) {
        std::string path = resolve(cfg.control_ckpt);
        if (path.empty() || !fs::exists(path))
            throw MissingCheckpointError(path.empty() ? "(control_ckpt unset)" : path);
        Checkpoint ck = load_checkpoint(path);
        ParamList<float> pl;
        m.branch.collect(pl, "b");
        ck.apply(pl);
    }
    return m;
}

std::vector<BenchmarkCase> load_eval_cases(const RunConfig& cfg) {
    std::string mp = manifest_path(cfg, "eval");
    if (!fs::exists(mp)) throw MissingDatasetError(mp);
    return load_manifest(mp);
}

int cmd_gen_data(const RunConfig& cfg) {
    Vocabulary vocab = Vocabulary::benchmark();
    std::string dir = resolve(cfg.data.dir);
    std::string train = generate_dataset(dir, "train", cfg.data.train_count, cfg.data.seed,
                                         cfg.data.image_size, cfg.data.condition_kind, vocab);
    std::string eval = generate_dataset(dir, "eval", cfg.data.eval_count, cfg.data.seed + 1,
                                        cfg.data.image_size, cfg.data.condition_kind, vocab);
    snapshot_config(cfg);
    std::cout << nlohmann::json({{"train_manifest", train}, {"eval_manifest", eval}}).dump(2)
              << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& target) {
    Vocabulary vocab = Vocabulary::benchmark();
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    std::string mp = manifest_path(cfg, "train");
    if (!fs::exists(mp)) throw MissingDatasetError(mp);
    auto data = load_training_set(mp, vocab, condition_kind_from(cfg.data.condition_kind));

    UNetConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    snapshot_config(cfg);
    fs::path run_dir = resolve(cfg.run_dir);

    if (target == "denoiser") {
        Rng rng(cfg.train.seed);
        UNet<float> unet(mc);
        unet.init(rng);
        TextEmbedder<float> emb(mc.d_tok, mc.vocab_size);
        emb.init(rng);
        TrainStats stats = train_denoiser(unet, emb, data, sched, cfg.train);
        ParamList<float> pl;
        unet.collect(pl, "u");
        emb.collect(pl, "emb");
        nlohmann::json header = arch_header(cfg, vocab, sched);
        header["kind"] = "denoiser";
        std::string out = (run_dir / "denoiser.ckpt").string();
        save_checkpoint(out, Checkpoint::from(pl, header));
        std::cout << nlohmann::json({{"checkpoint", out},
                                     {"holdout_mse", stats.holdout_mse},
                                     {"final_loss", stats.losses.back()}})
                         .dump(2)
                  << "\n";
        return 0;
    }
    if (target == "control") {
        UNetConfig bc = mc;
        UNet<float> unet(bc);
        TextEmbedder<float> emb(bc.d_tok, bc.vocab_size);
        load_denoiser(cfg, unet, emb);  // refuses without a denoiser checkpoint
        Rng rng(cfg.train.seed + 1);
        ControlBranch<float> branch(bc, 1);
        branch.init(rng);
        branch.init_from(unet);
        TrainStats stats = train_control_branch(branch, unet, emb, data, sched, cfg.train);
        ParamList<float> pl;
        branch.collect(pl, "b");
        nlohmann::json header = arch_header(cfg, vocab, sched);
        header["kind"] = "control";
        header["denoiser_hash"] = file_hash(resolve(cfg.denoiser_ckpt));
        std::string out = (run_dir / "control.ckpt").string();
        save_checkpoint(out, Checkpoint::from(pl, header));
        std::cout << nlohmann::json({{"checkpoint", out},
                                     {"holdout_mse", stats.holdout_mse},
                                     {"final_loss", stats.losses.back()}})
                         .dump(2)
                  << "\n";
        return 0;
    }
    throw ConfigInvalidError("unknown train target: " + target);
}

void sample_case(const RunConfig& cfg, const Vocabulary& vocab, LoadedModels& m,
                 const NoiseSchedule& sched, const BenchmarkCase& c, const fs::path& out_dir) {
    int s = m.unet.config().image_size;
    ConditionImage<float> cond =
        to_condition(read_png(c.condition), condition_kind_from(cfg.data.condition_kind));
    std::vector<ObjectMask> mask_list;
    std::set<std::string> mask_names;
    for (const auto& [name, path] : c.masks) {
        mask_list.push_back({name, read_mask_png(path)});
        mask_names.insert(name);
    }
    MaskSet maskset = MaskSet::build(mask_list, s, s, {{s, s}, {s / 2, s / 2}, {s / 4, s / 4}});
    ParsedPrompt prompt = parse_prompt(c.prompt, mask_names, vocab);
    GuidanceEngine<float> engine(vocab, cfg.guidance);
    auto res = mgpf_sample(prompt, m.emb.embed(prompt.tokens), m.emb.embed({}), cond, maskset,
                           sched, cfg.sample.num_steps, cfg.sample.seed, engine, m.unet, m.branch);
    fs::create_directories(out_dir);
    write_png((out_dir / "source.png").string(), feature_to_image(res.source_image));
    write_png((out_dir / "guided.png").string(), feature_to_image(res.guided_image));
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& st : res.trace)
        trace.push_back({{"t", st.t}, {"L_I", st.L_I}, {"L_M", st.L_M}, {"total", st.total}});
    write_text((out_dir / "trace.json").string(), nlohmann::json({{"id", c.id}, {"trace", trace}}).dump(2));
}

int cmd_sample(const RunConfig& cfg, int workers) {
    Vocabulary vocab = Vocabulary::benchmark();
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    auto cases = load_eval_cases(cfg);
    std::vector<BenchmarkCase> todo;
    if (!cfg.sample.case_id.empty()) {
        for (const auto& c : cases)
            if (c.id == cfg.sample.case_id) todo.push_back(c);
        if (todo.empty()) throw ConfigInvalidError("sample.case_id not in manifest: " + cfg.sample.case_id);
    } else {
        todo = cases;
    }
    snapshot_config(cfg);
    fs::path out_root = fs::path(resolve(cfg.run_dir)) / "samples";

    LoadedModels proto = load_models(cfg, vocab, true);
    workers = std::max(1, workers);
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            LoadedModels local = proto;  // forward caches are per-thread
            try {
                for (size_t i = next.fetch_add(1); i < todo.size(); i = next.fetch_add(1))
                    sample_case(cfg, vocab, local, sched, todo[i], out_root / todo[i].id);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::cout << nlohmann::json({{"sampled", todo.size()}, {"out_dir", out_root.string()}}).dump(2)
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    auto cases = load_eval_cases(cfg);
    fs::path out_root = fs::path(resolve(cfg.run_dir)) / "samples";
    auto [classifier, acc] = train_shape_classifier(7, 160);
    if (acc < 0.95) throw ClassifierUnavailableError();

    nlohmann::json per_case = nlohmann::json::array();
    double attr_sum = 0, obj_sum = 0;
    int n = 0;
    for (const auto& c : cases) {
        fs::path guided = out_root / c.id / "guided.png";
        if (!fs::exists(guided)) continue;
        ImageU8 img = read_png(guided.string());
        std::map<std::string, MaskGrid> masks;
        for (const auto& [name, path] : c.masks) masks[name] = read_mask_png(path);
        double attr = eval_attribute_match(img, c.expected_pairs, masks);
        double obj = eval_object_generation(img, c.expected_extra, masks, classifier);
        per_case.push_back({{"id", c.id}, {"attribute_match", attr}, {"object_generation", obj}});
        attr_sum += attr;
        obj_sum += obj;
        ++n;
    }
    if (n == 0) throw MissingDatasetError((out_root / "*" / "guided.png").string());
    nlohmann::json metrics = {{"cases", n},
                              {"attribute_match", attr_sum / n},
                              {"object_generation", obj_sum / n},
                              {"classifier_holdout_accuracy", acc},
                              {"per_case", per_case}};
    snapshot_config(cfg);
    std::string out = (fs::path(resolve(cfg.run_dir)) / "metrics.json").string();
    write_text(out, metrics.dump(2) + "\n");
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg) {
    Vocabulary vocab = Vocabulary::benchmark();
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    auto cases = load_eval_cases(cfg);
    if (static_cast<int>(cases.size()) > cfg.ablate.num_cases)
        cases.resize(cfg.ablate.num_cases);
    LoadedModels m = load_models(cfg, vocab, true);
    auto [classifier, acc] = train_shape_classifier(7, 160);
    if (acc < 0.95) throw ClassifierUnavailableError();

    StudyResult result = run_ablation(cases, vocab, m.unet, m.branch, m.emb, sched, classifier,
                                      cfg.guidance, cfg.ablate.num_steps, cfg.ablate.num_seeds,
                                      cfg.sample.seed);
    snapshot_config(cfg);
    fs::path run_dir = resolve(cfg.run_dir);
    write_text((run_dir / "ablation.json").string(), result.to_json().dump(2) + "\n");
    write_text((run_dir / "ablation.txt").string(), result.table());
    std::cout << result.table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mask-guided prompt following on a toy diffusion model"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string train_target = "denoiser";
    int workers = 1;
    long long seed = -1;
    double alpha = -1;
    bool no_mc = false, no_ll = false, no_ml = false;

    for (const char* name : {"gen-data", "train", "sample", "eval", "ablate"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path);
        sub->add_option("--seed", seed);
        sub->add_option("--alpha", alpha);
        sub->add_flag("--no-mc", no_mc);
        sub->add_flag("--no-ll", no_ll);
        sub->add_flag("--no-ml", no_ml);
        sub->add_option("--workers", workers);
        sub->add_option("--out", out_dir);
        if (std::string(name) == "train")
            sub->add_option("target", train_target)->check(CLI::IsMember({"denoiser", "control"}));
    }

    CLI11_PARSE(app, argc, argv);
    std::string cmd = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = config_path.empty() ? RunConfig::from_json(nlohmann::json::object())
                                            : RunConfig::load(resolve(config_path));
        if (!out_dir.empty()) cfg.run_dir = out_dir;
        if (alpha >= 0) cfg.guidance.alpha = alpha;
        if (no_mc) cfg.guidance.enable_MC = false;
        if (no_ll) cfg.guidance.enable_LL = false;
        if (no_ml) cfg.guidance.enable_ML = false;
        if (seed >= 0) {
            cfg.data.seed = static_cast<std::uint64_t>(seed);
            cfg.train.seed = static_cast<std::uint64_t>(seed);
            cfg.sample.seed = static_cast<std::uint64_t>(seed);
        }

        if (cmd == "gen-data") return cmd_gen_data(cfg);
        if (cmd == "train") return cmd_train(cfg, train_target);
        if (cmd == "sample") return cmd_sample(cfg, workers);
        if (cmd == "eval") return cmd_eval(cfg);
        if (cmd == "ablate") return cmd_ablate(cfg);
        throw ConfigInvalidError("unknown command: " + cmd);
    } catch (const std::exception& e) {
        std::string what = e.what();
        std::string kind = "Error";
        size_t colon = what.find(": ");
        if (colon != std::string::npos && colon < 32) kind = what.substr(0, colon);
        std::cerr << nlohmann::json({{"error", kind}, {"message", what}}).dump() << "\n";
        return 1;
    }
}
