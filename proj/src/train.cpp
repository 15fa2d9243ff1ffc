#include "mgpf/train.hpp"

#include <cmath>

namespace mgpf {

namespace {
// Cosine decay from the configured rate to 5% of it over the run.
double decayed_lr(double lr, int step, int total) {
    double f = total > 1 ? static_cast<double>(step) / (total - 1) : 0.0;
    return lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(f * 3.14159265358979)));
}
}  // namespace

std::vector<TrainExample> load_training_set(const std::string& manifest_path,
                                            const Vocabulary& vocab, ConditionKind kind,
                                            int max_count) {
    auto cases = load_manifest(manifest_path);
    std::vector<TrainExample> out;
    for (const auto& c : cases) {
        if (max_count >= 0 && static_cast<int>(out.size()) >= max_count) break;
        TrainExample ex;
        ex.x0 = image_to_feature(read_png(c.image));
        ex.cond = to_condition(read_png(c.condition), kind);
        ParsedPrompt p = parse_prompt(c.prompt, {}, vocab);
        ex.tokens = p.tokens;
        if (!c.masks.empty()) {
            std::vector<ObjectMask> ml;
            for (const auto& [name, path] : c.masks) ml.push_back({name, read_mask_png(path)});
            int s = ex.x0.h;
            ex.masks = MaskSet::build(std::move(ml), s, s, {{s, s}, {s / 2, s / 2}, {s / 4, s / 4}});
        }
        out.push_back(std::move(ex));
    }
    return out;
}

double holdout_epsilon_mse(UNet<float>& unet, ControlBranch<float>* branch,
                           const TextEmbedder<float>& emb, const std::vector<TrainExample>& data,
                           int begin, int end, const NoiseSchedule& sched, std::uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    long n = 0;
    for (int i = begin; i < end; ++i) {
        const TrainExample& ex = data[i];
        int t = rng.uniform_int(1, sched.T);
        FeatureMap<float> noise(ex.x0.channels(), ex.x0.h, ex.x0.w);
        rng.fill_normal(noise.data);
        FeatureMap<float> z = add_noise(ex.x0, t, noise, sched);
        Mat<float> e = emb.embed(ex.tokens);
        FeatureMap<float> eps;
        if (branch) {
            FusedModel<float> model(unet, *branch);
            eps = model.forward(z, e, ex.cond, t);
        } else {
            eps = unet.forward(z, e, t);
        }
        total += static_cast<double>((eps.data - noise.data).squaredNorm());
        n += eps.data.size();
    }
    return n ? total / n : 0.0;
}

TrainStats train_denoiser(UNet<float>& unet, TextEmbedder<float>& emb,
                          const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                          const TrainParams& params) {
    ParamList<float> pl;
    unet.collect(pl, "u");
    emb.collect(pl, "emb");
    Adam<float> opt(pl, params.lr);
    Rng rng(params.seed);
    int begin = std::min<int>(params.holdout, static_cast<int>(data.size()));

    TrainStats stats;
    for (int step = 0; step < params.denoiser_steps; ++step) {
        opt.set_lr(decayed_lr(params.lr, step, params.denoiser_steps));
        opt.zero_grad();
        double loss = 0.0;
        for (int b = 0; b < params.batch_size; ++b) {
            const TrainExample& ex = data[begin + rng.uniform_int(0, static_cast<int>(data.size()) - begin - 1)];
            int t = rng.uniform_int(1, sched.T);
            FeatureMap<float> noise(ex.x0.channels(), ex.x0.h, ex.x0.w);
            rng.fill_normal(noise.data);
            FeatureMap<float> z = add_noise(ex.x0, t, noise, sched);
            bool null_prompt = rng.uniform() < params.null_prob;
            std::vector<int> tokens = null_prompt ? std::vector<int>{} : ex.tokens;
            Mat<float> e = emb.embed(tokens);

            FeatureMap<float> eps = unet.forward(z, e, t);
            FeatureMap<float> diff = eps;
            diff.data -= noise.data;
            loss += static_cast<double>(diff.data.squaredNorm()) / diff.data.size();
            diff.data *= 2.0f / (diff.data.size() * params.batch_size);
            auto g = unet.backward(diff);
            emb.accumulate_grad(tokens, g.demb);
        }
        loss /= params.batch_size;
        if (!std::isfinite(loss)) throw DivergedLossError(step);
        stats.losses.push_back(loss);
        opt.step();
    }
    stats.holdout_mse = holdout_epsilon_mse(unet, nullptr, emb, data, 0, begin, sched,
                                            params.seed + 9999);
    return stats;
}

TrainStats train_control_branch(ControlBranch<float>& branch, UNet<float>& unet,
                                const TextEmbedder<float>& emb,
                                const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                                const TrainParams& params) {
    ParamList<float> branch_params, frozen;
    branch.collect(branch_params, "b");
    unet.collect(frozen, "u");
    Adam<float> opt(branch_params, params.lr);
    Rng rng(params.seed);
    int begin = std::min<int>(params.holdout, static_cast<int>(data.size()));
    FusedModel<float> model(unet, branch);

    TrainStats stats;
    for (int step = 0; step < params.control_steps; ++step) {
        opt.set_lr(decayed_lr(params.lr, step, params.control_steps));
        opt.zero_grad();
        for (auto& [n, p] : frozen) p->zero_grad();
        double loss = 0.0;
        for (int b = 0; b < params.batch_size; ++b) {
            const TrainExample& ex = data[begin + rng.uniform_int(0, static_cast<int>(data.size()) - begin - 1)];
            int t = rng.uniform_int(1, sched.T);
            FeatureMap<float> noise(ex.x0.channels(), ex.x0.h, ex.x0.w);
            rng.fill_normal(noise.data);
            FeatureMap<float> z = add_noise(ex.x0, t, noise, sched);
            Mat<float> e = emb.embed(ex.tokens);

            // Half the examples train with residuals gated by the scene's own
            // object masks, so the fused model stays usable under gating.
            bool gate = !ex.masks.masks.empty() && rng.uniform() < 0.5;
            FeatureMap<float> eps = model.forward(z, e, ex.cond, t, gate ? &ex.masks : nullptr);
            FeatureMap<float> diff = eps;
            diff.data -= noise.data;
            loss += static_cast<double>(diff.data.squaredNorm()) / diff.data.size();
            diff.data *= 2.0f / (diff.data.size() * params.batch_size);
            model.backward(diff);
        }
        loss /= params.batch_size;
        if (!std::isfinite(loss)) throw DivergedLossError(step);
        stats.losses.push_back(loss);
        opt.step();  // denoiser and embedder stay untouched
    }
    stats.holdout_mse =
        holdout_epsilon_mse(unet, &branch, emb, data, 0, begin, sched, params.seed + 9999);
    return stats;
}

}  // namespace mgpf
