#include <doctest.h>

#include "mgpf/train.hpp"

using namespace mgpf;

namespace {

UNetConfig tiny_config(int vocab) {
    UNetConfig cfg;
    cfg.image_size = 8;
    cfg.c0 = 4;
    cfg.c1 = 8;
    cfg.c2 = 8;
    cfg.d_attn = 6;
    cfg.d_tok = 5;
    cfg.temb_dim = 8;
    cfg.groups = 2;
    cfg.vocab_size = vocab;
    return cfg;
}

/// A tiny in-memory aligned dataset: one colored shape per image, the prompt
/// describes it, the condition is its silhouette.
std::vector<TrainExample> tiny_dataset(const Vocabulary& vocab, int count, unsigned seed) {
    Rng rng(seed);
    std::vector<TrainExample> out;
    for (int i = 0; i < count; ++i) {
        PlacedObject o;
        o.shape = i % 2 ? shape_index("square") : shape_index("circle");
        o.color = i % 2 ? palette_index("blue") : palette_index("red");
        o.cx = 4.0 + rng.uniform(-1.0, 1.0);
        o.cy = 4.0 + rng.uniform(-1.0, 1.0);
        o.r = 2.5;
        ImageU8 img = render_objects({o}, 8);
        TrainExample ex;
        ex.x0 = image_to_feature(img);
        ex.cond = to_condition(make_condition_image(img, ConditionKind::Silhouette),
                               ConditionKind::Silhouette);
        std::string prompt = std::string("a ") + palette()[o.color].name + " " +
                             shape_names()[o.shape];
        ex.tokens = parse_prompt(prompt, {}, vocab).tokens;
        out.push_back(std::move(ex));
    }
    return out;
}

struct TrainRig {
    Vocabulary vocab;
    UNetConfig cfg;
    UNet<float> unet;
    ControlBranch<float> branch;
    TextEmbedder<float> emb;
    NoiseSchedule sched;
    std::vector<TrainExample> data;

    explicit TrainRig(unsigned seed)
        : vocab(Vocabulary::benchmark()), sched(NoiseSchedule::linear(50)) {
        Rng rng(seed);
        cfg = tiny_config(vocab.size());
        unet = UNet<float>(cfg);
        unet.init(rng);
        branch = ControlBranch<float>(cfg, 1);
        branch.init(rng);
        emb = TextEmbedder<float>(cfg.d_tok, cfg.vocab_size);
        emb.init(rng);
        data = tiny_dataset(vocab, 20, seed + 100);
    }
};

std::vector<Mat<float>> snapshot(ParamList<float>& pl) {
    std::vector<Mat<float>> out;
    for (auto& [n, p] : pl) out.push_back(p->value);
    return out;
}

}  // namespace

TEST_CASE("one training step changes denoiser weights") {
    TrainRig rig(1);
    TrainParams tp;
    tp.denoiser_steps = 1;
    tp.batch_size = 2;
    tp.lr = 1e-3;
    tp.holdout = 4;
    tp.seed = 5;
    ParamList<float> pl;
    rig.unet.collect(pl, "u");
    auto before = snapshot(pl);
    auto stats = train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp);
    REQUIRE(stats.losses.size() == 1);
    CHECK(std::isfinite(stats.losses[0]));
    // step 1 can only move the zero-initialized output head (it blocks
    // upstream gradient flow while zero); anything nonzero counts
    int changed = 0;
    for (size_t i = 0; i < pl.size(); ++i)
        if ((pl[i].second->value - before[i]).cwiseAbs().maxCoeff() > 0) ++changed;
    CHECK(changed >= 2);

    // once the head is nonzero, gradients reach the whole network
    tp.denoiser_steps = 3;
    auto before3 = snapshot(pl);
    train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp);
    changed = 0;
    for (size_t i = 0; i < pl.size(); ++i)
        if ((pl[i].second->value - before3[i]).cwiseAbs().maxCoeff() > 0) ++changed;
    CHECK(changed > static_cast<int>(pl.size()) / 2);
}

TEST_CASE("zero-output network scores the pure-noise loss of about 1") {
    TrainRig rig(2);
    // fresh init leaves out_conv at zero, so epsilon is identically zero and
    // the loss is the mean squared unit noise
    TrainParams tp;
    tp.denoiser_steps = 1;
    tp.batch_size = 8;
    tp.lr = 0.0;
    tp.holdout = 0;
    tp.seed = 7;
    auto stats = train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp);
    CHECK(stats.losses[0] == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("training is seed-deterministic") {
    TrainRig a(3), b(3);
    TrainParams tp;
    tp.denoiser_steps = 5;
    tp.batch_size = 2;
    tp.lr = 1e-3;
    tp.holdout = 4;
    tp.seed = 11;
    auto sa = train_denoiser(a.unet, a.emb, a.data, a.sched, tp);
    auto sb = train_denoiser(b.unet, b.emb, b.data, b.sched, tp);
    REQUIRE(sa.losses.size() == sb.losses.size());
    for (size_t i = 0; i < sa.losses.size(); ++i) CHECK(sa.losses[i] == sb.losses[i]);
    CHECK(sa.holdout_mse == sb.holdout_mse);
    ParamList<float> pa, pb;
    a.unet.collect(pa, "u");
    b.unet.collect(pb, "u");
    for (size_t i = 0; i < pa.size(); ++i)
        CHECK((pa[i].second->value - pb[i].second->value).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("diverged loss is reported, not swallowed") {
    TrainRig rig(4);
    TrainParams tp;
    tp.denoiser_steps = 30;
    tp.batch_size = 2;
    tp.lr = 1e30;
    tp.holdout = 4;
    tp.seed = 13;
    CHECK_THROWS_AS(train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp), DivergedLossError);
}

TEST_CASE("toy denoiser training beats the no-skill holdout loss by half") {
    TrainRig rig(5);
    TrainParams tp;
    tp.denoiser_steps = 500;
    tp.batch_size = 4;
    tp.lr = 4e-3;
    tp.holdout = 4;
    tp.seed = 17;
    auto stats = train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp);
    CHECK(stats.holdout_mse < 0.5);  // no-skill epsilon-MSE is 1.0
    // loss trend is downward overall
    double head = 0, tail = 0;
    for (int i = 0; i < 20; ++i) {
        head += stats.losses[i];
        tail += stats.losses[stats.losses.size() - 1 - i];
    }
    CHECK(tail < head);
}

TEST_CASE("control branch training freezes the denoiser and learns from the condition") {
    TrainRig rig(6);
    TrainParams tp;
    tp.denoiser_steps = 400;
    tp.control_steps = 400;
    tp.batch_size = 4;
    tp.lr = 2e-3;
    tp.holdout = 4;
    tp.seed = 19;
    train_denoiser(rig.unet, rig.emb, rig.data, rig.sched, tp);

    // zero-init projections: fused holdout equals denoiser-only holdout exactly
    double denoiser_mse =
        holdout_epsilon_mse(rig.unet, nullptr, rig.emb, rig.data, 0, 4, rig.sched, 123);
    double fused_mse_untrained =
        holdout_epsilon_mse(rig.unet, &rig.branch, rig.emb, rig.data, 0, 4, rig.sched, 123);
    CHECK(fused_mse_untrained == denoiser_mse);

    ParamList<float> up;
    rig.unet.collect(up, "u");
    auto before = snapshot(up);
    auto stats = train_control_branch(rig.branch, rig.unet, rig.emb, rig.data, rig.sched, tp);

    // freeze contract: denoiser weights bit-identical
    for (size_t i = 0; i < up.size(); ++i)
        CHECK((up[i].second->value - before[i]).cwiseAbs().maxCoeff() == 0.0f);

    // the condition helps predict epsilon beyond the prompt alone
    CHECK(stats.holdout_mse < denoiser_mse);

    // and changing the condition changes the output measurably
    FusedModel<float> model(rig.unet, rig.branch);
    const TrainExample& ex = rig.data[0];
    Rng rng(31);
    FeatureMap<float> noise(3, 8, 8);
    rng.fill_normal(noise.data);
    FeatureMap<float> z = add_noise(ex.x0, 25, noise, rig.sched);
    Mat<float> e = rig.emb.embed(ex.tokens);
    auto eps_a = model.forward(z, e, ex.cond, 25);
    ConditionImage<float> other = ex.cond;
    other.grid.data.setZero();
    auto eps_b = model.forward(z, e, other, 25);
    double mad = (eps_a.data - eps_b.data).cwiseAbs().mean();
    CHECK(mad > 1e-3);
}
