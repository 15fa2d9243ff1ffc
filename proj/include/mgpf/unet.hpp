#pragma once

#include <string>
#include <vector>

#include "mgpf/attention.hpp"
#include "mgpf/nn.hpp"
#include "mgpf/types.hpp"

namespace mgpf {

struct UnknownTokenError : std::runtime_error {
    explicit UnknownTokenError(int id) : std::runtime_error("UnknownToken: id " + std::to_string(id)) {}
};

struct UNetConfig {
    int image_size = 64;
    int in_ch = 3;
    int out_ch = 3;
    int c0 = 12, c1 = 24, c2 = 36;  // channels at full / half / quarter resolution
    int d_attn = 64;
    int d_tok = 64;
    int temb_dim = 64;
    int groups = 4;
    int vocab_size = 0;

    bool operator==(const UNetConfig&) const = default;
};

/// Per-block control residuals, ordered: skip@full, skip@half, skip@quarter,
/// middle@quarter.
template <typename S>
struct ControlResiduals {
    std::vector<FeatureMap<S>> blocks;
};

// ---------------------------------------------------------------------------
// Token embedding lookup table; the extra last column is the learned
// null-prompt embedding.
// ---------------------------------------------------------------------------
template <typename S>
class TextEmbedder {
public:
    TextEmbedder() = default;
    TextEmbedder(int d_tok, int vocab_size) : vocab_(vocab_size) { table.resize(d_tok, vocab_size + 1); }

    void init(Rng& rng) { rng.fill_normal(table.value, 1.0); }

    int null_id() const { return vocab_; }

    /// Empty token list embeds the null prompt (L = 1).
    Mat<S> embed(const std::vector<int>& tokens) const {
        if (tokens.empty()) return table.value.col(vocab_);
        Mat<S> e(table.value.rows(), tokens.size());
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] < 0 || tokens[i] > vocab_) throw UnknownTokenError(tokens[i]);
            e.col(i) = table.value.col(tokens[i]);
        }
        return e;
    }

    void accumulate_grad(const std::vector<int>& tokens, const Mat<S>& demb) {
        if (demb.size() == 0) return;
        if (tokens.empty()) {
            table.grad.col(vocab_) += demb.col(0);
            return;
        }
        for (size_t i = 0; i < tokens.size(); ++i) table.grad.col(tokens[i]) += demb.col(i);
    }

    void collect(ParamList<S>& out, const std::string& prefix) { out.emplace_back(prefix + ".table", &table); }

    Param<S> table;

private:
    int vocab_ = 0;
};

// ---------------------------------------------------------------------------
// ResBlock: x + conv3(silu(gn(x))) with a per-channel timestep bias.
// ---------------------------------------------------------------------------
template <typename S>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(int c, int groups, int temb_dim) : gn_(c, groups), conv_(c, c, 3), tproj_(temb_dim, c) {}

    void init(Rng& rng) {
        conv_.init(rng);
        tproj_.init(rng);
    }

    FeatureMap<S> forward(const FeatureMap<S>& x, const Mat<S>& temb) {
        FeatureMap<S> h = conv_.forward(act_.forward(gn_.forward(x)));
        h.data.colwise() += tproj_.forward(temb).col(0);
        FeatureMap<S> y = x;
        y.data += h.data;
        return y;
    }

    FeatureMap<S> backward(const FeatureMap<S>& dy, Mat<S>& dtemb) {
        Mat<S> dbias = dy.data.rowwise().sum();
        Mat<S> dt = tproj_.backward(dbias);
        if (dtemb.size() == 0) dtemb = Mat<S>::Zero(dt.rows(), 1);
        dtemb += dt;
        FeatureMap<S> dx = gn_.backward(act_.backward(conv_.backward(dy)));
        dx.data += dy.data;
        return dx;
    }

    void collect(ParamList<S>& out, const std::string& p) {
        gn_.collect(out, p + ".gn");
        conv_.collect(out, p + ".conv");
        tproj_.collect(out, p + ".tproj");
    }

private:
    GroupNorm<S> gn_;
    SiLU<S> act_;
    Conv2d<S> conv_;
    Linear<S> tproj_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor x2 upsample followed by a 3x3 conv.
// ---------------------------------------------------------------------------
template <typename S>
class Upsample {
public:
    Upsample() = default;
    Upsample(int c_in, int c_out) : conv_(c_in, c_out, 3) {}
    void init(Rng& rng) { conv_.init(rng); }

    FeatureMap<S> forward(const FeatureMap<S>& x) {
        FeatureMap<S> u(x.channels(), x.h * 2, x.w * 2);
        for (int y = 0; y < u.h; ++y)
            for (int xx = 0; xx < u.w; ++xx) u.data.col(y * u.w + xx) = x.data.col((y / 2) * x.w + (xx / 2));
        return conv_.forward(u);
    }

    FeatureMap<S> backward(const FeatureMap<S>& dy) {
        FeatureMap<S> du = conv_.backward(dy);
        FeatureMap<S> dx(du.channels(), du.h / 2, du.w / 2);
        for (int y = 0; y < du.h; ++y)
            for (int xx = 0; xx < du.w; ++xx) dx.data.col((y / 2) * dx.w + (xx / 2)) += du.data.col(y * du.w + xx);
        return dx;
    }

    void collect(ParamList<S>& out, const std::string& p) { conv_.collect(out, p + ".conv"); }

private:
    Conv2d<S> conv_;
};

template <typename S>
FeatureMap<S> concat_channels(const FeatureMap<S>& a, const FeatureMap<S>& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeMismatchError("concat_channels");
    FeatureMap<S> c(a.channels() + b.channels(), a.h, a.w);
    c.data.topRows(a.channels()) = a.data;
    c.data.bottomRows(b.channels()) = b.data;
    return c;
}

// ---------------------------------------------------------------------------
// The noise predictor: encoder / middle / decoder over 3 resolutions, one
// cross-attention layer per resolution on each side plus the middle block.
// Control residuals (already mask-gated by the caller) are added to the three
// skip connections and the middle output.
// ---------------------------------------------------------------------------
template <typename S>
class UNet {
public:
    struct Grads {
        FeatureMap<S> dz;
        std::vector<FeatureMap<S>> dresiduals;  // present iff forward had residuals
        Mat<S> demb;
    };

    static constexpr int kNumAttnLayers = 7;
    static constexpr int kNumInjections = 4;

    UNet() = default;
    explicit UNet(const UNetConfig& cfg) : cfg_(cfg) {
        stem_ = Conv2d<S>(cfg.in_ch, cfg.c0, 3);
        enc1_res_ = ResBlock<S>(cfg.c0, cfg.groups, cfg.temb_dim);
        enc1_attn_ = CrossAttention<S>(cfg.c0, cfg.d_attn, cfg.d_tok);
        down1_ = Conv2d<S>(cfg.c0, cfg.c1, 3, 2);
        enc2_res_ = ResBlock<S>(cfg.c1, cfg.groups, cfg.temb_dim);
        enc2_attn_ = CrossAttention<S>(cfg.c1, cfg.d_attn, cfg.d_tok);
        down2_ = Conv2d<S>(cfg.c1, cfg.c2, 3, 2);
        enc3_res_ = ResBlock<S>(cfg.c2, cfg.groups, cfg.temb_dim);
        enc3_attn_ = CrossAttention<S>(cfg.c2, cfg.d_attn, cfg.d_tok);
        mid_res_ = ResBlock<S>(cfg.c2, cfg.groups, cfg.temb_dim);
        mid_attn_ = CrossAttention<S>(cfg.c2, cfg.d_attn, cfg.d_tok);
        fuse3_ = Conv2d<S>(2 * cfg.c2, cfg.c2, 1);
        dec3_res_ = ResBlock<S>(cfg.c2, cfg.groups, cfg.temb_dim);
        dec3_attn_ = CrossAttention<S>(cfg.c2, cfg.d_attn, cfg.d_tok);
        up3_ = Upsample<S>(cfg.c2, cfg.c1);
        fuse2_ = Conv2d<S>(2 * cfg.c1, cfg.c1, 1);
        dec2_res_ = ResBlock<S>(cfg.c1, cfg.groups, cfg.temb_dim);
        dec2_attn_ = CrossAttention<S>(cfg.c1, cfg.d_attn, cfg.d_tok);
        up2_ = Upsample<S>(cfg.c1, cfg.c0);
        fuse1_ = Conv2d<S>(2 * cfg.c0, cfg.c0, 1);
        dec1_res_ = ResBlock<S>(cfg.c0, cfg.groups, cfg.temb_dim);
        dec1_attn_ = CrossAttention<S>(cfg.c0, cfg.d_attn, cfg.d_tok);
        out_gn_ = GroupNorm<S>(cfg.c0, cfg.groups);
        out_conv_ = Conv2d<S>(cfg.c0, cfg.out_ch, 3);
        tmlp1_ = Linear<S>(cfg.temb_dim, cfg.temb_dim);
        tmlp2_ = Linear<S>(cfg.temb_dim, cfg.temb_dim);
    }

    const UNetConfig& config() const { return cfg_; }

    void init(Rng& rng) {
        stem_.init(rng);
        for (ResBlock<S>* r : resblocks()) r->init(rng);
        for (CrossAttention<S>* a : attns()) a->init(rng);
        down1_.init(rng);
        down2_.init(rng);
        fuse3_.init(rng);
        fuse2_.init(rng);
        fuse1_.init(rng);
        up3_.init(rng);
        up2_.init(rng);
        out_conv_.init_zero();  // epsilon starts at zero
        tmlp1_.init(rng);
        tmlp2_.init(rng);
    }

    /// Injection point resolutions in residual order.
    std::vector<std::pair<int, int>> injection_resolutions() const {
        int r = cfg_.image_size;
        return {{r, r}, {r / 2, r / 2}, {r / 4, r / 4}, {r / 4, r / 4}};
    }
    std::vector<int> injection_channels() const { return {cfg_.c0, cfg_.c1, cfg_.c2, cfg_.c2}; }

    FeatureMap<S> forward(const FeatureMap<S>& z, const Mat<S>& emb, int t,
                          AttentionRecord<S>* rec = nullptr,
                          const ControlResiduals<S>* residuals = nullptr) {
        if (rec) {
            rec->source = AttnSource::Denoiser;
            rec->layers.clear();
        }
        Mat<S> temb = time_embed(t);
        had_residuals_ = (residuals != nullptr);

        FeatureMap<S> x0 = stem_.forward(z);
        FeatureMap<S> e1 = enc1_attn_.forward(enc1_res_.forward(x0, temb), emb, rec, "enc1");
        FeatureMap<S> d1 = down1_.forward(e1);
        FeatureMap<S> e2 = enc2_attn_.forward(enc2_res_.forward(d1, temb), emb, rec, "enc2");
        FeatureMap<S> d2 = down2_.forward(e2);
        FeatureMap<S> e3 = enc3_attn_.forward(enc3_res_.forward(d2, temb), emb, rec, "enc3");
        FeatureMap<S> m = mid_attn_.forward(mid_res_.forward(e3, temb), emb, rec, "mid");

        FeatureMap<S> s1p = e1, s2p = e2, s3p = e3, mp = m;
        if (residuals) {
            if (residuals->blocks.size() != kNumInjections)
                throw ShapeMismatchError("expected " + std::to_string(kNumInjections) + " control residual blocks");
            add_residual(s1p, residuals->blocks[0], 0);
            add_residual(s2p, residuals->blocks[1], 1);
            add_residual(s3p, residuals->blocks[2], 2);
            add_residual(mp, residuals->blocks[3], 3);
        }

        FeatureMap<S> t3 = dec3_attn_.forward(
            dec3_res_.forward(fuse3_.forward(concat_channels(mp, s3p)), temb), emb, rec, "dec3");
        FeatureMap<S> t2 = dec2_attn_.forward(
            dec2_res_.forward(fuse2_.forward(concat_channels(up3_.forward(t3), s2p)), temb), emb, rec,
            "dec2");
        FeatureMap<S> t1 = dec1_attn_.forward(
            dec1_res_.forward(fuse1_.forward(concat_channels(up2_.forward(t2), s1p)), temb), emb, rec,
            "dec1");
        FeatureMap<S> eps = out_conv_.forward(out_act_.forward(out_gn_.forward(t1)));
        if (!eps.data.allFinite()) throw NonFiniteError("NonFiniteActivation at unet output");
        return eps;
    }

    /// Backward through the last forward. `attn_seeds`, when given, carries
    /// extra gradients on the raw attention maps in recording order
    /// (enc1, enc2, enc3, mid, dec3, dec2, dec1); empty matrices are skipped.
    Grads backward(const FeatureMap<S>& deps, const std::vector<Mat<S>>* attn_seeds = nullptr) {
        auto seed = [&](int i) -> const Mat<S>* {
            if (!attn_seeds || i >= static_cast<int>(attn_seeds->size())) return nullptr;
            return (*attn_seeds)[i].size() ? &(*attn_seeds)[i] : nullptr;
        };
        Grads g;
        Mat<S> dtemb;

        FeatureMap<S> dt1 = out_gn_.backward(out_act_.backward(out_conv_.backward(deps)));
        FeatureMap<S> dc1 = dec1_res_.backward(dec1_attn_.backward(dt1, seed(6), g.demb), dtemb);
        auto [du2, ds1p] = split_backward(fuse1_.backward(dc1), cfg_.c0);
        FeatureMap<S> dt2 = up2_.backward(du2);
        FeatureMap<S> dc2 = dec2_res_.backward(dec2_attn_.backward(dt2, seed(5), g.demb), dtemb);
        auto [du3, ds2p] = split_backward(fuse2_.backward(dc2), cfg_.c1);
        FeatureMap<S> dt3 = up3_.backward(du3);
        FeatureMap<S> dc3 = dec3_res_.backward(dec3_attn_.backward(dt3, seed(4), g.demb), dtemb);
        auto [dmp, ds3p] = split_backward(fuse3_.backward(dc3), cfg_.c2);

        if (had_residuals_) g.dresiduals = {ds1p, ds2p, ds3p, dmp};

        FeatureMap<S> de3 = mid_res_.backward(mid_attn_.backward(dmp, seed(3), g.demb), dtemb);
        de3.data += ds3p.data;
        FeatureMap<S> dd2 = enc3_res_.backward(enc3_attn_.backward(de3, seed(2), g.demb), dtemb);
        FeatureMap<S> de2 = down2_.backward(dd2);
        de2.data += ds2p.data;
        FeatureMap<S> dd1 = enc2_res_.backward(enc2_attn_.backward(de2, seed(1), g.demb), dtemb);
        FeatureMap<S> de1 = down1_.backward(dd1);
        de1.data += ds1p.data;
        FeatureMap<S> dx0 = enc1_res_.backward(enc1_attn_.backward(de1, seed(0), g.demb), dtemb);
        g.dz = stem_.backward(dx0);

        // timestep MLP backward
        Mat<S> ds = tmlp2_.backward(dtemb);
        auto sg = tsig_.array();
        Mat<S> da = (ds.array() * (sg + ta_.array() * sg * (S(1) - sg))).matrix();
        tmlp1_.backward(da);
        return g;
    }

    void collect(ParamList<S>& out, const std::string& p) {
        stem_.collect(out, p + ".stem");
        enc1_res_.collect(out, p + ".enc1_res");
        enc1_attn_.collect(out, p + ".enc1_attn");
        down1_.collect(out, p + ".down1");
        enc2_res_.collect(out, p + ".enc2_res");
        enc2_attn_.collect(out, p + ".enc2_attn");
        down2_.collect(out, p + ".down2");
        enc3_res_.collect(out, p + ".enc3_res");
        enc3_attn_.collect(out, p + ".enc3_attn");
        mid_res_.collect(out, p + ".mid_res");
        mid_attn_.collect(out, p + ".mid_attn");
        fuse3_.collect(out, p + ".fuse3");
        dec3_res_.collect(out, p + ".dec3_res");
        dec3_attn_.collect(out, p + ".dec3_attn");
        up3_.collect(out, p + ".up3");
        fuse2_.collect(out, p + ".fuse2");
        dec2_res_.collect(out, p + ".dec2_res");
        dec2_attn_.collect(out, p + ".dec2_attn");
        up2_.collect(out, p + ".up2");
        fuse1_.collect(out, p + ".fuse1");
        dec1_res_.collect(out, p + ".dec1_res");
        dec1_attn_.collect(out, p + ".dec1_attn");
        out_gn_.collect(out, p + ".out_gn");
        out_conv_.collect(out, p + ".out_conv");
        tmlp1_.collect(out, p + ".tmlp1");
        tmlp2_.collect(out, p + ".tmlp2");
    }

private:
    Mat<S> time_embed(int t) {
        Mat<S> t0 = sinusoidal_embedding<S>(t, cfg_.temb_dim);
        ta_ = tmlp1_.forward(t0);
        tsig_ = (S(1) / (S(1) + (-ta_.array()).exp())).matrix();
        Mat<S> s = ta_.cwiseProduct(tsig_);
        return tmlp2_.forward(s);
    }

    void add_residual(FeatureMap<S>& x, const FeatureMap<S>& r, int idx) {
        if (!x.same_shape(r))
            throw ShapeMismatchError("control residual block " + std::to_string(idx));
        x.data += r.data;
    }

    static std::pair<FeatureMap<S>, FeatureMap<S>> split_backward(const FeatureMap<S>& dcat, int c_top) {
        FeatureMap<S> a(c_top, dcat.h, dcat.w);
        FeatureMap<S> b(dcat.channels() - c_top, dcat.h, dcat.w);
        a.data = dcat.data.topRows(c_top);
        b.data = dcat.data.bottomRows(dcat.channels() - c_top);
        return {a, b};
    }

    std::vector<ResBlock<S>*> resblocks() {
        return {&enc1_res_, &enc2_res_, &enc3_res_, &mid_res_, &dec3_res_, &dec2_res_, &dec1_res_};
    }
    std::vector<CrossAttention<S>*> attns() {
        return {&enc1_attn_, &enc2_attn_, &enc3_attn_, &mid_attn_, &dec3_attn_, &dec2_attn_, &dec1_attn_};
    }

    UNetConfig cfg_;
    Conv2d<S> stem_, down1_, down2_, fuse3_, fuse2_, fuse1_, out_conv_;
    ResBlock<S> enc1_res_, enc2_res_, enc3_res_, mid_res_, dec3_res_, dec2_res_, dec1_res_;
    CrossAttention<S> enc1_attn_, enc2_attn_, enc3_attn_, mid_attn_, dec3_attn_, dec2_attn_, dec1_attn_;
    Upsample<S> up3_, up2_;
    GroupNorm<S> out_gn_;
    SiLU<S> out_act_;
    Linear<S> tmlp1_, tmlp2_;
    Mat<S> ta_, tsig_;
    bool had_residuals_ = false;
};

}  // namespace mgpf
