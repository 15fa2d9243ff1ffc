#pragma once

#include <string>
#include <vector>

#include "mgpf/mask.hpp"
#include "mgpf/unet.hpp"

namespace mgpf {

enum class ConditionKind { Edge, Silhouette };

inline const char* condition_kind_name(ConditionKind k) {
    return k == ConditionKind::Edge ? "edge" : "silhouette";
}
inline ConditionKind condition_kind_from(const std::string& s) {
    if (s == "edge") return ConditionKind::Edge;
    if (s == "silhouette") return ConditionKind::Silhouette;
    throw std::runtime_error("unknown condition kind: " + s);
}

/// Values in [0,1], resolution matches the working image.
template <typename S>
struct ConditionImage {
    FeatureMap<S> grid;  // C_cond x (h*w)
    ConditionKind kind = ConditionKind::Edge;
};

/// Multiply each residual block by the mask pyramid level of its resolution,
/// broadcast over channels.
template <typename S>
ControlResiduals<S> mask_residuals(const ControlResiduals<S>& res, const MaskSet& maskset) {
    ControlResiduals<S> out = res;
    for (auto& blk : out.blocks) {
        const MaskGrid& m = maskset.level(blk.h, blk.w);
        for (int y = 0; y < blk.h; ++y)
            for (int x = 0; x < blk.w; ++x)
                if (!m(y, x)) blk.data.col(y * blk.w + x).setZero();
    }
    return out;
}

// ---------------------------------------------------------------------------
// ControlNet-style branch: a trainable copy of the denoiser encoder + middle
// block, consuming the condition image through a small encoder concatenated
// to its input, with zero-initialized per-block output projections.
// ---------------------------------------------------------------------------
template <typename S>
class ControlBranch {
public:
    static constexpr int kCondFeat = 8;
    static constexpr int kNumAttnLayers = 4;

    ControlBranch() = default;
    ControlBranch(const UNetConfig& cfg, int cond_channels) : cfg_(cfg), cond_ch_(cond_channels) {
        cenc1_ = Conv2d<S>(cond_channels, kCondFeat, 3);
        cenc2_ = Conv2d<S>(kCondFeat, kCondFeat, 3);
        stem_ = Conv2d<S>(cfg.in_ch + kCondFeat, cfg.c0, 3);
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
        zc1_ = Conv2d<S>(cfg.c0, cfg.c0, 1);
        zc2_ = Conv2d<S>(cfg.c1, cfg.c1, 1);
        zc3_ = Conv2d<S>(cfg.c2, cfg.c2, 1);
        zcm_ = Conv2d<S>(cfg.c2, cfg.c2, 1);
        tmlp1_ = Linear<S>(cfg.temb_dim, cfg.temb_dim);
        tmlp2_ = Linear<S>(cfg.temb_dim, cfg.temb_dim);
    }

    const UNetConfig& config() const { return cfg_; }
    int cond_channels() const { return cond_ch_; }

    void init(Rng& rng) {
        cenc1_.init(rng);
        cenc2_.init(rng);
        stem_.init(rng);
        enc1_res_.init(rng);
        enc1_attn_.init(rng);
        down1_.init(rng);
        enc2_res_.init(rng);
        enc2_attn_.init(rng);
        down2_.init(rng);
        enc3_res_.init(rng);
        enc3_attn_.init(rng);
        mid_res_.init(rng);
        mid_attn_.init(rng);
        tmlp1_.init(rng);
        tmlp2_.init(rng);
        zc1_.init_zero();
        zc2_.init_zero();
        zc3_.init_zero();
        zcm_.init_zero();
    }

    /// Copy the denoiser's shared-architecture weights (encoder, middle,
    /// timestep MLP) into this branch; condition encoder, stem and zero
    /// projections keep their own initialization.
    void init_from(UNet<S>& unet) {
        ParamList<S> src, dst;
        unet.collect(src, "u");
        collect(dst, "u");
        std::vector<std::string> copied = {".enc1_res", ".enc1_attn", ".down1", ".enc2_res",
                                           ".enc2_attn", ".down2",    ".enc3_res", ".enc3_attn",
                                           ".mid_res",  ".mid_attn",  ".tmlp1",    ".tmlp2"};
        for (auto& [dname, dp] : dst) {
            bool wanted = false;
            for (const auto& c : copied)
                if (dname.find(c) != std::string::npos) wanted = true;
            if (!wanted) continue;
            for (auto& [sname, sp] : src)
                if (sname == dname) dp->value = sp->value;
        }
    }

    /// Returns per-block residuals (not yet mask-gated).
    ControlResiduals<S> forward(const FeatureMap<S>& z, const Mat<S>& emb, const ConditionImage<S>& cond,
                                int t, AttentionRecord<S>* rec = nullptr) {
        if (cond.grid.h != z.h || cond.grid.w != z.w) throw ShapeMismatchError("condition resolution");
        if (rec) {
            rec->source = AttnSource::Control;
            rec->layers.clear();
        }
        Mat<S> temb = time_embed(t);
        FeatureMap<S> cf = cenc2_.forward(cact_.forward(cenc1_.forward(cond.grid)));
        FeatureMap<S> x0 = stem_.forward(concat_channels(z, cf));
        FeatureMap<S> e1 = enc1_attn_.forward(enc1_res_.forward(x0, temb), emb, rec, "enc1");
        FeatureMap<S> d1 = down1_.forward(e1);
        FeatureMap<S> e2 = enc2_attn_.forward(enc2_res_.forward(d1, temb), emb, rec, "enc2");
        FeatureMap<S> d2 = down2_.forward(e2);
        FeatureMap<S> e3 = enc3_attn_.forward(enc3_res_.forward(d2, temb), emb, rec, "enc3");
        FeatureMap<S> m = mid_attn_.forward(mid_res_.forward(e3, temb), emb, rec, "mid");

        ControlResiduals<S> out;
        out.blocks = {zc1_.forward(e1), zc2_.forward(e2), zc3_.forward(e3), zcm_.forward(m)};
        return out;
    }

    /// Backward through the last forward; returns d(z). `attn_seeds` is in
    /// recording order (enc1, enc2, enc3, mid).
    FeatureMap<S> backward(const ControlResiduals<S>& dres, const std::vector<Mat<S>>* attn_seeds,
                           Mat<S>& demb) {
        auto seed = [&](int i) -> const Mat<S>* {
            if (!attn_seeds || i >= static_cast<int>(attn_seeds->size())) return nullptr;
            return (*attn_seeds)[i].size() ? &(*attn_seeds)[i] : nullptr;
        };
        Mat<S> dtemb;
        FeatureMap<S> dm = zcm_.backward(dres.blocks[3]);
        FeatureMap<S> de3 = mid_res_.backward(mid_attn_.backward(dm, seed(3), demb), dtemb);
        de3.data += zc3_.backward(dres.blocks[2]).data;
        FeatureMap<S> dd2 = enc3_res_.backward(enc3_attn_.backward(de3, seed(2), demb), dtemb);
        FeatureMap<S> de2 = down2_.backward(dd2);
        de2.data += zc2_.backward(dres.blocks[1]).data;
        FeatureMap<S> dd1 = enc2_res_.backward(enc2_attn_.backward(de2, seed(1), demb), dtemb);
        FeatureMap<S> de1 = down1_.backward(dd1);
        de1.data += zc1_.backward(dres.blocks[0]).data;
        FeatureMap<S> dx0 = enc1_res_.backward(enc1_attn_.backward(de1, seed(0), demb), dtemb);
        FeatureMap<S> dcat = stem_.backward(dx0);

        // timestep MLP backward
        Mat<S> ds = tmlp2_.backward(dtemb);
        auto sg = tsig_.array();
        Mat<S> da = (ds.array() * (sg + ta_.array() * sg * (S(1) - sg))).matrix();
        tmlp1_.backward(da);

        FeatureMap<S> dz(cfg_.in_ch, dcat.h, dcat.w);
        dz.data = dcat.data.topRows(cfg_.in_ch);
        // condition-encoder gradient (training only; z path is unaffected)
        FeatureMap<S> dcf(kCondFeat, dcat.h, dcat.w);
        dcf.data = dcat.data.bottomRows(kCondFeat);
        cenc1_.backward(cact_.backward(cenc2_.backward(dcf)));
        return dz;
    }

    void collect(ParamList<S>& out, const std::string& p) {
        cenc1_.collect(out, p + ".cenc1");
        cenc2_.collect(out, p + ".cenc2");
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
        zc1_.collect(out, p + ".zc1");
        zc2_.collect(out, p + ".zc2");
        zc3_.collect(out, p + ".zc3");
        zcm_.collect(out, p + ".zcm");
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

    UNetConfig cfg_;
    int cond_ch_ = 1;
    Conv2d<S> cenc1_, cenc2_, stem_, down1_, down2_, zc1_, zc2_, zc3_, zcm_;
    SiLU<S> cact_;
    ResBlock<S> enc1_res_, enc2_res_, enc3_res_, mid_res_;
    CrossAttention<S> enc1_attn_, enc2_attn_, enc3_attn_, mid_attn_;
    Linear<S> tmlp1_, tmlp2_;
    Mat<S> ta_, tsig_;
};

// ---------------------------------------------------------------------------
// Denoiser + control branch with residual injection and optional mask gating.
// ---------------------------------------------------------------------------
template <typename S>
class FusedModel {
public:
    struct Grads {
        FeatureMap<S> dz;
        Mat<S> demb_unet;
        Mat<S> demb_branch;
    };

    FusedModel(UNet<S>& unet, ControlBranch<S>& branch) : unet_(unet), branch_(branch) {}

    FeatureMap<S> forward(const FeatureMap<S>& z, const Mat<S>& emb, const ConditionImage<S>& cond,
                          int t, const MaskSet* maskset = nullptr, AttentionRecord<S>* rec_s = nullptr,
                          AttentionRecord<S>* rec_c = nullptr) {
        ControlResiduals<S> raw = branch_.forward(z, emb, cond, t, rec_c);
        maskset_ = maskset;
        ControlResiduals<S> gated = maskset ? mask_residuals(raw, *maskset) : raw;
        return unet_.forward(z, emb, t, rec_s, &gated);
    }

    Grads backward(const FeatureMap<S>& deps, const std::vector<Mat<S>>* seeds_s = nullptr,
                   const std::vector<Mat<S>>* seeds_c = nullptr) {
        typename UNet<S>::Grads ug = unet_.backward(deps, seeds_s);
        ControlResiduals<S> dres;
        dres.blocks = std::move(ug.dresiduals);
        if (maskset_) {
            ControlResiduals<S> tmp;
            tmp.blocks = dres.blocks;
            dres = mask_residuals(tmp, *maskset_);
        }
        Grads g;
        g.demb_unet = std::move(ug.demb);
        FeatureMap<S> dz_branch = branch_.backward(dres, seeds_c, g.demb_branch);
        g.dz = std::move(ug.dz);
        g.dz.data += dz_branch.data;
        return g;
    }

    UNet<S>& unet() { return unet_; }
    ControlBranch<S>& branch() { return branch_; }

private:
    UNet<S>& unet_;
    ControlBranch<S>& branch_;
    const MaskSet* maskset_ = nullptr;
};

}  // namespace mgpf
