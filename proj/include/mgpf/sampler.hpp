#pragma once

#include <cstdint>
#include <vector>

#include "mgpf/control.hpp"
#include "mgpf/guidance.hpp"
#include "mgpf/rng.hpp"
#include "mgpf/schedule.hpp"
#include "mgpf/unet.hpp"

namespace mgpf {

/// Multi-condition classifier-free guidance:
///   eps = eps(z, null, null) + w * (eps(z, P, I) - eps(z, null, null)).
/// The conditional branch runs the fused model (mask-gated when enable_MC);
/// the unconditional branch is the plain denoiser on the null embedding.
/// w == 1 and w == 0 short-circuit so the reduction identities hold bit-exact.
template <typename S>
FeatureMap<S> cfg_epsilon(const FeatureMap<S>& z, const Mat<S>& emb, const Mat<S>& emb_null,
                          const ConditionImage<S>& cond, const MaskSet& maskset, int t, double w,
                          FusedModel<S>& model, bool enable_mc) {
    const MaskSet* gate = enable_mc ? &maskset : nullptr;
    if (w == 0.0) return model.unet().forward(z, emb_null, t);
    FeatureMap<S> eps_cond = model.forward(z, emb, cond, t, gate);
    if (w == 1.0) return eps_cond;
    FeatureMap<S> eps_uncond = model.unet().forward(z, emb_null, t);
    FeatureMap<S> out = eps_uncond;
    out.data += static_cast<S>(w) * (eps_cond.data - eps_uncond.data);
    return out;
}

template <typename S>
struct SampleResult {
    FeatureMap<S> source_image;  // z_0^s
    FeatureMap<S> guided_image;  // z_0
    struct StepTrace {
        int t = 0;
        double L_I = 0, L_M = 0, total = 0;
    };
    std::vector<StepTrace> trace;
};

/// Dual-trajectory MGPF sampling. The source trajectory steps with the
/// prompt-only denoiser epsilon; the guided trajectory applies the latent
/// update inside the guided window and then a CFG fused step. Both start from
/// the same seed noise.
template <typename S>
SampleResult<S> mgpf_sample(const ParsedPrompt& prompt, const Mat<S>& emb, const Mat<S>& emb_null,
                            const ConditionImage<S>& cond, const MaskSet& maskset,
                            const NoiseSchedule& sched, int num_steps, std::uint64_t seed,
                            const GuidanceEngine<S>& engine, UNet<S>& unet, ControlBranch<S>& branch) {
    const GuidanceConfig& gc = engine.config();
    FusedModel<S> fused(unet, branch);

    FeatureMap<S> z(unet.config().in_ch, unet.config().image_size, unet.config().image_size);
    Rng rng(seed);
    rng.fill_normal(z.data);
    z.data.array() += static_cast<S>(std::sqrt(sched.alpha_bar[sched.T]) * gc.init_mean);
    FeatureMap<S> z_src = z;

    SampleResult<S> out;
    double alpha_scale = -1.0;
    std::vector<int> ts = inference_timesteps(sched.T, num_steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        int t = ts[i];
        int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;

        // source trajectory (prompt-only denoiser)
        AttentionRecord<S> rec_c_src;
        const AttentionRecord<S>* src_maps = nullptr;
        if (gc.use_source_control_maps) {
            branch.forward(z_src, emb, cond, t, &rec_c_src);
            src_maps = &rec_c_src;
        }
        FeatureMap<S> eps_s = unet.forward(z_src, emb, t);
        z_src = denoise_step(z_src, eps_s, t, sched, t_prev, true);

        // guided trajectory
        bool in_window = gc.in_window(t, sched.T);
        bool guiding = in_window && gc.alpha != 0.0 && (gc.enable_LL || gc.enable_ML);
        if (guiding) {
            GuidanceLosses<S> l;
            z = engine.update_latent(z, prompt, emb, cond, maskset, t, fused, true, &alpha_scale, &l,
                                     src_maps, std::sqrt(sched.alpha_bar[t]));
            out.trace.push_back({t, static_cast<double>(l.L_I), static_cast<double>(l.L_M),
                                 static_cast<double>(l.total)});
        }
        FeatureMap<S> eps = cfg_epsilon(z, emb, emb_null, cond, maskset, t, gc.cfg_scale, fused,
                                        gc.enable_MC);
        z = denoise_step(z, eps, t, sched, t_prev, true);
    }
    out.source_image = std::move(z_src);
    out.guided_image = std::move(z);
    return out;
}

}  // namespace mgpf
