#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "mgpf/types.hpp"

namespace mgpf {

struct TimestepOutOfRangeError : std::runtime_error {
    explicit TimestepOutOfRangeError(int t) : std::runtime_error("TimestepOutOfRange: t=" + std::to_string(t)) {}
};

/// DDPM noise schedule. alpha_bar is indexed 0..T with alpha_bar[0] = 1,
/// so alpha_bar[t] is the cumulative product after t noising steps.
struct NoiseSchedule {
    int T = 0;
    Eigen::VectorXd betas;      // betas[t-1] for step t
    Eigen::VectorXd alpha_bar;  // length T+1, strictly decreasing

    static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.025) {
        NoiseSchedule s;
        s.T = T;
        s.betas.resize(T);
        s.alpha_bar.resize(T + 1);
        s.alpha_bar[0] = 1.0;
        for (int t = 1; t <= T; ++t) {
            double b = (T == 1) ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / double(T - 1);
            if (b <= 0.0 || b >= 1.0) throw std::runtime_error("beta out of (0,1)");
            s.betas[t - 1] = b;
            s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - b);
        }
        return s;
    }

    void check_t(int t) const {
        if (t < 1 || t > T) throw TimestepOutOfRangeError(t);
    }

    std::uint64_t hash() const {
        std::uint64_t h = 14695981039346656037ull;
        auto mix = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        };
        mix(static_cast<std::uint64_t>(T));
        for (int i = 0; i < T; ++i) {
            std::uint64_t bits;
            double d = betas[i];
            static_assert(sizeof(bits) == sizeof(d));
            std::memcpy(&bits, &d, 8);
            mix(bits);
        }
        return h;
    }
};

/// z_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
template <typename S>
FeatureMap<S> add_noise(const FeatureMap<S>& x0, int t, const FeatureMap<S>& noise,
                        const NoiseSchedule& sched) {
    sched.check_t(t);
    if (!x0.same_shape(noise)) throw ShapeMismatchError("add_noise: x0 vs noise");
    double ab = sched.alpha_bar[t];
    FeatureMap<S> z = x0;
    z.data = (x0.data * static_cast<S>(std::sqrt(ab)) + noise.data * static_cast<S>(std::sqrt(1.0 - ab)));
    return z;
}

/// Deterministic DDIM-style update from timestep t to t_prev (t_prev < t):
///   x0_hat = (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t)
///   z_prev = sqrt(abar_prev) x0_hat + sqrt(1-abar_prev) eps
/// clip_x0 clamps x0_hat to the pixel range [-1, 1] before re-noising; the
/// sampler enables it to keep high-noise steps from committing to off-range
/// images that later steps cannot undo.
template <typename S>
FeatureMap<S> denoise_step(const FeatureMap<S>& z_t, const FeatureMap<S>& eps_hat, int t,
                           const NoiseSchedule& sched, int t_prev = -1, bool clip_x0 = false) {
    sched.check_t(t);
    if (t_prev < 0) t_prev = t - 1;
    if (t_prev < 0 || t_prev >= t) throw TimestepOutOfRangeError(t_prev);
    if (!z_t.same_shape(eps_hat)) throw ShapeMismatchError("denoise_step: z vs eps");
    check_finite(z_t.data, "denoise_step input");
    check_finite(eps_hat.data, "denoise_step epsilon");
    double ab_t = sched.alpha_bar[t];
    double ab_p = sched.alpha_bar[t_prev];
    FeatureMap<S> out = z_t;
    Mat<S> x0_hat = (z_t.data - eps_hat.data * static_cast<S>(std::sqrt(1.0 - ab_t))) /
                    static_cast<S>(std::sqrt(ab_t));
    if (clip_x0) x0_hat = x0_hat.cwiseMax(S(-1)).cwiseMin(S(1));
    out.data = x0_hat * static_cast<S>(std::sqrt(ab_p)) +
               eps_hat.data * static_cast<S>(std::sqrt(1.0 - ab_p));
    return out;
}

/// Predicted clean image from (z_t, eps).
template <typename S>
FeatureMap<S> predict_x0(const FeatureMap<S>& z_t, const FeatureMap<S>& eps_hat, int t,
                         const NoiseSchedule& sched) {
    sched.check_t(t);
    double ab_t = sched.alpha_bar[t];
    FeatureMap<S> out = z_t;
    out.data = (z_t.data - eps_hat.data * static_cast<S>(std::sqrt(1.0 - ab_t))) /
               static_cast<S>(std::sqrt(ab_t));
    return out;
}

/// Evenly spaced inference timesteps, descending, ending at the full-noise end.
/// n steps over a schedule of length T, e.g. T=400, n=50 -> 400, 392, ..., 8.
inline std::vector<int> inference_timesteps(int T, int n) {
    std::vector<int> ts;
    for (int i = n; i >= 1; --i) ts.push_back(i * T / n);
    return ts;
}

}  // namespace mgpf
