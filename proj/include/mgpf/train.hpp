#pragma once

#include <string>
#include <vector>

#include "mgpf/bench.hpp"
#include "mgpf/config.hpp"
#include "mgpf/control.hpp"
#include "mgpf/schedule.hpp"

namespace mgpf {

struct DivergedLossError : std::runtime_error {
    explicit DivergedLossError(int step)
        : std::runtime_error("DivergedLoss: non-finite loss at step " + std::to_string(step)) {}
};

template <typename S>
class Adam {
public:
    Adam(ParamList<S>& params, double lr) : params_(params), lr_(lr) {
        for (auto& [n, p] : params_) {
            m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step() {
        ++t_;
        double c1 = 1.0 - std::pow(0.9, t_), c2 = 1.0 - std::pow(0.999, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Mat<S>& g = params_[i].second->grad;
            m_[i] = S(0.9) * m_[i] + S(0.1) * g;
            v_[i] = S(0.999) * v_[i] + S(0.001) * g.cwiseProduct(g);
            params_[i].second->value -=
                (S(lr_ / c1) * m_[i]).cwiseQuotient(((v_[i] / S(c2)).cwiseSqrt().array() + S(1e-8)).matrix());
        }
    }

    void zero_grad() {
        for (auto& [n, p] : params_) p->zero_grad();
    }

    void set_lr(double lr) { lr_ = lr; }

private:
    ParamList<S>& params_;
    double lr_;
    int t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

/// One benchmark case loaded into model-ready tensors. `masks` (when the case
/// has any) drives the residual-gating augmentation during control training.
struct TrainExample {
    FeatureMap<float> x0;
    std::vector<int> tokens;
    ConditionImage<float> cond;
    MaskSet masks;
};

std::vector<TrainExample> load_training_set(const std::string& manifest_path,
                                            const Vocabulary& vocab, ConditionKind kind,
                                            int max_count = -1);

struct TrainStats {
    std::vector<double> losses;  // per optimization step
    double holdout_mse = 0.0;    // epsilon-MSE on the held-out slice
};

/// Epsilon-prediction training of the denoiser and text embedder. The first
/// `params.holdout` examples are held out and scored after training; the
/// no-skill reference for that score is 1.0 (predicting zero for unit noise).
TrainStats train_denoiser(UNet<float>& unet, TextEmbedder<float>& emb,
                          const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                          const TrainParams& params);

/// Trains the control branch on aligned pairs with the denoiser and embedder
/// frozen. The fused model's epsilon-MSE on the holdout is returned; the
/// reference to beat is the frozen denoiser's own holdout MSE.
TrainStats train_control_branch(ControlBranch<float>& branch, UNet<float>& unet,
                                const TextEmbedder<float>& emb,
                                const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                                const TrainParams& params);

/// Epsilon-MSE of the (optionally fused) model over the given examples with
/// deterministic timesteps and noise.
double holdout_epsilon_mse(UNet<float>& unet, ControlBranch<float>* branch,
                           const TextEmbedder<float>& emb, const std::vector<TrainExample>& data,
                           int begin, int end, const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace mgpf
