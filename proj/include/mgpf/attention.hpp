#pragma once

#include <string>
#include <vector>

#include "mgpf/nn.hpp"
#include "mgpf/types.hpp"

namespace mgpf {

struct MissingLayerError : std::runtime_error {
    explicit MissingLayerError(const std::string& m) : std::runtime_error("MissingLayer: " + m) {}
};
struct MissingTokenError : std::runtime_error {
    explicit MissingTokenError(int t) : std::runtime_error("MissingToken: position " + std::to_string(t)) {}
};

enum class AttnSource { Denoiser, Control };

/// Raw cross-attention maps per layer. Each layer holds an L x P matrix whose
/// columns (one per pixel) are softmax distributions over the L tokens.
template <typename S>
struct AttentionRecord {
    struct Layer {
        std::string name;
        int h = 0, w = 0;
        Mat<S> maps;  // L x (h*w)
    };
    AttnSource source = AttnSource::Denoiser;
    int num_tokens = 0;
    std::vector<Layer> layers;

    void add(const std::string& name, int h, int w, Mat<S> maps) {
        num_tokens = static_cast<int>(maps.rows());
        layers.push_back({name, h, w, std::move(maps)});
    }
    const Layer& layer(const std::string& name) const {
        for (const auto& l : layers)
            if (l.name == name) return l;
        throw MissingLayerError(name);
    }
    int layer_index(const std::string& name) const {
        for (size_t i = 0; i < layers.size(); ++i)
            if (layers[i].name == name) return static_cast<int>(i);
        throw MissingLayerError(name);
    }
};

// ---------------------------------------------------------------------------
// Single-head cross-attention with a residual output path. Records the raw
// attention matrix A = softmax_tokens(K^T Q / sqrt(d)) when asked.
// ---------------------------------------------------------------------------
template <typename S>
class CrossAttention {
public:
    CrossAttention() = default;
    CrossAttention(int channels, int d, int d_tok) : c_(channels), d_(d), d_tok_(d_tok) {
        Wq.resize(d, channels);
        Wk.resize(d, d_tok);
        Wv.resize(channels, d_tok);
        Wo.resize(channels, channels);
        bo.resize(channels, 1);
    }

    void init(Rng& rng) {
        rng.fill_normal(Wq.value, 1.0 / std::sqrt(static_cast<double>(c_)));
        rng.fill_normal(Wk.value, 1.0 / std::sqrt(static_cast<double>(d_tok_)));
        rng.fill_normal(Wv.value, 1.0 / std::sqrt(static_cast<double>(d_tok_)));
        // residual branch starts near identity-free
        rng.fill_normal(Wo.value, 0.2 / std::sqrt(static_cast<double>(c_)));
        bo.value.setZero();
    }

    /// x: C x P features, emb: d_tok x L token embeddings.
    FeatureMap<S> forward(const FeatureMap<S>& x, const Mat<S>& emb, AttentionRecord<S>* rec,
                          const std::string& name) {
        x_ = x;
        emb_ = emb;
        q_.noalias() = Wq.value * x.data;                           // d x P
        k_.noalias() = Wk.value * emb;                              // d x L
        Mat<S> scores = k_.transpose() * q_ / std::sqrt(S(d_));     // L x P
        scores.rowwise() -= scores.colwise().maxCoeff();
        a_ = scores.array().exp().matrix();
        Vec<S> colsum = a_.colwise().sum();
        a_.array().rowwise() /= colsum.transpose().array();
        h_.noalias() = Wv.value * emb;  // C x L
        o_.noalias() = h_ * a_;         // C x P
        if (rec) rec->add(name, x.h, x.w, a_);
        FeatureMap<S> y = x;
        y.data.noalias() += Wo.value * o_;
        y.data.colwise() += bo.value.col(0);
        if (!y.data.allFinite()) throw NonFiniteError("NonFiniteActivation at attention layer " + name);
        return y;
    }

    /// dy: gradient at the output; da_inject: extra gradient on the raw
    /// attention maps (L x P) from attention-space losses, may be null.
    /// Returns dx; accumulates d(emb) into demb.
    FeatureMap<S> backward(const FeatureMap<S>& dy, const Mat<S>* da_inject, Mat<S>& demb) {
        Mat<S> do_ = Wo.value.transpose() * dy.data;  // C x P
        Wo.grad.noalias() += dy.data * o_.transpose();
        bo.grad.col(0) += dy.data.rowwise().sum();

        Mat<S> dh = do_ * a_.transpose();  // C x L
        Mat<S> da = h_.transpose() * do_;  // L x P
        if (da_inject) da += *da_inject;

        // softmax backward per pixel column
        Vec<S> dot = (a_.array() * da.array()).colwise().sum();
        Mat<S> ds = a_.array() * (da.array().rowwise() - dot.transpose().array());
        ds /= std::sqrt(S(d_));

        Mat<S> dq = k_ * ds;              // d x P
        Mat<S> dk = q_ * ds.transpose();  // d x L

        Wq.grad.noalias() += dq * x_.data.transpose();
        Wk.grad.noalias() += dk * emb_.transpose();
        Wv.grad.noalias() += dh * emb_.transpose();
        if (demb.size() == 0) demb = Mat<S>::Zero(emb_.rows(), emb_.cols());
        demb.noalias() += Wk.value.transpose() * dk;
        demb.noalias() += Wv.value.transpose() * dh;

        FeatureMap<S> dx = dy;
        dx.data.noalias() += Wq.value.transpose() * dq;
        return dx;
    }

    void collect(ParamList<S>& out, const std::string& prefix) {
        out.emplace_back(prefix + ".Wq", &Wq);
        out.emplace_back(prefix + ".Wk", &Wk);
        out.emplace_back(prefix + ".Wv", &Wv);
        out.emplace_back(prefix + ".Wo", &Wo);
        out.emplace_back(prefix + ".bo", &bo);
    }

    Param<S> Wq, Wk, Wv, Wo, bo;

private:
    int c_ = 0, d_ = 0, d_tok_ = 0;
    FeatureMap<S> x_;
    Mat<S> emb_, q_, k_, a_, h_, o_;
};

// ---------------------------------------------------------------------------
// normalize_maps: average selected layers (nearest-upsampled to the finest
// selected resolution), add a small floor and renormalize so each token's map
// is a strictly positive distribution over pixels.
// ---------------------------------------------------------------------------
template <typename S>
struct NormalizedMaps {
    int h = 0, w = 0;
    std::vector<int> token_positions;
    Mat<S> maps;  // P x ntok, each column sums to 1

    Vec<S> token_map(int position) const {
        for (size_t i = 0; i < token_positions.size(); ++i)
            if (token_positions[i] == static_cast<int>(position)) return maps.col(i);
        throw MissingTokenError(position);
    }
    int column_of(int position) const {
        for (size_t i = 0; i < token_positions.size(); ++i)
            if (token_positions[i] == static_cast<int>(position)) return static_cast<int>(i);
        throw MissingTokenError(position);
    }
};

/// Selects attention layers by resolution (h == w == resolution; resolution
/// <= 0 selects the coarsest present) and keeps enough state to push loss
/// gradients back onto the raw per-layer maps.
template <typename S>
class MapNormalizer {
public:
    static constexpr double kFloor = 1e-8;

    MapNormalizer(const AttentionRecord<S>& rec, const std::vector<int>& token_positions,
                  int resolution = -1)
        : rec_(rec) {
        if (rec.layers.empty()) throw MissingLayerError("record has no attention layers");
        int target = resolution;
        if (target <= 0) {
            target = rec.layers[0].h;
            for (const auto& l : rec.layers) target = std::min(target, l.h);
        }
        for (size_t i = 0; i < rec.layers.size(); ++i)
            if (rec.layers[i].h == target && rec.layers[i].w == target)
                selected_.push_back(static_cast<int>(i));
        if (selected_.empty())
            throw MissingLayerError("no layer at resolution " + std::to_string(target));
        // finest among the selected (single resolution by construction)
        out_.h = out_.w = target;
        out_.token_positions = token_positions;
        int P = target * target;
        int nl = static_cast<int>(selected_.size());
        out_.maps = Mat<S>::Zero(P, static_cast<int>(token_positions.size()));
        z_.resize(token_positions.size());
        for (size_t ti = 0; ti < token_positions.size(); ++ti) {
            int tok = token_positions[ti];
            Vec<S> acc = Vec<S>::Zero(P);
            for (int li : selected_) {
                const auto& l = rec.layers[li];
                if (tok < 0 || tok >= l.maps.rows()) throw MissingTokenError(tok);
                acc += upsample(l.maps.row(tok).transpose(), l.h, l.w, target, target);
            }
            acc /= S(nl);
            acc.array() += S(kFloor);
            z_[ti] = acc.sum();
            out_.maps.col(ti) = acc / z_[ti];
        }
    }

    const NormalizedMaps<S>& result() const { return out_; }

    /// Push d(loss)/d(normalized map of token_positions[ti]) back onto raw
    /// layer maps. `seeds` must be sized like the record's layer list
    /// (one L x P matrix per layer); missing entries are allocated.
    void backward(int ti, const Vec<S>& dnorm, std::vector<Mat<S>>& seeds) const {
        if (seeds.size() != rec_.layers.size()) seeds.resize(rec_.layers.size());
        S dot = dnorm.dot(out_.maps.col(ti));
        Vec<S> du = (dnorm.array() - dot).matrix() / z_[ti];
        du /= S(selected_.size());
        for (int li : selected_) {
            const auto& l = rec_.layers[li];
            if (seeds[li].size() == 0) seeds[li] = Mat<S>::Zero(l.maps.rows(), l.maps.cols());
            Vec<S> d = downsample_sum(du, out_.h, out_.w, l.h, l.w);
            seeds[li].row(out_.token_positions[ti]) += d.transpose();
        }
    }

private:
    static Vec<S> upsample(const Vec<S>& v, int h, int w, int th, int tw) {
        if (h == th && w == tw) return v;
        int fy = th / h, fx = tw / w;
        Vec<S> out(th * tw);
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x) out[y * tw + x] = v[(y / fy) * w + (x / fx)];
        return out;
    }
    static Vec<S> downsample_sum(const Vec<S>& v, int h, int w, int th, int tw) {
        if (h == th && w == tw) return v;
        int fy = h / th, fx = w / tw;
        Vec<S> out = Vec<S>::Zero(th * tw);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out[(y / fy) * tw + (x / fx)] += v[y * w + x];
        return out;
    }

    const AttentionRecord<S>& rec_;
    std::vector<int> selected_;
    std::vector<S> z_;
    NormalizedMaps<S> out_;
};

}  // namespace mgpf
