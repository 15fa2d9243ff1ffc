#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mgpf/rng.hpp"
#include "mgpf/types.hpp"

namespace mgpf {

template <typename S>
struct Param {
    Mat<S> value;
    Mat<S> grad;

    void resize(int rows, int cols) {
        value = Mat<S>::Zero(rows, cols);
        grad = Mat<S>::Zero(rows, cols);
    }
    void zero_grad() { grad.setZero(); }
};

template <typename S>
using ParamList = std::vector<std::pair<std::string, Param<S>*>>;

// ---------------------------------------------------------------------------
// Conv2d: k x k convolution (k odd, same padding) with optional stride 2,
// implemented as im2col + GEMM.
// ---------------------------------------------------------------------------
template <typename S>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int stride = 1) : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride) {
        W.resize(out_ch, in_ch * k * k);
        b.resize(out_ch, 1);
    }

    void init(Rng& rng) {
        double std = 1.0 / std::sqrt(static_cast<double>(in_ch_ * k_ * k_));
        rng.fill_normal(W.value, std);
        b.value.setZero();
    }
    void init_zero() {
        W.value.setZero();
        b.value.setZero();
    }

    FeatureMap<S> forward(const FeatureMap<S>& x) {
        in_h_ = x.h;
        in_w_ = x.w;
        int oh = x.h / stride_, ow = x.w / stride_;
        cols_ = im2col(x, oh, ow);
        FeatureMap<S> y(out_ch_, oh, ow);
        y.data.noalias() = W.value * cols_;
        y.data.colwise() += b.value.col(0);
        return y;
    }

    FeatureMap<S> backward(const FeatureMap<S>& dy) {
        W.grad.noalias() += dy.data * cols_.transpose();
        b.grad.col(0) += dy.data.rowwise().sum();
        Mat<S> dcols = W.value.transpose() * dy.data;
        return col2im(dcols, dy.h, dy.w);
    }

    void collect(ParamList<S>& out, const std::string& prefix) {
        out.emplace_back(prefix + ".W", &W);
        out.emplace_back(prefix + ".b", &b);
    }

    Param<S> W, b;

private:
    Mat<S> im2col(const FeatureMap<S>& x, int oh, int ow) const {
        int pad = k_ / 2;
        Mat<S> cols = Mat<S>::Zero(in_ch_ * k_ * k_, oh * ow);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                int p = oy * ow + ox;
                for (int ky = 0; ky < k_; ++ky) {
                    int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < k_; ++kx) {
                        int ix = ox * stride_ + kx - pad;
                        if (ix < 0 || ix >= x.w) continue;
                        int ip = iy * x.w + ix;
                        for (int c = 0; c < in_ch_; ++c)
                            cols((c * k_ + ky) * k_ + kx, p) = x.data(c, ip);
                    }
                }
            }
        }
        return cols;
    }

    FeatureMap<S> col2im(const Mat<S>& dcols, int oh, int ow) const {
        int pad = k_ / 2;
        FeatureMap<S> dx(in_ch_, in_h_, in_w_);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                int p = oy * ow + ox;
                for (int ky = 0; ky < k_; ++ky) {
                    int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= in_h_) continue;
                    for (int kx = 0; kx < k_; ++kx) {
                        int ix = ox * stride_ + kx - pad;
                        if (ix < 0 || ix >= in_w_) continue;
                        int ip = iy * in_w_ + ix;
                        for (int c = 0; c < in_ch_; ++c)
                            dx.data(c, ip) += dcols((c * k_ + ky) * k_ + kx, p);
                    }
                }
            }
        }
        return dx;
    }

    int in_ch_ = 0, out_ch_ = 0, k_ = 1, stride_ = 1;
    int in_h_ = 0, in_w_ = 0;
    Mat<S> cols_;
};

// ---------------------------------------------------------------------------
// GroupNorm over (channels-in-group x pixels), per-channel affine.
// ---------------------------------------------------------------------------
template <typename S>
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(int channels, int groups) : channels_(channels), groups_(groups) {
        gamma.resize(channels, 1);
        beta.resize(channels, 1);
        gamma.value.setOnes();
    }

    FeatureMap<S> forward(const FeatureMap<S>& x) {
        int cs = channels_ / groups_;
        xhat_ = x;
        invstd_.resize(groups_);
        for (int g = 0; g < groups_; ++g) {
            auto blk = x.data.middleRows(g * cs, cs);
            S mean = blk.mean();
            S var = (blk.array() - mean).square().mean();
            S inv = S(1) / std::sqrt(var + S(1e-5));
            invstd_[g] = inv;
            xhat_.data.middleRows(g * cs, cs) = (blk.array() - mean) * inv;
        }
        FeatureMap<S> y = xhat_;
        y.data.array().colwise() *= gamma.value.col(0).array();
        y.data.colwise() += beta.value.col(0);
        return y;
    }

    FeatureMap<S> backward(const FeatureMap<S>& dy) {
        int cs = channels_ / groups_;
        gamma.grad.col(0) += (dy.data.array() * xhat_.data.array()).rowwise().sum().matrix();
        beta.grad.col(0) += dy.data.rowwise().sum();
        FeatureMap<S> dx = dy;
        for (int g = 0; g < groups_; ++g) {
            Mat<S> dxh = dy.data.middleRows(g * cs, cs);
            dxh.array().colwise() *= gamma.value.col(0).segment(g * cs, cs).array();
            auto xh = xhat_.data.middleRows(g * cs, cs);
            S n = static_cast<S>(xh.size());
            S sum_d = dxh.sum();
            S sum_dx = (dxh.array() * xh.array()).sum();
            dx.data.middleRows(g * cs, cs) =
                (invstd_[g] / n) * (n * dxh.array() - sum_d - xh.array() * sum_dx);
        }
        return dx;
    }

    void collect(ParamList<S>& out, const std::string& prefix) {
        out.emplace_back(prefix + ".gamma", &gamma);
        out.emplace_back(prefix + ".beta", &beta);
    }

    Param<S> gamma, beta;

private:
    int channels_ = 0, groups_ = 1;
    FeatureMap<S> xhat_;
    std::vector<S> invstd_;
};

// ---------------------------------------------------------------------------
// SiLU
// ---------------------------------------------------------------------------
template <typename S>
class SiLU {
public:
    FeatureMap<S> forward(const FeatureMap<S>& x) {
        sig_ = x;
        sig_.data = (S(1) / (S(1) + (-x.data.array()).exp())).matrix();
        x_ = x;
        FeatureMap<S> y = x;
        y.data = x.data.cwiseProduct(sig_.data);
        return y;
    }
    FeatureMap<S> backward(const FeatureMap<S>& dy) {
        FeatureMap<S> dx = dy;
        auto s = sig_.data.array();
        dx.data = (dy.data.array() * (s + x_.data.array() * s * (S(1) - s))).matrix();
        return dx;
    }

private:
    FeatureMap<S> x_, sig_;
};

// ---------------------------------------------------------------------------
// Linear on column vectors (or batches of columns).
// ---------------------------------------------------------------------------
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
        W.resize(out_dim, in_dim);
        b.resize(out_dim, 1);
    }
    void init(Rng& rng) {
        rng.fill_normal(W.value, 1.0 / std::sqrt(static_cast<double>(in_)));
        b.value.setZero();
    }
    void init_zero() {
        W.value.setZero();
        b.value.setZero();
    }

    Mat<S> forward(const Mat<S>& x) {
        x_ = x;
        Mat<S> y = W.value * x;
        y.colwise() += b.value.col(0);
        return y;
    }
    Mat<S> backward(const Mat<S>& dy) {
        W.grad.noalias() += dy * x_.transpose();
        b.grad.col(0) += dy.rowwise().sum();
        return W.value.transpose() * dy;
    }

    void collect(ParamList<S>& out, const std::string& prefix) {
        out.emplace_back(prefix + ".W", &W);
        out.emplace_back(prefix + ".b", &b);
    }

    Param<S> W, b;

private:
    int in_ = 0, out_ = 0;
    Mat<S> x_;
};

/// Sinusoidal embedding of an integer timestep, [cos | sin] halves.
template <typename S>
Vec<S> sinusoidal_embedding(int t, int dim) {
    int half = dim / 2;
    Vec<S> e(dim);
    double log_base = std::log(10000.0) / half;
    for (int i = 0; i < half; ++i) {
        double f = std::exp(-i * log_base);
        e[i] = static_cast<S>(std::cos(t * f));
        e[i + half] = static_cast<S>(std::sin(t * f));
    }
    return e;
}

}  // namespace mgpf
