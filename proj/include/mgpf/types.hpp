#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mgpf {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

using MatF = Mat<float>;
using VecF = Vec<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

// Binary mask grid, row r = image row, entries in {0,1}.
using MaskGrid = Eigen::Array<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;

/// A C x (h*w) feature map. Pixel p = y*w + x indexes columns,
/// channels index rows.
template <typename S>
struct FeatureMap {
    Mat<S> data;
    int h = 0;
    int w = 0;

    FeatureMap() = default;
    FeatureMap(int channels, int h_, int w_) : data(Mat<S>::Zero(channels, h_ * w_)), h(h_), w(w_) {}

    int channels() const { return static_cast<int>(data.rows()); }
    int pixels() const { return h * w; }

    bool same_shape(const FeatureMap& o) const {
        return h == o.h && w == o.w && data.rows() == o.data.rows();
    }
};

struct ShapeMismatchError : std::runtime_error {
    explicit ShapeMismatchError(const std::string& m) : std::runtime_error("ShapeMismatch: " + m) {}
};
struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& m) : std::runtime_error("NonFinite: " + m) {}
};

template <typename S>
void check_finite(const Mat<S>& m, const char* where) {
    if (!m.allFinite()) throw NonFiniteError(where);
}

}  // namespace mgpf
