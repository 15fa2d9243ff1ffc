#pragma once

#include <string>
#include <vector>

#include "mgpf/types.hpp"

namespace mgpf {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("IoError: " + m) {}
};

/// 8-bit image, interleaved channels, row-major.
struct ImageU8 {
    int h = 0, w = 0, channels = 0;
    std::vector<unsigned char> px;

    ImageU8() = default;
    ImageU8(int h_, int w_, int c) : h(h_), w(w_), channels(c), px(static_cast<size_t>(h_) * w_ * c, 0) {}

    unsigned char& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * channels + c]; }
    unsigned char at(int y, int x, int c) const {
        return px[(static_cast<size_t>(y) * w + x) * channels + c];
    }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// [0,255] -> [-1,1], channels-planar feature map.
FeatureMap<float> image_to_feature(const ImageU8& img);
/// Clamp to [-1,1] and quantize back to 8-bit.
ImageU8 feature_to_image(const FeatureMap<float>& f);

MaskGrid read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const MaskGrid& m);

}  // namespace mgpf
