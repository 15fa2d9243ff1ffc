#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mgpf/types.hpp"

namespace mgpf {

struct NonIntegerFactorError : std::runtime_error {
    NonIntegerFactorError() : std::runtime_error("NonIntegerFactor: source resolution is not an integer multiple of the target") {}
};
struct MissingPyramidLevelError : std::runtime_error {
    explicit MissingPyramidLevelError(int h, int w)
        : std::runtime_error("MissingPyramidLevel: " + std::to_string(h) + "x" + std::to_string(w)) {}
};

struct ObjectMask {
    std::string name;
    MaskGrid grid;  // h x w, entries in {0,1}
};

/// Pixelwise OR; the empty list yields all-zeros at h x w.
MaskGrid union_masks(const std::vector<ObjectMask>& masks, int h, int w);

/// Max-pool downsampling: an output cell is 1 iff any covered input pixel is 1.
MaskGrid reshape_mask(const MaskGrid& union_mask, int target_h, int target_w);

/// Immutable after construction; union mask plus per-block-resolution reshapes.
struct MaskSet {
    std::vector<ObjectMask> masks;
    MaskGrid union_mask;
    std::map<std::pair<int, int>, MaskGrid> pyramid;

    static MaskSet build(std::vector<ObjectMask> masks, int h, int w,
                         const std::vector<std::pair<int, int>>& block_resolutions);

    const MaskGrid& level(int h, int w) const;
    const ObjectMask* find(const std::string& name) const;
    bool union_empty() const { return union_mask.size() == 0 || (union_mask != 0).count() == 0; }
    int h() const { return static_cast<int>(union_mask.rows()); }
    int w() const { return static_cast<int>(union_mask.cols()); }
};

}  // namespace mgpf
