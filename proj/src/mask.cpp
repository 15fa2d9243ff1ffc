#include "mgpf/mask.hpp"

namespace mgpf {

MaskGrid union_masks(const std::vector<ObjectMask>& masks, int h, int w) {
    MaskGrid out = MaskGrid::Zero(h, w);
    for (const auto& m : masks) {
        if (m.grid.rows() != h || m.grid.cols() != w)
            throw ShapeMismatchError("mask '" + m.name + "' is " + std::to_string(m.grid.rows()) + "x" +
                                     std::to_string(m.grid.cols()) + ", expected " + std::to_string(h) +
                                     "x" + std::to_string(w));
        out = out.max(m.grid);
    }
    return out;
}

MaskGrid reshape_mask(const MaskGrid& um, int th, int tw) {
    int h = static_cast<int>(um.rows()), w = static_cast<int>(um.cols());
    if (th <= 0 || tw <= 0 || h % th != 0 || w % tw != 0) throw NonIntegerFactorError();
    int fy = h / th, fx = w / tw;
    MaskGrid out = MaskGrid::Zero(th, tw);
    for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
            out(y, x) = um.block(y * fy, x * fx, fy, fx).maxCoeff();
    return out;
}

MaskSet MaskSet::build(std::vector<ObjectMask> masks, int h, int w,
                       const std::vector<std::pair<int, int>>& block_resolutions) {
    MaskSet ms;
    ms.union_mask = union_masks(masks, h, w);
    ms.masks = std::move(masks);
    for (auto [bh, bw] : block_resolutions)
        ms.pyramid.emplace(std::make_pair(bh, bw), reshape_mask(ms.union_mask, bh, bw));
    return ms;
}

const MaskGrid& MaskSet::level(int h, int w) const {
    auto it = pyramid.find({h, w});
    if (it == pyramid.end()) throw MissingPyramidLevelError(h, w);
    return it->second;
}

const ObjectMask* MaskSet::find(const std::string& name) const {
    for (const auto& m : masks)
        if (m.name == name) return &m;
    return nullptr;
}

}  // namespace mgpf
