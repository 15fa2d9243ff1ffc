#include <cmath>
#include <fstream>

#include "mgpf/bench.hpp"

namespace mgpf {

Vec<double> ShapeClassifier::features(const MaskGrid& crop) {
    int h = static_cast<int>(crop.rows()), w = static_cast<int>(crop.cols());
    int side = std::max(h, w);
    // center the crop in a square so aspect ratio survives the resample
    double off_y = (side - h) * 0.5, off_x = (side - w) * 0.5;
    Vec<double> f = Vec<double>::Zero(kFeatures);
    const int ss = 4;  // subsamples per cell axis
    for (int gy = 0; gy < kGrid; ++gy)
        for (int gx = 0; gx < kGrid; ++gx) {
            double acc = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    double u = (gx + (sx + 0.5) / ss) / kGrid * side - off_x;
                    double v = (gy + (sy + 0.5) / ss) / kGrid * side - off_y;
                    int px = static_cast<int>(std::floor(u)), py = static_cast<int>(std::floor(v));
                    if (px >= 0 && px < w && py >= 0 && py < h && crop(py, px)) acc += 1.0;
                }
            f[gy * kGrid + gx] = acc / (ss * ss);
        }
    f[kFeatures - 1] = 1.0;
    return f;
}

Vec<double> ShapeClassifier::predict(const MaskGrid& crop) const {
    if (!trained()) throw ClassifierUnavailableError();
    Vec<double> logits = W * features(crop);
    logits.array() -= logits.maxCoeff();
    Vec<double> p = logits.array().exp();
    return p / p.sum();
}

int ShapeClassifier::predict_class(const MaskGrid& crop) const {
    Vec<double> p = predict(crop);
    Eigen::Index best;
    p.maxCoeff(&best);
    return static_cast<int>(best);
}

void ShapeClassifier::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    std::int64_t r = W.rows(), c = W.cols();
    os.write(reinterpret_cast<const char*>(&r), sizeof(r));
    os.write(reinterpret_cast<const char*>(&c), sizeof(c));
    os.write(reinterpret_cast<const char*>(W.data()), sizeof(double) * r * c);
}

ShapeClassifier ShapeClassifier::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::int64_t r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&r), sizeof(r));
    is.read(reinterpret_cast<char*>(&c), sizeof(c));
    if (!is || r <= 0 || c != ShapeClassifier::kFeatures) throw IoError("bad classifier file " + path);
    ShapeClassifier cl;
    cl.W.resize(r, c);
    is.read(reinterpret_cast<char*>(cl.W.data()), sizeof(double) * r * c);
    if (!is) throw IoError("bad classifier file " + path);
    return cl;
}

namespace {

MaskGrid bbox_crop(const MaskGrid& m) {
    int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
    int y0 = h, y1 = -1, x0 = w, x1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (m(y, x)) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    if (y1 < 0) return MaskGrid::Zero(1, 1);
    return m.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1);
}

}  // namespace

std::pair<ShapeClassifier, double> train_shape_classifier(std::uint64_t seed, int per_class) {
    const int n_shapes = static_cast<int>(shape_names().size());
    Rng rng(seed);

    std::vector<Vec<double>> xs;
    std::vector<int> ys;
    for (int s = 0; s < n_shapes; ++s)
        for (int i = 0; i < per_class; ++i) {
            PlacedObject o;
            o.shape = s;
            o.r = rng.uniform(5.0, 14.0);
            o.cx = 16.0 + rng.uniform(-0.5, 0.5);
            o.cy = 16.0 + rng.uniform(-0.5, 0.5);
            MaskGrid m = rasterize_mask(o, 32);
            xs.push_back(ShapeClassifier::features(bbox_crop(m)));
            ys.push_back(s);
        }

    // deterministic shuffle, last 20% held out
    std::vector<int> order(xs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = 0; i + 1 < order.size(); ++i)
        std::swap(order[i], order[rng.uniform_int(static_cast<int>(i), static_cast<int>(order.size()) - 1)]);
    int n_holdout = static_cast<int>(order.size()) / 5;
    int n_train = static_cast<int>(order.size()) - n_holdout;

    ShapeClassifier cl;
    cl.W = Mat<double>::Zero(n_shapes, ShapeClassifier::kFeatures);
    Mat<double> m1 = cl.W, m2 = cl.W;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int it = 1; it <= 300; ++it) {
        Mat<double> grad = Mat<double>::Zero(n_shapes, ShapeClassifier::kFeatures);
        for (int i = 0; i < n_train; ++i) {
            const Vec<double>& x = xs[order[i]];
            Vec<double> logits = cl.W * x;
            logits.array() -= logits.maxCoeff();
            Vec<double> p = logits.array().exp();
            p /= p.sum();
            p[ys[order[i]]] -= 1.0;
            grad += p * x.transpose();
        }
        grad /= n_train;
        m1 = b1 * m1 + (1 - b1) * grad;
        m2 = b2 * m2 + (1 - b2) * grad.cwiseProduct(grad);
        double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
        cl.W -= lr * (m1 / c1).cwiseQuotient(((m2 / c2).cwiseSqrt().array() + eps).matrix());
    }

    int hits = 0;
    for (int i = n_train; i < static_cast<int>(order.size()); ++i) {
        Vec<double> logits = cl.W * xs[order[i]];
        Eigen::Index best;
        logits.maxCoeff(&best);
        if (static_cast<int>(best) == ys[order[i]]) ++hits;
    }
    double acc = n_holdout ? static_cast<double>(hits) / n_holdout : 1.0;
    return {std::move(cl), acc};
}

}  // namespace mgpf
