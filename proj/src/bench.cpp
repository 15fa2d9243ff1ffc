#include "mgpf/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace mgpf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Palette and shapes
// ---------------------------------------------------------------------------
const std::array<PaletteEntry, 11>& palette() {
    static const std::array<PaletteEntry, 11> p = {{{"red", 220, 40, 40},
                                                    {"green", 40, 180, 60},
                                                    {"blue", 50, 80, 220},
                                                    {"yellow", 235, 220, 50},
                                                    {"purple", 140, 60, 180},
                                                    {"orange", 240, 150, 40},
                                                    {"cyan", 60, 200, 210},
                                                    {"magenta", 220, 60, 200},
                                                    {"brown", 140, 90, 50},
                                                    {"pink", 245, 160, 190},
                                                    {"gray", 128, 128, 128}}};
    return p;
}

std::array<unsigned char, 3> background_color() { return {245, 245, 245}; }

int palette_index(const std::string& color_name) {
    const auto& p = palette();
    for (size_t i = 0; i < p.size(); ++i)
        if (color_name == p[i].name) return static_cast<int>(i);
    throw std::runtime_error("unknown palette color: " + color_name);
}

int nearest_palette_color(double r, double g, double b) {
    const auto& p = palette();
    int best = 0;
    double best_d = 1e18;
    for (size_t i = 0; i < p.size(); ++i) {
        double d = (r - p[i].r) * (r - p[i].r) + (g - p[i].g) * (g - p[i].g) + (b - p[i].b) * (b - p[i].b);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> s = {"circle", "square",  "triangle", "star",
                                               "cross",  "diamond", "ring",     "hexagon",
                                               "heart",  "crescent", "arrow",   "pentagon"};
    return s;
}

int shape_index(const std::string& name) {
    const auto& s = shape_names();
    for (size_t i = 0; i < s.size(); ++i)
        if (s[i] == name) return static_cast<int>(i);
    throw std::runtime_error("unknown shape: " + name);
}

namespace {

bool in_convex_polygon(const std::vector<std::pair<double, double>>& v, double x, double y) {
    int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
        auto [x1, y1] = v[i];
        auto [x2, y2] = v[(i + 1) % n];
        if ((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) < 0) return false;
    }
    return true;
}

std::vector<std::pair<double, double>> regular_polygon(int n, double phase) {
    std::vector<std::pair<double, double>> v;
    for (int i = 0; i < n; ++i) {
        double a = phase + 2.0 * M_PI * i / n;
        v.emplace_back(std::sin(a), -std::cos(a));  // clockwise in image coords
    }
    return v;
}

}  // namespace

bool shape_contains(int shape, double dx, double dy) {
    double rho2 = dx * dx + dy * dy;
    switch (shape) {
        case 0:  // circle
            return rho2 <= 1.0;
        case 1:  // square
            return std::max(std::abs(dx), std::abs(dy)) <= 0.88;
        case 2:  // triangle
            return in_convex_polygon({{0.0, -1.0}, {0.96, 0.78}, {-0.96, 0.78}}, dx, dy);
        case 3: {  // five-pointed star
            double ang = std::atan2(dx, -dy);  // 0 at the top spike
            if (ang < 0) ang += 2.0 * M_PI;
            double sector = std::fmod(ang, 2.0 * M_PI / 5.0);
            double off = std::abs(sector - M_PI / 5.0) / (M_PI / 5.0);  // 1 at spike, 0 at valley
            double limit = 0.42 + 0.58 * off;
            return std::sqrt(rho2) <= limit;
        }
        case 4:  // cross
            return (std::abs(dx) <= 0.34 && std::abs(dy) <= 1.0) ||
                   (std::abs(dy) <= 0.34 && std::abs(dx) <= 1.0);
        case 5:  // diamond
            return std::abs(dx) + std::abs(dy) <= 1.0;
        case 6:  // ring
            return rho2 <= 1.0 && rho2 >= 0.38 * 0.38;
        case 7:  // hexagon
            return in_convex_polygon(regular_polygon(6, 0.0), dx, dy);
        case 8: {  // heart
            double x = dx * 1.2, y = -dy * 1.2 + 0.25;
            double q = x * x + y * y - 0.75;
            return q * q * q - x * x * y * y * y <= 0.0;
        }
        case 9:  // crescent
            return rho2 <= 1.0 && ((dx - 0.55) * (dx - 0.55) + dy * dy) >= 0.72 * 0.72;
        case 10: {  // right-pointing arrow
            bool shaft = dx >= -1.0 && dx <= 0.25 && std::abs(dy) <= 0.3;
            bool head = dx >= 0.15 && dx <= 1.0 && std::abs(dy) <= (1.0 - dx) * 0.82;
            return shaft || head;
        }
        case 11:  // pentagon
            return in_convex_polygon(regular_polygon(5, 0.0), dx, dy);
        default:
            throw std::runtime_error("unknown shape index " + std::to_string(shape));
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------
std::pair<double, double> location_center(const std::string& location, int image_size) {
    double s = image_size;
    if (location == "field") return {0.50 * s, 0.82 * s};
    if (location == "park") return {0.17 * s, 0.80 * s};
    if (location == "sky") return {0.50 * s, 0.16 * s};
    if (location == "corner") return {0.84 * s, 0.18 * s};
    if (location == "meadow") return {0.83 * s, 0.78 * s};
    throw std::runtime_error("unknown location: " + location);
}

ImageU8 render_objects(const std::vector<PlacedObject>& objs, int image_size) {
    ImageU8 img(image_size, image_size, 3);
    auto bg = background_color();
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[c];
    for (const auto& o : objs) {
        const auto& col = palette()[o.color];
        unsigned char rgb[3] = {col.r, col.g, col.b};
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) {
                double dx = (x + 0.5 - o.cx) / o.r, dy = (y + 0.5 - o.cy) / o.r;
                if (std::abs(dx) > 1.3 || std::abs(dy) > 1.3) continue;
                if (shape_contains(o.shape, dx, dy))
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
            }
    }
    return img;
}

MaskGrid rasterize_mask(const PlacedObject& obj, int image_size) {
    MaskGrid m = MaskGrid::Zero(image_size, image_size);
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
            double dx = (x + 0.5 - obj.cx) / obj.r, dy = (y + 0.5 - obj.cy) / obj.r;
            if (std::abs(dx) > 1.3 || std::abs(dy) > 1.3) continue;
            if (shape_contains(obj.shape, dx, dy)) m(y, x) = 1;
        }
    return m;
}

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------
ImageU8 make_condition_image(const ImageU8& render, ConditionKind kind) {
    int h = render.h, w = render.w;
    ImageU8 out(h, w, 1);
    if (kind == ConditionKind::Edge) {
        std::vector<double> gray(static_cast<size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                gray[y * w + x] =
                    (render.at(y, x, 0) + render.at(y, x, 1) + render.at(y, x, 2)) / 3.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double gx = gray[y * w + std::min(x + 1, w - 1)] - gray[y * w + std::max(x - 1, 0)];
                double gy = gray[std::min(y + 1, h - 1) * w + x] - gray[std::max(y - 1, 0) * w + x];
                double mag = 0.5 * std::sqrt(gx * gx + gy * gy);
                out.at(y, x, 0) = mag > 16.0 ? 255 : 0;
            }
        return out;
    }
    // silhouette: one gray level per distinct foreground color, in order of
    // first appearance (scenes use distinct per-object colors)
    auto bg = background_color();
    std::vector<std::array<unsigned char, 3>> colors;
    auto level_of = [&](int y, int x) -> int {
        std::array<unsigned char, 3> c = {render.at(y, x, 0), render.at(y, x, 1), render.at(y, x, 2)};
        if (c == bg) return -1;
        for (size_t i = 0; i < colors.size(); ++i)
            if (colors[i] == c) return static_cast<int>(i);
        colors.push_back(c);
        return static_cast<int>(colors.size()) - 1;
    };
    std::vector<int> idx(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) idx[y * w + x] = level_of(y, x);
    int n = static_cast<int>(colors.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int i = idx[y * w + x];
            out.at(y, x, 0) =
                i < 0 ? 0 : static_cast<unsigned char>(std::lround(255.0 * (i + 1) / (n + 1)));
        }
    return out;
}

ConditionImage<float> to_condition(const ImageU8& gray, ConditionKind kind) {
    ConditionImage<float> c;
    c.kind = kind;
    c.grid = FeatureMap<float>(1, gray.h, gray.w);
    for (int y = 0; y < gray.h; ++y)
        for (int x = 0; x < gray.w; ++x)
            c.grid.data(0, y * gray.w + x) = static_cast<float>(gray.at(y, x, 0)) / 255.0f;
    return c;
}

// ---------------------------------------------------------------------------
// Scene construction
// ---------------------------------------------------------------------------
namespace {

PlacedObject place_with_budget(Rng& rng, const std::vector<PlacedObject>& placed, double lo_x,
                               double hi_x, double lo_y, double hi_y, double r_lo, double r_hi) {
    for (int tries = 0; tries < 100; ++tries) {
        PlacedObject o;
        o.r = r_lo + rng.uniform() * (r_hi - r_lo);
        o.cx = lo_x + rng.uniform() * (hi_x - lo_x);
        o.cy = lo_y + rng.uniform() * (hi_y - lo_y);
        bool ok = true;
        for (const auto& p : placed)
            if (std::hypot(p.cx - o.cx, p.cy - o.cy) < p.r + o.r + 3.0) ok = false;
        if (ok) return o;
    }
    throw PlacementFailureError();
}

std::vector<int> sample_distinct(Rng& rng, int n, int k) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    for (int i = 0; i < k; ++i) std::swap(all[i], all[rng.uniform_int(i, n - 1)]);
    all.resize(k);
    return all;
}

}  // namespace

namespace {
SceneSpec make_scene_once(Rng& rng, const std::string& split, int image_size,
                          const Vocabulary& vocab);
}

SceneSpec make_scene(Rng& rng, const std::string& split, int image_size, const Vocabulary& vocab) {
    for (int attempt = 0; attempt < 20; ++attempt) {
        try {
            return make_scene_once(rng, split, image_size, vocab);
        } catch (const PlacementFailureError&) {
            // crowded draw; rebuild the scene from fresh randomness
        }
    }
    throw PlacementFailureError();
}

namespace {
SceneSpec make_scene_once(Rng& rng, const std::string& split, int image_size,
                          const Vocabulary& vocab) {
    bool eval = split == "eval";
    SceneSpec sc;
    double s = image_size;

    int n_main = eval ? 2 : (rng.uniform() < 0.7 ? 2 : 1);
    bool has_trailing = eval ? true : rng.uniform() < 0.7;
    int n_distract = eval ? 1 : 0;

    int n_shapes = n_main + (has_trailing ? 1 : 0) + n_distract;
    auto shapes = sample_distinct(rng, static_cast<int>(shape_names().size()), n_shapes);
    auto colors = sample_distinct(rng, static_cast<int>(palette().size()), n_shapes);

    std::vector<PlacedObject> all;
    for (int i = 0; i < n_main; ++i) {
        double lo_x = n_main == 1 ? 0.25 * s : (i == 0 ? 0.14 * s : 0.58 * s);
        double hi_x = n_main == 1 ? 0.75 * s : (i == 0 ? 0.42 * s : 0.86 * s);
        PlacedObject o = place_with_budget(rng, all, lo_x, hi_x, 0.32 * s, 0.68 * s, 0.12 * s, 0.16 * s);
        o.shape = shapes[i];
        o.color = colors[i];
        all.push_back(o);
        sc.objects.push_back(o);
    }
    int next = n_main;
    if (has_trailing) {
        auto locs = vocab.words_of_kind(WordKind::Location);
        sc.trailing_location = locs[rng.uniform_int(0, static_cast<int>(locs.size()) - 1)];
        auto [lx, ly] = location_center(sc.trailing_location, image_size);
        PlacedObject o;
        o.shape = shapes[next];
        o.color = colors[next];
        o.r = (0.105 + rng.uniform() * 0.04) * s;
        o.cx = lx + (rng.uniform() - 0.5) * 0.06 * s;
        o.cy = ly + (rng.uniform() - 0.5) * 0.06 * s;
        // keep it fully in frame and clear of the masked objects
        o.cx = std::clamp(o.cx, 1.05 * o.r, s - 1.05 * o.r);
        o.cy = std::clamp(o.cy, 1.05 * o.r, s - 1.05 * o.r);
        for (const auto& p : all)
            if (std::hypot(p.cx - o.cx, p.cy - o.cy) < p.r + o.r + 3.0)
                throw PlacementFailureError();
        sc.trailing = o;
        sc.trailing_has_color = rng.uniform() < 0.5;
        all.push_back(o);
        ++next;
    }
    for (int i = 0; i < n_distract; ++i) {
        PlacedObject o = place_with_budget(rng, all, 0.14 * s, 0.86 * s, 0.14 * s, 0.86 * s,
                                           0.10 * s, 0.15 * s);
        o.shape = shapes[next];
        o.color = colors[next];
        sc.distractors.push_back(o);
        all.push_back(o);
        ++next;
    }
    return sc;
}
}  // namespace

std::string scene_prompt(const SceneSpec& scene, const Vocabulary& vocab) {
    (void)vocab;
    std::string p;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        if (i) p += " and ";
        p += "a " + std::string(palette()[scene.objects[i].color].name) + " " +
             shape_names()[scene.objects[i].shape];
    }
    if (scene.trailing) {
        p += ", a ";
        if (scene.trailing_has_color) p += std::string(palette()[scene.trailing->color].name) + " ";
        p += shape_names()[scene.trailing->shape] + " in the " + scene.trailing_location;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------
nlohmann::json BenchmarkCase::to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : masks) m[k] = v;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [c, o] : expected_pairs) pairs.push_back({c, o});
    return {{"id", id},         {"image", image},
            {"condition", condition}, {"masks", m},
            {"prompt", prompt}, {"expected_pairs", pairs},
            {"expected_extra", expected_extra}};
}

BenchmarkCase BenchmarkCase::from_json(const nlohmann::json& j) {
    BenchmarkCase c;
    c.id = j.at("id");
    c.image = j.at("image");
    c.condition = j.at("condition");
    for (auto& [k, v] : j.at("masks").items()) c.masks[k] = v;
    c.prompt = j.at("prompt");
    for (auto& p : j.at("expected_pairs")) c.expected_pairs.emplace_back(p.at(0), p.at(1));
    for (auto& e : j.at("expected_extra")) c.expected_extra.push_back(e);
    return c;
}

std::string generate_dataset(const std::string& dir, const std::string& split, int count,
                             std::uint64_t seed, int image_size, const std::string& condition_kind,
                             const Vocabulary& vocab) {
    if (count <= 0) throw std::runtime_error("count must be positive");
    ConditionKind kind = condition_kind_from(condition_kind);
    fs::create_directories(fs::path(dir) / split);
    std::string manifest_path = (fs::path(dir) / ("manifest_" + split + ".jsonl")).string();
    std::ofstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot write " + manifest_path);

    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        SceneSpec sc = make_scene(rng, split, image_size, vocab);

        std::vector<PlacedObject> gt = sc.objects;
        if (sc.trailing) gt.push_back(*sc.trailing);
        std::vector<PlacedObject> cond_objs = sc.objects;
        if (split != "eval" && sc.trailing) cond_objs.push_back(*sc.trailing);
        for (const auto& d : sc.distractors) cond_objs.push_back(d);

        ImageU8 image = render_objects(gt, image_size);
        ImageU8 cond = make_condition_image(render_objects(cond_objs, image_size), kind);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", split.c_str(), i);
        BenchmarkCase c;
        c.id = idbuf;
        c.prompt = scene_prompt(sc, vocab);
        c.image = (fs::path(dir) / split / (c.id + "_image.png")).string();
        c.condition = (fs::path(dir) / split / (c.id + "_cond.png")).string();
        write_png(c.image, image);
        write_png(c.condition, cond);
        for (const auto& o : sc.objects) {
            std::string name = shape_names()[o.shape];
            std::string mpath = (fs::path(dir) / split / (c.id + "_mask_" + name + ".png")).string();
            write_mask_png(mpath, rasterize_mask(o, image_size));
            c.masks[name] = mpath;
            c.expected_pairs.emplace_back(palette()[o.color].name, name);
        }
        if (sc.trailing) c.expected_extra.push_back(shape_names()[sc.trailing->shape]);
        manifest << c.to_json().dump() << "\n";
    }
    return manifest_path;
}

std::vector<BenchmarkCase> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest " + path);
    std::vector<BenchmarkCase> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(BenchmarkCase::from_json(nlohmann::json::parse(line)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------
MaskGrid erode_mask(const MaskGrid& m, int pixels) {
    MaskGrid cur = m;
    for (int it = 0; it < pixels; ++it) {
        MaskGrid next = cur;
        for (int y = 0; y < cur.rows(); ++y)
            for (int x = 0; x < cur.cols(); ++x) {
                if (!cur(y, x)) continue;
                bool edge = y == 0 || x == 0 || y == cur.rows() - 1 || x == cur.cols() - 1 ||
                            !cur(y - 1, x) || !cur(y + 1, x) || !cur(y, x - 1) || !cur(y, x + 1);
                if (edge) next(y, x) = 0;
            }
        cur = next;
    }
    return cur;
}

double eval_attribute_match(const ImageU8& image,
                            const std::vector<std::pair<std::string, std::string>>& pairs,
                            const std::map<std::string, MaskGrid>& masks) {
    if (pairs.empty()) return 1.0;
    int hits = 0;
    for (const auto& [color, object] : pairs) {
        auto it = masks.find(object);
        if (it == masks.end()) throw EmptyMaskRegionError(object);
        MaskGrid m = erode_mask(it->second, 2);
        double r = 0, g = 0, b = 0;
        long n = 0;
        for (int y = 0; y < m.rows(); ++y)
            for (int x = 0; x < m.cols(); ++x)
                if (m(y, x)) {
                    r += image.at(y, x, 0);
                    g += image.at(y, x, 1);
                    b += image.at(y, x, 2);
                    ++n;
                }
        if (n == 0) throw EmptyMaskRegionError(object);
        if (nearest_palette_color(r / n, g / n, b / n) == palette_index(color)) ++hits;
    }
    return static_cast<double>(hits) / pairs.size();
}

double eval_object_generation(const ImageU8& image, const std::vector<std::string>& expected_extra,
                              const std::map<std::string, MaskGrid>& masks,
                              const ShapeClassifier& classifier) {
    if (!classifier.trained()) throw ClassifierUnavailableError();
    if (expected_extra.empty()) return 1.0;
    int h = image.h, w = image.w;

    // exclusion region: union of object masks, dilated to bury boundary pixels
    MaskGrid excl = MaskGrid::Zero(h, w);
    for (const auto& [name, m] : masks)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m(y, x)) excl(y, x) = 1;
    for (int it = 0; it < 2; ++it) {
        MaskGrid next = excl;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (!excl(y, x)) {
                    bool nb = (y > 0 && excl(y - 1, x)) || (y + 1 < h && excl(y + 1, x)) ||
                              (x > 0 && excl(y, x - 1)) || (x + 1 < w && excl(y, x + 1));
                    if (nb) next(y, x) = 1;
                }
        excl = next;
    }

    auto bg = background_color();
    MaskGrid fg = MaskGrid::Zero(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (excl(y, x)) continue;
            double d = std::hypot(static_cast<double>(image.at(y, x, 0)) - bg[0],
                                  std::hypot(static_cast<double>(image.at(y, x, 1)) - bg[1],
                                             static_cast<double>(image.at(y, x, 2)) - bg[2]));
            if (d > 60.0) fg(y, x) = 1;
        }

    // connected components (4-neighborhood) with a small area floor
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<std::pair<int, MaskGrid>> blobs;  // (area, component mask)
    std::vector<int> stack;
    int next_label = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!fg(y, x) || label[y * w + x] >= 0) continue;
            MaskGrid comp = MaskGrid::Zero(h, w);
            int area = 0;
            stack.assign(1, y * w + x);
            label[y * w + x] = next_label;
            while (!stack.empty()) {
                int p = stack.back();
                stack.pop_back();
                int py = p / w, px = p % w;
                comp(py, px) = 1;
                ++area;
                const int ns[4][2] = {{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}};
                for (auto& nb : ns) {
                    if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
                    int q = nb[0] * w + nb[1];
                    if (fg(nb[0], nb[1]) && label[q] < 0) {
                        label[q] = next_label;
                        stack.push_back(q);
                    }
                }
            }
            ++next_label;
            if (area >= 12) blobs.emplace_back(area, std::move(comp));
        }

    int hits = 0;
    for (const auto& name : expected_extra) {
        int want = shape_index(name);
        bool found = false;
        for (const auto& [area, comp] : blobs) {
            // crop to the blob's bounding box
            int y0 = h, y1 = -1, x0 = w, x1 = -1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (comp(y, x)) {
                        y0 = std::min(y0, y);
                        y1 = std::max(y1, y);
                        x0 = std::min(x0, x);
                        x1 = std::max(x1, x);
                    }
            MaskGrid crop = comp.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1);
            Vec<double> probs = classifier.predict(crop);
            if (probs[want] > 0.5) {
                found = true;
                break;
            }
        }
        if (found) ++hits;
    }
    return static_cast<double>(hits) / expected_extra.size();
}

double sign_test_p(int wins, int losses) {
    int n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return std::min(p, 1.0);
}

}  // namespace mgpf
