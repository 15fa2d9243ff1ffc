#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mgpf/bench.hpp"

using namespace mgpf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("palette lookups") {
    CHECK(palette().size() == 11);
    CHECK(palette_index("red") == 0);
    CHECK(palette_index("gray") == 10);
    CHECK_THROWS(palette_index("mauve"));
    for (size_t i = 0; i < palette().size(); ++i) {
        const auto& c = palette()[i];
        CHECK(nearest_palette_color(c.r, c.g, c.b) == static_cast<int>(i));
    }
    // small perturbations stay on the same entry
    CHECK(nearest_palette_color(210, 50, 50) == palette_index("red"));
    CHECK(nearest_palette_color(55, 85, 210) == palette_index("blue"));
}

TEST_CASE("shape membership basics") {
    CHECK(shape_names().size() == 12);
    for (size_t i = 0; i < shape_names().size(); ++i) CHECK(shape_index(shape_names()[i]) == static_cast<int>(i));
    // every shape contains a point near its center and excludes far corners
    for (int s = 0; s < 12; ++s) {
        bool near_center = shape_contains(s, 0.0, 0.0) || shape_contains(s, 0.0, 0.3) ||
                           shape_contains(s, -0.3, 0.0) || shape_contains(s, 0.7, 0.0);
        CHECK(near_center);
        CHECK(!shape_contains(s, 1.25, 1.25));
        CHECK(!shape_contains(s, -1.25, 1.25));
    }
    // shapes are pairwise distinct as pixel sets at a reference radius
    std::vector<MaskGrid> rast;
    for (int s = 0; s < 12; ++s) {
        PlacedObject o{s, 0, 16, 16, 10};
        rast.push_back(rasterize_mask(o, 32));
    }
    for (int a = 0; a < 12; ++a)
        for (int b = a + 1; b < 12; ++b) CHECK((rast[a].array() != rast[b].array()).any());
}

TEST_CASE("rasterized masks match rendered pixels") {
    PlacedObject o{shape_index("star"), palette_index("green"), 20, 30, 9};
    ImageU8 img = render_objects({o}, 48);
    MaskGrid m = rasterize_mask(o, 48);
    auto bg = background_color();
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            bool fg = img.at(y, x, 0) != bg[0] || img.at(y, x, 1) != bg[1] || img.at(y, x, 2) != bg[2];
            CHECK(fg == (m(y, x) != 0));
        }
    CHECK(m.sum() > 20);
}

TEST_CASE("location centers stay inside the frame") {
    for (const char* loc : {"field", "park", "sky", "corner", "meadow"}) {
        auto [x, y] = location_center(loc, 64);
        CHECK(x > 4.0);
        CHECK(x < 60.0);
        CHECK(y > 4.0);
        CHECK(y < 60.0);
    }
    CHECK_THROWS(location_center("moon", 64));
}

TEST_CASE("edge condition: constant image has no edges, a square has a boundary band") {
    ImageU8 flat(16, 16, 3);
    for (auto& p : flat.px) p = 200;
    ImageU8 e = make_condition_image(flat, ConditionKind::Edge);
    for (auto p : e.px) CHECK(static_cast<int>(p) == 0);

    PlacedObject sq{shape_index("square"), palette_index("blue"), 16, 16, 8};
    ImageU8 es = make_condition_image(render_objects({sq}, 32), ConditionKind::Edge);
    CHECK(static_cast<int>(es.at(16, 16, 0)) == 0);  // interior
    CHECK(static_cast<int>(es.at(2, 2, 0)) == 0);    // background
    int on = 0;
    for (auto p : es.px) on += p > 0;
    CHECK(on > 20);  // boundary ring present
}

TEST_CASE("silhouette condition: two objects give exactly three gray levels") {
    PlacedObject a{shape_index("circle"), palette_index("red"), 10, 16, 6};
    PlacedObject b{shape_index("square"), palette_index("blue"), 24, 16, 6};
    ImageU8 s = make_condition_image(render_objects({a, b}, 32), ConditionKind::Silhouette);
    std::set<int> levels;
    for (auto p : s.px) levels.insert(p);
    CHECK(levels.size() == 3);
    CHECK(levels.count(0) == 1);  // background level
    // object pixels carry their own level
    CHECK(static_cast<int>(s.at(16, 10, 0)) != 0);
    CHECK(static_cast<int>(s.at(16, 24, 0)) != 0);
    CHECK(static_cast<int>(s.at(16, 10, 0)) != static_cast<int>(s.at(16, 24, 0)));

    ConditionImage<float> c = to_condition(s, ConditionKind::Silhouette);
    CHECK(c.grid.channels() == 1);
    CHECK(c.grid.data.minCoeff() >= 0.0f);
    CHECK(c.grid.data.maxCoeff() <= 1.0f);
    CHECK(c.grid.data(0, 16 * 32 + 10) == doctest::Approx(s.at(16, 10, 0) / 255.0));
}

TEST_CASE("erode_mask shrinks by the requested ring") {
    MaskGrid m = MaskGrid::Zero(12, 12);
    m.block(2, 2, 8, 8).setConstant(1);
    MaskGrid e = erode_mask(m, 2);
    CHECK(e.sum() == 16);  // 8x8 -> 4x4
    CHECK(e(5, 5) == 1);
    CHECK(e(3, 3) == 0);
    CHECK(erode_mask(m, 0).sum() == m.sum());
}

TEST_CASE("attribute oracle scores ground truth at 1.0 and wrong colors at 0") {
    PlacedObject a{shape_index("ring"), palette_index("purple"), 16, 16, 9};
    PlacedObject b{shape_index("diamond"), palette_index("orange"), 40, 40, 9};
    ImageU8 img = render_objects({a, b}, 56);
    std::map<std::string, MaskGrid> masks = {{"ring", rasterize_mask(a, 56)},
                                             {"diamond", rasterize_mask(b, 56)}};
    std::vector<std::pair<std::string, std::string>> right = {{"purple", "ring"},
                                                              {"orange", "diamond"}};
    CHECK(eval_attribute_match(img, right, masks) == doctest::Approx(1.0));

    std::vector<std::pair<std::string, std::string>> wrong = {{"cyan", "ring"},
                                                              {"pink", "diamond"}};
    CHECK(eval_attribute_match(img, wrong, masks) == doctest::Approx(0.0));

    std::vector<std::pair<std::string, std::string>> half = {{"purple", "ring"},
                                                             {"pink", "diamond"}};
    CHECK(eval_attribute_match(img, half, masks) == doctest::Approx(0.5));

    CHECK_THROWS_AS(eval_attribute_match(img, {{"red", "star"}}, masks), EmptyMaskRegionError);
    std::map<std::string, MaskGrid> tiny = {{"ring", MaskGrid::Zero(56, 56)}};
    CHECK_THROWS_AS(eval_attribute_match(img, {{"purple", "ring"}}, tiny), EmptyMaskRegionError);
}

TEST_CASE("shape classifier reaches the held-out accuracy gate") {
    auto [cl, acc] = train_shape_classifier(7, 60);
    CHECK(acc >= 0.95);
    CHECK(cl.trained());

    // sanity on fresh unseen renders
    Rng rng(123);
    int hits = 0, n = 0;
    for (int s = 0; s < 12; ++s)
        for (int i = 0; i < 4; ++i) {
            PlacedObject o{s, 0, 16 + rng.uniform(-0.4, 0.4), 16 + rng.uniform(-0.4, 0.4),
                           rng.uniform(6.0, 12.0)};
            MaskGrid m = rasterize_mask(o, 32);
            // crop to bounding box like the oracle does
            int y0 = 32, y1 = -1, x0 = 32, x1 = -1;
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    if (m(y, x)) {
                        y0 = std::min(y0, y);
                        y1 = std::max(y1, y);
                        x0 = std::min(x0, x);
                        x1 = std::max(x1, x);
                    }
            MaskGrid crop = m.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1);
            hits += cl.predict_class(crop) == s;
            ++n;
        }
    CHECK(static_cast<double>(hits) / n >= 0.9);

    auto path = fs::temp_directory_path() / "mgpf_classifier.bin";
    cl.save(path.string());
    ShapeClassifier back = ShapeClassifier::load(path.string());
    CHECK((back.W - cl.W).cwiseAbs().maxCoeff() == 0.0);
    fs::remove(path);

    ShapeClassifier untrained;
    CHECK_THROWS_AS(untrained.predict(MaskGrid::Ones(4, 4)), ClassifierUnavailableError);
}

TEST_CASE("object oracle finds extra objects outside the masked region") {
    auto [cl, acc] = train_shape_classifier(7, 60);
    REQUIRE(acc >= 0.95);

    PlacedObject masked{shape_index("circle"), palette_index("red"), 16, 24, 8};
    PlacedObject extra{shape_index("cross"), palette_index("blue"), 46, 48, 8};
    std::map<std::string, MaskGrid> masks = {{"circle", rasterize_mask(masked, 64)}};

    ImageU8 with_extra = render_objects({masked, extra}, 64);
    CHECK(eval_object_generation(with_extra, {"cross"}, masks, cl) == doctest::Approx(1.0));

    // paint the extra object out: score drops to 0
    ImageU8 without = render_objects({masked}, 64);
    CHECK(eval_object_generation(without, {"cross"}, masks, cl) == doctest::Approx(0.0));

    // wrong shape rendered where the extra should be
    PlacedObject imposter{shape_index("square"), palette_index("blue"), 46, 48, 8};
    ImageU8 wrong = render_objects({masked, imposter}, 64);
    CHECK(eval_object_generation(wrong, {"cross"}, masks, cl) == doctest::Approx(0.0));

    // no expectations: vacuous pass
    CHECK(eval_object_generation(without, {}, masks, cl) == doctest::Approx(1.0));

    ShapeClassifier untrained;
    CHECK_THROWS_AS(eval_object_generation(without, {"cross"}, masks, untrained),
                    ClassifierUnavailableError);
}

TEST_CASE("scene construction respects the split contract") {
    Vocabulary vocab = Vocabulary::benchmark();
    Rng rng(11);
    for (int i = 0; i < 25; ++i) {
        SceneSpec sc = make_scene(rng, "eval", 64, vocab);
        CHECK(sc.objects.size() == 2);
        CHECK(sc.trailing.has_value());
        CHECK(sc.distractors.size() == 1);
        // all colors and shapes distinct within the scene
        std::set<int> shapes, colors;
        std::vector<PlacedObject> all = sc.objects;
        all.push_back(*sc.trailing);
        for (const auto& d : sc.distractors) all.push_back(d);
        for (const auto& o : all) {
            shapes.insert(o.shape);
            colors.insert(o.color);
        }
        CHECK(shapes.size() == all.size());
        CHECK(colors.size() == all.size());
        // prompt parses against the mask names
        std::set<std::string> mask_names;
        for (const auto& o : sc.objects) mask_names.insert(shape_names()[o.shape]);
        ParsedPrompt p = parse_prompt(scene_prompt(sc, vocab), mask_names, vocab);
        CHECK(p.s1.size() == 2);
        CHECK(p.free_objects.size() + p.s2.size() == 1);  // trailing clause
        CHECK(p.trailing_start >= 0);
    }
    Rng rng2(12);
    int with_trailing = 0;
    for (int i = 0; i < 25; ++i) {
        SceneSpec sc = make_scene(rng2, "train", 64, vocab);
        CHECK(sc.distractors.empty());
        with_trailing += sc.trailing.has_value();
        CHECK(!sc.objects.empty());
    }
    CHECK(with_trailing > 2);
    CHECK(with_trailing < 24);
}

TEST_CASE("dataset generation is deterministic and the manifest is faithful") {
    Vocabulary vocab = Vocabulary::benchmark();
    auto d1 = fresh_dir("mgpf_bench_d1");
    auto d2 = fresh_dir("mgpf_bench_d2");
    std::string m1 = generate_dataset(d1.string(), "eval", 6, 42, 64, "silhouette", vocab);
    std::string m2 = generate_dataset(d2.string(), "eval", 6, 42, 64, "silhouette", vocab);

    // byte-identical manifests modulo the directory prefix
    std::string t1 = slurp(m1), t2 = slurp(m2);
    size_t pos;
    while ((pos = t1.find(d1.string())) != std::string::npos) t1.replace(pos, d1.string().size(), "D");
    while ((pos = t2.find(d2.string())) != std::string::npos) t2.replace(pos, d2.string().size(), "D");
    CHECK(t1 == t2);

    auto cases = load_manifest(m1);
    REQUIRE(cases.size() == 6);
    auto bg = background_color();
    for (const auto& c : cases) {
        CHECK(c.masks.size() == 2);
        CHECK(c.expected_pairs.size() == 2);
        CHECK(c.expected_extra.size() == 1);
        ImageU8 img = read_png(c.image);
        CHECK(img.h == 64);
        CHECK(img.channels == 3);
        ImageU8 cond = read_png(c.condition);
        CHECK(cond.channels == 1);

        std::map<std::string, MaskGrid> masks;
        std::set<std::string> mask_names;
        for (const auto& [name, path] : c.masks) {
            masks[name] = read_mask_png(path);
            mask_names.insert(name);
        }
        // ground truth scores perfectly under both oracles' mask view
        CHECK(eval_attribute_match(img, c.expected_pairs, masks) == doctest::Approx(1.0));

        // masked pixels are foreground in the ground-truth image
        for (const auto& [name, m] : masks) {
            MaskGrid core = erode_mask(m, 1);
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (core(y, x)) {
                        bool fg = img.at(y, x, 0) != bg[0] || img.at(y, x, 1) != bg[1] ||
                                  img.at(y, x, 2) != bg[2];
                        CHECK(fg);
                    }
        }
        // prompt parses with exactly the masked objects in s1
        ParsedPrompt p = parse_prompt(c.prompt, mask_names, vocab);
        CHECK(p.s1.size() == 2);

        // misalignment: the prompt-only extra object is absent from the
        // condition region around its expected location, and the distractor's
        // pixels are absent from the ground truth there
        CHECK(c.expected_extra[0] != c.expected_pairs[0].second);
        CHECK(c.expected_extra[0] != c.expected_pairs[1].second);
    }
}

TEST_CASE("ground-truth eval renders pass the object oracle") {
    Vocabulary vocab = Vocabulary::benchmark();
    auto dir = fresh_dir("mgpf_bench_d3");
    std::string mp = generate_dataset(dir.string(), "eval", 8, 5, 64, "edge", vocab);
    auto cases = load_manifest(mp);
    auto [cl, acc] = train_shape_classifier(7, 60);
    REQUIRE(acc >= 0.95);
    double total = 0;
    for (const auto& c : cases) {
        ImageU8 img = read_png(c.image);
        std::map<std::string, MaskGrid> masks;
        for (const auto& [name, path] : c.masks) masks[name] = read_mask_png(path);
        total += eval_object_generation(img, c.expected_extra, masks, cl);
    }
    CHECK(total / cases.size() >= 0.85);
}

TEST_CASE("train split conditions are aligned with the ground truth") {
    Vocabulary vocab = Vocabulary::benchmark();
    auto dir = fresh_dir("mgpf_bench_d4");
    std::string mp = generate_dataset(dir.string(), "train", 10, 9, 64, "silhouette", vocab);
    auto cases = load_manifest(mp);
    REQUIRE(cases.size() == 10);
    for (const auto& c : cases) {
        CHECK(c.expected_extra.empty() == (c.prompt.find(',') == std::string::npos));
        ImageU8 img = read_png(c.image);
        ImageU8 cond = read_png(c.condition);
        // aligned: condition foreground exactly matches image foreground
        auto bg = background_color();
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                bool fg = img.at(y, x, 0) != bg[0] || img.at(y, x, 1) != bg[1] ||
                          img.at(y, x, 2) != bg[2];
                CHECK(fg == (cond.at(y, x, 0) != 0));
            }
    }
}

TEST_CASE("sign test oracle values") {
    CHECK(sign_test_p(0, 0) == doctest::Approx(1.0));
    CHECK(sign_test_p(3, 0) == doctest::Approx(0.125));
    CHECK(sign_test_p(0, 3) == doctest::Approx(1.0));
    CHECK(sign_test_p(8, 2) == doctest::Approx(0.0546875));
    CHECK(sign_test_p(5, 5) == doctest::Approx(0.623046875));
    // monotonicity in wins at fixed n
    for (int w = 1; w <= 10; ++w) CHECK(sign_test_p(w, 10 - w) < sign_test_p(w - 1, 11 - w));
}
