#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgpf/control.hpp"
#include "mgpf/io.hpp"
#include "mgpf/mask.hpp"
#include "mgpf/prompt.hpp"
#include "mgpf/rng.hpp"

#include <json.hpp>

namespace mgpf {

struct PlacementFailureError : std::runtime_error {
    PlacementFailureError() : std::runtime_error("PlacementFailure: retry budget exhausted") {}
};
struct EmptyMaskRegionError : std::runtime_error {
    explicit EmptyMaskRegionError(const std::string& n) : std::runtime_error("EmptyMaskRegion: " + n) {}
};
struct ClassifierUnavailableError : std::runtime_error {
    ClassifierUnavailableError() : std::runtime_error("ClassifierUnavailable") {}
};

// ---------------------------------------------------------------------------
// Closed palette and shape list matching the benchmark vocabulary.
// ---------------------------------------------------------------------------
struct PaletteEntry {
    const char* name;
    unsigned char r, g, b;
};
const std::array<PaletteEntry, 11>& palette();
std::array<unsigned char, 3> background_color();
int palette_index(const std::string& color_name);
/// Nearest palette color by squared RGB distance.
int nearest_palette_color(double r, double g, double b);

const std::vector<std::string>& shape_names();
int shape_index(const std::string& name);
/// Unit-coordinate membership test; (dx, dy) in [-1, 1] relative to center.
bool shape_contains(int shape, double dx, double dy);

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------
struct PlacedObject {
    int shape = 0;
    int color = 0;
    double cx = 0, cy = 0, r = 8;
};

struct SceneSpec {
    std::vector<PlacedObject> objects;  // prompt-aligned, masked
    std::optional<PlacedObject> trailing;  // prompt-only (eval) or fully aligned (train)
    std::string trailing_location;
    bool trailing_has_color = false;
    std::vector<PlacedObject> distractors;  // condition-only
};

/// Region center for a location word, in pixels at the given image size.
std::pair<double, double> location_center(const std::string& location, int image_size);

ImageU8 render_objects(const std::vector<PlacedObject>& objs, int image_size);
MaskGrid rasterize_mask(const PlacedObject& obj, int image_size);

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------
ImageU8 make_condition_image(const ImageU8& render, ConditionKind kind);
ConditionImage<float> to_condition(const ImageU8& gray, ConditionKind kind);

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------
struct BenchmarkCase {
    std::string id;
    std::string image;      // ground-truth render path
    std::string condition;  // condition image path
    std::map<std::string, std::string> masks;  // object word -> mask path
    std::string prompt;
    std::vector<std::pair<std::string, std::string>> expected_pairs;  // (color, object)
    std::vector<std::string> expected_extra;

    nlohmann::json to_json() const;
    static BenchmarkCase from_json(const nlohmann::json& j);
};

/// Writes case files under dir and returns the manifest path
/// (<dir>/manifest_<split>.jsonl). split is "train" (fully aligned) or "eval"
/// (condition-only distractor + prompt-only trailing object per case).
std::string generate_dataset(const std::string& dir, const std::string& split, int count,
                             std::uint64_t seed, int image_size, const std::string& condition_kind,
                             const Vocabulary& vocab);

std::vector<BenchmarkCase> load_manifest(const std::string& path);

/// Scene construction without file output (used by the generator and tests).
SceneSpec make_scene(Rng& rng, const std::string& split, int image_size, const Vocabulary& vocab);
std::string scene_prompt(const SceneSpec& scene, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------
MaskGrid erode_mask(const MaskGrid& m, int pixels);

/// Fraction of (color, object) pairs whose mean masked color maps to the
/// expected palette entry. Masks are eroded 2 px before averaging.
double eval_attribute_match(const ImageU8& image,
                            const std::vector<std::pair<std::string, std::string>>& pairs,
                            const std::map<std::string, MaskGrid>& masks);

class ShapeClassifier {
public:
    static constexpr int kGrid = 16;
    static constexpr int kFeatures = kGrid * kGrid + 1;

    ShapeClassifier() = default;

    /// Class probabilities for a binary silhouette crop.
    Vec<double> predict(const MaskGrid& crop) const;
    int predict_class(const MaskGrid& crop) const;
    bool trained() const { return W.size() != 0; }

    void save(const std::string& path) const;
    static ShapeClassifier load(const std::string& path);

    static Vec<double> features(const MaskGrid& crop);

    Mat<double> W;  // num_shapes x kFeatures
};

/// Trains on procedurally rendered silhouettes; returns the classifier and its
/// held-out accuracy (the oracle-quality gate).
std::pair<ShapeClassifier, double> train_shape_classifier(std::uint64_t seed, int per_class = 160);

/// Fraction of expected extra objects found as a correctly classified blob in
/// the region outside the union of object masks.
double eval_object_generation(const ImageU8& image, const std::vector<std::string>& expected_extra,
                              const std::map<std::string, MaskGrid>& masks,
                              const ShapeClassifier& classifier);

/// One-sided exact sign test: P(wins >= observed | wins+losses fair coin).
double sign_test_p(int wins, int losses);

}  // namespace mgpf
