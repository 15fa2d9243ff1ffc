#include "mgpf/study.hpp"

#include <cstdio>

namespace mgpf {

std::string StudyRow::label() const {
    if (!mc && !ll && !ml) return "baseline";
    std::string s;
    if (mc) s += "+MC";
    if (ll) s += "+LL";
    if (ml) s += "+ML";
    return s;
}

const StudyRow* StudyResult::find(bool mc, bool ll, bool ml) const {
    for (const auto& r : rows)
        if (r.mc == mc && r.ll == ll && r.ml == ml) return &r;
    return nullptr;
}

nlohmann::json StudyResult::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"label", r.label()},
                          {"mc", r.mc},
                          {"ll", r.ll},
                          {"ml", r.ml},
                          {"attribute_match", r.attr_mean},
                          {"object_generation", r.obj_mean},
                          {"delta_attribute", r.attr_mean - baseline().attr_mean},
                          {"delta_object", r.obj_mean - baseline().obj_mean},
                          {"attr_cases", r.attr_cases},
                          {"obj_cases", r.obj_cases}});
    return {{"rows", rows_j}};
}

std::string StudyResult::table() const {
    std::string out = "config        attr    d-attr   obj     d-obj\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-12s  %.4f  %+.4f  %.4f  %+.4f\n", r.label().c_str(),
                      r.attr_mean, r.attr_mean - baseline().attr_mean, r.obj_mean,
                      r.obj_mean - baseline().obj_mean);
        out += line;
    }
    return out;
}

std::pair<int, int> paired_wins(const std::vector<double>& a, const std::vector<double>& b) {
    int wins = 0, losses = 0;
    for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
        if (a[i] > b[i]) ++wins;
        if (a[i] < b[i]) ++losses;
    }
    return {wins, losses};
}

StudyResult run_ablation(const std::vector<BenchmarkCase>& cases, const Vocabulary& vocab,
                         UNet<float>& unet, ControlBranch<float>& branch,
                         const TextEmbedder<float>& emb, const NoiseSchedule& sched,
                         const ShapeClassifier& classifier, const GuidanceConfig& base,
                         int num_steps, int num_seeds, std::uint64_t base_seed) {
    int s = unet.config().image_size;
    std::vector<std::pair<int, int>> levels = {{s, s}, {s / 2, s / 2}, {s / 4, s / 4}};

    StudyResult result;
    const bool grid[8][3] = {{false, false, false}, {true, false, false}, {false, true, false},
                             {false, false, true},  {true, true, false},  {true, false, true},
                             {false, true, true},   {true, true, true}};
    for (auto& flags : grid) {
        StudyRow row;
        row.mc = flags[0];
        row.ll = flags[1];
        row.ml = flags[2];
        result.rows.push_back(row);
    }

    for (size_t ci = 0; ci < cases.size(); ++ci) {
        const BenchmarkCase& c = cases[ci];
        ConditionImage<float> cond = to_condition(read_png(c.condition), ConditionKind::Silhouette);
        std::map<std::string, MaskGrid> masks;
        std::set<std::string> mask_names;
        std::vector<ObjectMask> mask_list;
        for (const auto& [name, path] : c.masks) {
            masks[name] = read_mask_png(path);
            mask_names.insert(name);
            mask_list.push_back({name, masks[name]});
        }
        MaskSet maskset = MaskSet::build(mask_list, s, s, levels);
        ParsedPrompt prompt = parse_prompt(c.prompt, mask_names, vocab);
        Mat<float> e = emb.embed(prompt.tokens);
        Mat<float> e_null = emb.embed({});

        for (auto& row : result.rows) {
            GuidanceConfig gc = base;
            gc.enable_MC = row.mc;
            gc.enable_LL = row.ll;
            gc.enable_ML = row.ml;
            GuidanceEngine<float> engine(vocab, gc);
            double attr = 0, obj = 0;
            for (int si = 0; si < num_seeds; ++si) {
                std::uint64_t seed = base_seed + 1000 * ci + si;
                auto res = mgpf_sample(prompt, e, e_null, cond, maskset, sched, num_steps, seed,
                                       engine, unet, branch);
                ImageU8 img = feature_to_image(res.guided_image);
                attr += eval_attribute_match(img, c.expected_pairs, masks);
                obj += eval_object_generation(img, c.expected_extra, masks, classifier);
            }
            row.attr_cases.push_back(attr / num_seeds);
            row.obj_cases.push_back(obj / num_seeds);
        }
    }
    for (auto& row : result.rows) {
        double a = 0, o = 0;
        for (size_t i = 0; i < row.attr_cases.size(); ++i) {
            a += row.attr_cases[i];
            o += row.obj_cases[i];
        }
        row.attr_mean = row.attr_cases.empty() ? 0 : a / row.attr_cases.size();
        row.obj_mean = row.obj_cases.empty() ? 0 : o / row.obj_cases.size();
    }
    return result;
}

}  // namespace mgpf
