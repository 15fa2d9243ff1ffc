#pragma once

#include <string>
#include <vector>

#include "mgpf/bench.hpp"
#include "mgpf/sampler.hpp"

#include <json.hpp>

namespace mgpf {

/// One flag combination of the ablation grid with its per-case scores
/// (each averaged over the sampled seeds).
struct StudyRow {
    bool mc = false, ll = false, ml = false;
    std::vector<double> attr_cases, obj_cases;
    double attr_mean = 0.0, obj_mean = 0.0;

    std::string label() const;
};

struct StudyResult {
    std::vector<StudyRow> rows;  // 8 rows, baseline (all off) first

    const StudyRow& baseline() const { return rows.front(); }
    const StudyRow* find(bool mc, bool ll, bool ml) const;

    nlohmann::json to_json() const;
    std::string table() const;
};

/// Samples every case under all 8 guidance-flag combinations and scores the
/// guided images with both oracles.
StudyResult run_ablation(const std::vector<BenchmarkCase>& cases, const Vocabulary& vocab,
                         UNet<float>& unet, ControlBranch<float>& branch,
                         const TextEmbedder<float>& emb, const NoiseSchedule& sched,
                         const ShapeClassifier& classifier, const GuidanceConfig& base,
                         int num_steps, int num_seeds, std::uint64_t base_seed);

/// Paired comparison for sign tests: (wins, losses) counting cases where
/// a[i] > b[i] and a[i] < b[i].
std::pair<int, int> paired_wins(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mgpf
