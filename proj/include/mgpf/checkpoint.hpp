#pragma once

#include <map>
#include <string>

#include "mgpf/nn.hpp"

#include <json.hpp>

namespace mgpf {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& m) : std::runtime_error("CheckpointError: " + m) {}
};
struct MissingCheckpointError : std::runtime_error {
    explicit MissingCheckpointError(const std::string& p)
        : std::runtime_error("MissingCheckpoint: " + p) {}
};

/// Named float tensors plus a JSON header (architecture hyperparams, vocabulary
/// hash, schedule hash, and for branch checkpoints a link to the denoiser).
struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, MatF> params;

    static Checkpoint from(ParamList<float>& list, nlohmann::json header);
    /// Copies values into `list`; every parameter must match by name and shape.
    void apply(ParamList<float>& list) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over the file bytes, as fixed-width hex.
std::string file_hash(const std::string& path);

}  // namespace mgpf
