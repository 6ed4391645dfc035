#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "gptrans/config.hpp"
#include "gptrans/networks.hpp"

namespace gptrans {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Single-file container:
//
//   "GPTRCKPT"                      8-byte magic
//   u32   format version
//   u64   header length, then the UTF-8 JSON header (keys sorted)
//   u32   array count, then per array in name order:
//         u32 name length, name bytes, u32 ndim, i64 dims[ndim],
//         u64 element count, f32 values[count]
//   u64   FNV-1a 64 of every preceding byte
//
// All integers and floats are little endian.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string stage;  // "stage1" | "stage2"
    Config config;
    std::int64_t iteration = 0;
    nlohmann::json rng = nlohmann::json::object();  // sampler and noise-stream state
    std::string perceptual;
    bool mapper_trained = false;
    std::string mapper_criterion;
    std::map<std::string, std::int64_t> optimizer_steps;
    std::vector<std::pair<std::string, torch::Tensor>> arrays;  // float32, sorted by name

    const torch::Tensor& array(const std::string& name) const;
    bool has_array(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on truncation, corruption or a version mismatch;
// nothing is returned unless the whole file decoded.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Atomic: writes `path.tmp` then renames over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string stage_tag(int stage);

// Named optimiser whose moments travel with the checkpoint.
struct NamedOptimizer {
    std::string name;
    torch::optim::Adam* optimizer;
    std::vector<std::pair<std::string, torch::Tensor>> params;  // canonical names, same order as the optimiser
};

// Snapshot of every network parameter plus optimiser moments.
Checkpoint snapshot(const NetworkBundle& bundle, const std::vector<NamedOptimizer>& optimizers,
                    std::int64_t iteration, const nlohmann::json& rng, const std::string& perceptual);

// Rebuilds the bundle stored in a checkpoint. `expected_stage` (1 or 2)
// rejects a checkpoint of the other stage.
NetworkBundle restore_bundle(const Checkpoint& ckpt, int expected_stage);

// Copies the stored moments back into the optimisers.
void restore_optimizers(const Checkpoint& ckpt, const std::vector<NamedOptimizer>& optimizers);

// Copies every "<prefix>." array into the module's parameters (used to load
// the stage I content encoder into a stage II bundle).
void load_module_arrays(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

} // namespace gptrans
