#pragma once

// Single-file checkpoint container:
//   "VIPCKPT\0" | u32 version | u64 manifest length | JSON manifest | blob
// The manifest lists each tensor's name, shape, byte offset into the blob,
// and trainable flag. The blob holds little-endian float32 values.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vipcap/training.hpp"

namespace vipcap {

struct CheckpointTensor {
    std::string name;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    bool trainable = false;
    std::vector<float> data;  // row-major

    bool operator==(const CheckpointTensor&) const = default;
};

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;

    bool operator==(const RngState&) const = default;
};

struct Checkpoint {
    TrainConfig config;
    std::vector<std::string> vocab;
    std::uint64_t step = 0;
    RngState rng;
    std::vector<CheckpointTensor> tensors;  // sorted by name
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(const TrainConfig& cfg, const CaptionModel& model, std::uint64_t step);
/// Rebuilds the model; parameters are the stored float32 values widened to double.
CaptionModel model_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Bitwise equality of everything stored in the container.
bool same_contents(const Checkpoint& a, const Checkpoint& b);

}  // namespace vipcap
