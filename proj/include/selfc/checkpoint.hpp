#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace selfc {

struct NamedTensor {
    std::string name;
    torch::Tensor value;
};

/// On disk a checkpoint is a directory with three files:
///   manifest.txt  `selfc-checkpoint <version>`, `iteration <n>`, then one
///                 `tensor <name> <dtype> <shape> <offset> <nbytes>` line per array
///                 (shape is `d0,d1,...`, or `-` for a scalar)
///   blob.bin      every array back to back, little-endian, row-major
///   config.txt    the training configuration snapshot
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    int64_t iteration = 0;
    std::vector<NamedTensor> tensors;
    std::string config_text;

    /// nullptr when absent.
    const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
/// Throws CheckpointError on a missing, truncated or inconsistent directory.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace selfc
