#ifndef NNPM_CHECKPOINT_HPP
#define NNPM_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace nnpm {

// Named block container used for model weights, memory state, and feature
// normalization statistics. All payloads are little-endian 64-bit floats.
struct CheckpointBlock {
    std::string name;
    std::vector<size_t> shape;
    std::vector<double> data;
};

struct Checkpoint {
    uint64_t config_hash = 0;
    std::string meta_json;  // configuration echo
    std::vector<CheckpointBlock> blocks;

    const CheckpointBlock* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a; stable across platforms, used for config compatibility hashes.
uint64_t fnv1a64(const std::string& bytes);

}  // namespace nnpm

#endif
