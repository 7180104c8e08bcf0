#include "nnpm/memory.hpp"

#include <cmath>
#include <string>

#include "nnpm/errors.hpp"

namespace nnpm {

namespace {

double row_norm(const double* v, size_t dim) {
    double sq = 0.0;
    for (size_t i = 0; i < dim; ++i) sq += v[i] * v[i];
    return std::sqrt(sq);
}

}  // namespace

ExternalMemory::ExternalMemory(size_t n, size_t dim, std::vector<int> labels)
    : n_(n), dim_(dim), slots_(n * dim, 0.0), labels_(std::move(labels)), initialized_(n, 0) {
    if (n_ == 0) throw InputError("memory: slot count must be positive");
    if (dim_ == 0) throw InputError("memory: feature dimension must be positive");
    if (labels_.size() != n_)
        throw InputError("memory: need one label per slot, got " + std::to_string(labels_.size()) +
                         " for " + std::to_string(n_));
}

ExternalMemory ExternalMemory::init_memory(size_t n, size_t dim,
                                           const std::vector<double>& features,
                                           std::vector<int> labels) {
    if (features.size() != n * dim)
        throw DimensionError("init_memory: feature matrix must be slots x dim");
    ExternalMemory mem(n, dim, std::move(labels));
    for (size_t i = 0; i < n; ++i) mem.write_initial(i, features.data() + i * dim);
    return mem;
}

bool ExternalMemory::fully_initialized() const {
    for (uint8_t v : initialized_)
        if (!v) return false;
    return true;
}

void ExternalMemory::set_beta(double beta) {
    if (beta < 0.0 || beta > 1.0) throw InputError("memory: beta must be in [0,1]");
    beta_ = beta;
}

void ExternalMemory::write_initial(size_t index, const double* feature) {
    if (index >= n_) throw InputError("memory: slot index out of range");
    const double norm = row_norm(feature, dim_);
    if (norm < 1e-12) throw InputError("memory: cannot store a zero-norm feature");
    double* slot = slots_.data() + index * dim_;
    const double inv = 1.0 / norm;
    for (size_t i = 0; i < dim_; ++i) slot[i] = feature[i] * inv;
    initialized_[index] = 1;
}

void ExternalMemory::write(const std::vector<size_t>& indices,
                           const std::vector<double>& fresh_features, double beta) {
    if (beta < 0.0 || beta > 1.0) throw InputError("memory: beta must be in [0,1]");
    if (fresh_features.size() != indices.size() * dim_)
        throw DimensionError("memory write: need one feature row per index");
    for (size_t idx : indices) {
        if (idx >= n_)
            throw InputError("memory write: slot index " + std::to_string(idx) + " out of range");
        if (!initialized_[idx])
            throw StateError("memory write: slot " + std::to_string(idx) + " not initialized");
    }
    if (beta == 0.0) return;  // exact no-op, keeps slots bit-identical
    for (size_t k = 0; k < indices.size(); ++k) {
        double* slot = slots_.data() + indices[k] * dim_;
        const double* fresh = fresh_features.data() + k * dim_;
        double sq = 0.0;
        std::vector<double> blend(dim_);
        for (size_t i = 0; i < dim_; ++i) {
            blend[i] = beta * fresh[i] + (1.0 - beta) * slot[i];
            sq += blend[i] * blend[i];
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-12)
            throw InputError("memory write: blended feature for slot " +
                             std::to_string(indices[k]) + " has zero norm");
        const double inv = 1.0 / norm;
        for (size_t i = 0; i < dim_; ++i) slot[i] = blend[i] * inv;
    }
}

MemorySnapshot ExternalMemory::read() const {
    for (size_t i = 0; i < n_; ++i)
        if (!initialized_[i])
            throw StateError("memory read: slot " + std::to_string(i) + " not initialized");
    MemorySnapshot snap;
    snap.slots = n_;
    snap.dim = dim_;
    snap.values = slots_;
    snap.labels = labels_;
    return snap;
}

std::vector<CheckpointBlock> ExternalMemory::to_blocks() const {
    std::vector<CheckpointBlock> blocks;
    blocks.push_back(CheckpointBlock{"memory.slots", {n_, dim_}, slots_});
    std::vector<double> labels(n_);
    for (size_t i = 0; i < n_; ++i) labels[i] = static_cast<double>(labels_[i]);
    blocks.push_back(CheckpointBlock{"memory.labels", {n_}, std::move(labels)});
    std::vector<double> flags(n_);
    for (size_t i = 0; i < n_; ++i) flags[i] = initialized_[i] ? 1.0 : 0.0;
    blocks.push_back(CheckpointBlock{"memory.initialized", {n_}, std::move(flags)});
    blocks.push_back(CheckpointBlock{"memory.beta", {1}, {beta_}});
    return blocks;
}

ExternalMemory ExternalMemory::from_blocks(const std::vector<CheckpointBlock>& blocks) {
    const CheckpointBlock* slots = nullptr;
    const CheckpointBlock* labels = nullptr;
    const CheckpointBlock* initialized = nullptr;
    const CheckpointBlock* beta = nullptr;
    for (const auto& b : blocks) {
        if (b.name == "memory.slots") slots = &b;
        if (b.name == "memory.labels") labels = &b;
        if (b.name == "memory.initialized") initialized = &b;
        if (b.name == "memory.beta") beta = &b;
    }
    if (!slots || !labels || !initialized || !beta)
        throw InputError("memory checkpoint: missing blocks");
    if (slots->shape.size() != 2) throw InputError("memory checkpoint: bad slots shape");
    const size_t n = slots->shape[0], dim = slots->shape[1];
    std::vector<int> label_ids(n);
    for (size_t i = 0; i < n; ++i) label_ids[i] = static_cast<int>(labels->data[i]);
    ExternalMemory mem(n, dim, std::move(label_ids));
    mem.slots_ = slots->data;
    for (size_t i = 0; i < n; ++i) mem.initialized_[i] = initialized->data[i] != 0.0;
    mem.beta_ = beta->data[0];
    return mem;
}

double beta_schedule(size_t epoch, size_t total_epochs, double beta_max) {
    if (total_epochs == 0) throw InputError("beta_schedule: total_epochs must be positive");
    if (epoch >= total_epochs)
        throw InputError("beta_schedule: epoch " + std::to_string(epoch) + " out of range [0, " +
                         std::to_string(total_epochs) + ")");
    if (total_epochs == 1) return 0.0;
    return beta_max * static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
}

}  // namespace nnpm
