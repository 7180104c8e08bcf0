#ifndef NNPM_MEMORY_HPP
#define NNPM_MEMORY_HPP

#include <cstdint>
#include <vector>

#include "nnpm/checkpoint.hpp"

namespace nnpm {

// Immutable copy of the memory contents taken at read time. Later writes to
// the live memory do not affect a snapshot.
struct MemorySnapshot {
    size_t slots = 0;
    size_t dim = 0;
    std::vector<double> values;  // slots x dim, unit-norm rows
    std::vector<int> labels;     // class id per slot

    const double* row(size_t i) const { return values.data() + i * dim; }
};

// One feature slot per source training example. Rows stay l2-normalized
// through every write; labels and slot count are fixed at construction.
class ExternalMemory {
  public:
    // n uninitialized slots; init_memory or per-slot writes must fill them
    // before the first read.
    ExternalMemory(size_t n, size_t dim, std::vector<int> labels);

    // Fills every slot with the normalized feature rows (n x dim, row-major).
    static ExternalMemory init_memory(size_t n, size_t dim, const std::vector<double>& features,
                                      std::vector<int> labels);

    size_t slot_count() const { return n_; }
    size_t dim() const { return dim_; }
    const std::vector<int>& slot_labels() const { return labels_; }
    bool fully_initialized() const;
    bool initialized(size_t slot) const { return initialized_[slot]; }

    double beta() const { return beta_; }
    void set_beta(double beta);

    // slot[j] <- normalize(beta * fresh[j] + (1 - beta) * slot[j]) for each
    // index; beta = 0 is exactly a no-op. fresh_features is |indices| x dim.
    void write(const std::vector<size_t>& indices, const std::vector<double>& fresh_features,
               double beta);

    // Initializing write for a single slot (used when filling the memory the
    // first time slot by slot).
    void write_initial(size_t index, const double* feature);

    MemorySnapshot read() const;

    std::vector<CheckpointBlock> to_blocks() const;
    static ExternalMemory from_blocks(const std::vector<CheckpointBlock>& blocks);

  private:
    size_t n_ = 0;
    size_t dim_ = 0;
    std::vector<double> slots_;
    std::vector<int> labels_;
    std::vector<uint8_t> initialized_;
    double beta_ = 0.0;
};

// Linear ramp: beta_max * epoch / (total_epochs - 1); 0 at the first epoch,
// beta_max at the last.
double beta_schedule(size_t epoch, size_t total_epochs = 50, double beta_max = 0.4);

}  // namespace nnpm

#endif
