#ifndef NNPM_ADAPT_HPP
#define NNPM_ADAPT_HPP

#include <vector>

#include "nnpm/memory.hpp"
#include "nnpm/tensor.hpp"

namespace nnpm {

// Result of thresholding one target feature against the memory.
struct PseudoTarget {
    std::vector<double> slot_scores;   // <memory row, normalized feature>, one per slot
    std::vector<size_t> positive_set;  // indices with score >= gamma, ascending
    std::vector<double> slot_targets;  // 1 on the positive set, 0 elsewhere
    std::vector<int> class_multilabel; // union of slot labels over the positive set
};

// Loss values for one iteration. hard = pos + neg and total = ce + hard
// exactly (same floating-point additions the training graph performs).
struct LossBreakdown {
    double source_ce = 0.0;
    double target_pos = 0.0;
    double target_neg = 0.0;
    double target_hard = 0.0;
    double total = 0.0;
};

LossBreakdown make_breakdown(double source_ce, double target_pos, double target_neg);

// score[j] = <snapshot row j, h / |h|>. h is normalized here if it is not
// already unit length.
std::vector<double> similarity_scores(const MemorySnapshot& snap, const std::vector<double>& h);

// Threshold rule: positive_set = { j : score[j] >= gamma }. An empty set is
// legal and yields an all-negative target.
PseudoTarget assign_pseudo_multilabel(const std::vector<double>& scores,
                                      const std::vector<int>& slot_labels, double gamma,
                                      size_t num_classes = 4);

// Mean over the batch of -log(p[true class]), log clamped at 1e-12.
double source_ce_loss(const std::vector<std::vector<double>>& probs,
                      const std::vector<size_t>& labels);

// Per-slot squared errors split by target: mean over positives, raw errors
// for negatives (inputs to mining).
struct TargetMse {
    double pos_mean = 0.0;               // 0 when no positives
    std::vector<double> neg_sq_errors;   // aligned with neg_indices
    std::vector<size_t> neg_indices;     // ascending slot indices
};
TargetMse target_mse_loss(const std::vector<double>& slot_scores,
                          const std::vector<double>& slot_targets);

// Keep the ceil(lambda * |negatives|) negatives with the highest scores,
// breaking score ties by ascending slot index. Returns ascending indices.
std::vector<size_t> hard_negative_mine(const std::vector<double>& slot_scores,
                                       const std::vector<size_t>& neg_indices, double lambda);

// Differentiable target loss for one example. The memory snapshot enters as
// a constant: only the live query feature receives gradient.
struct TargetLossGraph {
    TensorPtr pos;   // scalar
    TensorPtr neg;   // scalar
    TensorPtr hard;  // pos + neg
    PseudoTarget assignment;
};

// memory_t is the transposed snapshot [d, n] as a non-grad tensor;
// mine = false switches the negative term to all negatives.
TargetLossGraph target_loss_for_example(Graph& g, const TensorPtr& h,
                                        const TensorPtr& memory_t,
                                        const std::vector<int>& slot_labels, double gamma,
                                        double lambda, bool mine, size_t num_classes = 4);

// Snapshot transposed into a constant tensor, ready for matmul with [1, d]
// features.
TensorPtr snapshot_transposed_tensor(const MemorySnapshot& snap);

}  // namespace nnpm

#endif
