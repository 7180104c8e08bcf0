#include "nnpm/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnpm/errors.hpp"

namespace nnpm {

LossBreakdown make_breakdown(double source_ce, double target_pos, double target_neg) {
    LossBreakdown b;
    b.source_ce = source_ce;
    b.target_pos = target_pos;
    b.target_neg = target_neg;
    b.target_hard = target_pos + target_neg;
    b.total = source_ce + b.target_hard;
    return b;
}

std::vector<double> similarity_scores(const MemorySnapshot& snap, const std::vector<double>& h) {
    if (h.size() != snap.dim)
        throw DimensionError("similarity_scores: feature dim " + std::to_string(h.size()) +
                             " != memory dim " + std::to_string(snap.dim));
    double sq = 0.0;
    for (double v : h) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw InputError("similarity_scores: zero-norm feature");
    std::vector<double> unit(h);
    if (std::fabs(norm - 1.0) > 1e-12)
        for (double& v : unit) v /= norm;
    std::vector<double> scores(snap.slots);
    for (size_t j = 0; j < snap.slots; ++j) {
        const double* row = snap.row(j);
        double acc = 0.0;
        for (size_t i = 0; i < snap.dim; ++i) acc += row[i] * unit[i];
        scores[j] = acc;
    }
    return scores;
}

PseudoTarget assign_pseudo_multilabel(const std::vector<double>& scores,
                                      const std::vector<int>& slot_labels, double gamma,
                                      size_t num_classes) {
    if (scores.size() != slot_labels.size())
        throw DimensionError("assign_pseudo_multilabel: scores/labels length mismatch");
    if (gamma < -1.0 || gamma > 1.0)
        throw ConfigError("assign_pseudo_multilabel: gamma must be in [-1, 1]");
    PseudoTarget out;
    out.slot_scores = scores;
    out.slot_targets.assign(scores.size(), 0.0);
    out.class_multilabel.assign(num_classes, 0);
    for (size_t j = 0; j < scores.size(); ++j) {
        if (scores[j] >= gamma) {
            out.positive_set.push_back(j);
            out.slot_targets[j] = 1.0;
            const int label = slot_labels[j];
            if (label < 0 || static_cast<size_t>(label) >= num_classes)
                throw InputError("assign_pseudo_multilabel: slot label " + std::to_string(label) +
                                 " out of range");
            out.class_multilabel[static_cast<size_t>(label)] = 1;
        }
    }
    return out;
}

double source_ce_loss(const std::vector<std::vector<double>>& probs,
                      const std::vector<size_t>& labels) {
    if (probs.size() != labels.size())
        throw DimensionError("source_ce_loss: batch size mismatch");
    if (probs.empty()) throw InputError("source_ce_loss: empty batch");
    double total = 0.0;
    for (size_t k = 0; k < probs.size(); ++k) {
        if (labels[k] >= probs[k].size())
            throw InputError("source_ce_loss: label " + std::to_string(labels[k]) +
                             " out of range for " + std::to_string(probs[k].size()) + " classes");
        total += -std::log(std::max(probs[k][labels[k]], 1e-12));
    }
    return total / static_cast<double>(probs.size());
}

TargetMse target_mse_loss(const std::vector<double>& slot_scores,
                          const std::vector<double>& slot_targets) {
    if (slot_scores.size() != slot_targets.size())
        throw DimensionError("target_mse_loss: scores/targets length mismatch");
    TargetMse out;
    double pos_sum = 0.0;
    size_t pos_count = 0;
    for (size_t j = 0; j < slot_scores.size(); ++j) {
        const double err = slot_scores[j] - slot_targets[j];
        if (slot_targets[j] != 0.0) {
            pos_sum += err * err;
            ++pos_count;
        } else {
            out.neg_sq_errors.push_back(err * err);
            out.neg_indices.push_back(j);
        }
    }
    out.pos_mean = pos_count == 0 ? 0.0 : pos_sum / static_cast<double>(pos_count);
    return out;
}

std::vector<size_t> hard_negative_mine(const std::vector<double>& slot_scores,
                                       const std::vector<size_t>& neg_indices, double lambda) {
    if (lambda <= 0.0 || lambda > 1.0)
        throw ConfigError("hard_negative_mine: lambda must be in (0, 1]");
    if (neg_indices.empty()) return {};
    std::vector<size_t> order(neg_indices);
    // highest score first; ties resolved toward the lower slot index
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (slot_scores[a] != slot_scores[b]) return slot_scores[a] > slot_scores[b];
        return a < b;
    });
    const size_t keep = static_cast<size_t>(
        std::ceil(lambda * static_cast<double>(neg_indices.size())));
    order.resize(std::min(keep, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

TensorPtr snapshot_transposed_tensor(const MemorySnapshot& snap) {
    auto t = make_tensor({snap.dim, snap.slots});
    for (size_t j = 0; j < snap.slots; ++j)
        for (size_t i = 0; i < snap.dim; ++i) t->data[i * snap.slots + j] = snap.values[j * snap.dim + i];
    return t;
}

TargetLossGraph target_loss_for_example(Graph& g, const TensorPtr& h, const TensorPtr& memory_t,
                                        const std::vector<int>& slot_labels, double gamma,
                                        double lambda, bool mine, size_t num_classes) {
    if (memory_t->requires_grad)
        throw ContractError("target_loss_for_example: memory snapshot must be a constant");
    auto scores_t = matmul(g, l2_normalize_row(g, h), memory_t);  // [1, n]

    TargetLossGraph out;
    out.assignment =
        assign_pseudo_multilabel(scores_t->data, slot_labels, gamma, num_classes);

    const TargetMse mse = target_mse_loss(out.assignment.slot_scores, out.assignment.slot_targets);
    const std::vector<size_t> neg_set =
        mine ? hard_negative_mine(out.assignment.slot_scores, mse.neg_indices, lambda)
             : mse.neg_indices;

    if (out.assignment.positive_set.empty()) {
        out.pos = make_scalar(0.0);
    } else {
        auto pos_scores = gather_cols(g, scores_t, out.assignment.positive_set);
        auto err = add_scalar(g, pos_scores, -1.0);
        out.pos = mean_all(g, mul(g, err, err));
    }
    if (neg_set.empty()) {
        out.neg = make_scalar(0.0);
    } else {
        auto neg_scores = gather_cols(g, scores_t, neg_set);
        out.neg = mean_all(g, mul(g, neg_scores, neg_scores));
    }
    out.hard = add(g, out.pos, out.neg);
    return out;
}

}  // namespace nnpm
