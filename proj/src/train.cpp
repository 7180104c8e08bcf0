#include "nnpm/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "nnpm/errors.hpp"
#include "nnpm/log.hpp"

namespace nnpm {

namespace {

// seed-derivation tags, one per purpose
enum : uint64_t {
    kTagPretrainShuffle = 0x70,
    kTagPretrainDropout = 0x71,
    kTagAdaptSourceShuffle = 0x80,
    kTagAdaptTargetShuffle = 0x81,
    kTagAdaptSourceDropout = 0x82,
    kTagAdaptTargetDropout = 0x83,
};

// Endless shuffled index stream; reshuffles on every wraparound so the
// smaller corpus cycles without repeating an epoch-order.
class CyclingSampler {
  public:
    CyclingSampler(size_t count, uint64_t seed) : rng_(seed), order_(count) {
        std::iota(order_.begin(), order_.end(), size_t{0});
        rng_.shuffle(order_);
    }

    std::vector<size_t> next_batch(size_t batch_size) {
        std::vector<size_t> batch;
        batch.reserve(batch_size);
        for (size_t i = 0; i < batch_size; ++i) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(order_);
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

  private:
    Rng rng_;
    std::vector<size_t> order_;
    size_t cursor_ = 0;
};

// -log(p[label]) for one example, recorded on the graph.
TensorPtr example_ce(Graph& g, const TensorPtr& probs, size_t label) {
    auto picked = gather_per_row(g, probs, {label});
    return scale(g, log_clamped(g, picked, 1e-12), -1.0);
}

void zero_all_grads(SnsaWeights& w) {
    for (auto& p : w.params()) {
        if (p.tensor->requires_grad) {
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
        }
    }
}

std::string json_line(const nlohmann::json& j) { return j.dump(); }

}  // namespace

Variant variant_from_name(const std::string& name) {
    if (name == "nnpm") return Variant::kNnpm;
    if (name == "snsa-f") return Variant::kSnsaF;
    if (name == "snsa-wo-sl") return Variant::kSnsaWoSl;
    if (name == "snsa-wo-hl") return Variant::kSnsaWoHl;
    throw ConfigError("unknown variant '" + name +
                      "' (expected nnpm, snsa-f, snsa-wo-sl, or snsa-wo-hl)");
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kNnpm: return "nnpm";
        case Variant::kSnsaF: return "snsa-f";
        case Variant::kSnsaWoSl: return "snsa-wo-sl";
        case Variant::kSnsaWoHl: return "snsa-wo-hl";
    }
    throw ContractError("variant_name: invalid variant");
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (lr < 0.0) throw ConfigError("train: lr must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (gamma < -1.0 || gamma > 1.0) throw ConfigError("train: gamma must be in [-1, 1]");
    if (beta_max < 0.0 || beta_max > 1.0) throw ConfigError("train: beta_max must be in [0, 1]");
    if (lambda <= 0.0 || lambda > 1.0) throw ConfigError("train: lambda must be in (0, 1]");
    if (freeze_first_n_conv > 2) throw ConfigError("train: freeze_first_n_conv must be 0, 1 or 2");
}

AdamState::AdamState(const std::vector<Param>& params) {
    for (const auto& p : params) {
        m_.emplace_back(p.tensor->size(), 0.0);
        v_.emplace_back(p.tensor->size(), 0.0);
    }
}

void AdamState::step(std::vector<Param>& params, double lr, double weight_decay) {
    if (m_.size() != params.size())
        throw ContractError("adam: state does not match the parameter registry");
    ++step_count_;
    const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_count_));
    const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_count_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        if (!p.trainable) continue;
        if (p.tensor->grad.size() != p.tensor->size())
            throw StateError("adam: parameter '" + p.name + "' has no gradient");
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p.tensor->size(); ++i) {
            const double g = p.tensor->grad[i];
            if (std::isnan(g))
                throw StateError("adam: NaN gradient in parameter '" + p.name + "'");
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p.tensor->data[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
            p.tensor->data[i] -= lr * weight_decay * p.tensor->data[i];
        }
    }
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["ua"] = ua;
    j["wa"] = wa;
    j["total"] = total;
    j["per_class_counts"] = per_class_counts;
    j["confusion"] = confusion;
    return j.dump();
}

MetricsLogger::MetricsLogger(const std::string& path) : path_(path) {
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw IoError("cannot create metrics log: " + path_);
    }
}

void MetricsLogger::log(const std::string& json_line) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    out << json_line << "\n";
    if (!out) throw IoError("failed writing metrics log: " + path_);
}

EvalReport report_from_confusion(std::vector<std::vector<size_t>> confusion) {
    EvalReport report;
    report.confusion = std::move(confusion);
    const size_t classes = report.confusion.size();
    report.per_class_counts.assign(classes, 0);
    size_t correct = 0;
    double recall_sum = 0.0;
    size_t present = 0;
    for (size_t c = 0; c < classes; ++c) {
        if (report.confusion[c].size() != classes)
            throw DimensionError("report_from_confusion: matrix must be square");
        for (size_t p = 0; p < classes; ++p) report.per_class_counts[c] += report.confusion[c][p];
        report.total += report.per_class_counts[c];
        correct += report.confusion[c][c];
        if (report.per_class_counts[c] > 0) {
            recall_sum += static_cast<double>(report.confusion[c][c]) /
                          static_cast<double>(report.per_class_counts[c]);
            ++present;
        }
    }
    if (report.total == 0) throw InputError("report_from_confusion: empty confusion matrix");
    report.wa = static_cast<double>(correct) / static_cast<double>(report.total);
    report.ua = present == 0 ? 0.0 : recall_sum / static_cast<double>(present);
    return report;
}

EvalReport evaluate(const SnsaWeights& weights, const LabeledCorpus& corpus) {
    if (corpus.size() == 0) throw InputError("evaluate: empty corpus");
    const size_t classes = weights.config().num_classes;
    std::vector<std::vector<size_t>> confusion(classes, std::vector<size_t>(classes, 0));
    Rng unused(0);
    for (const auto& ex : corpus.examples) {
        if (ex.label >= classes)
            throw InputError("evaluate: label " + std::to_string(ex.label) + " out of range");
        Graph g(false);
        auto probs = classify(g, encode(g, ex.features, weights, false, unused), weights);
        size_t pred = 0;
        for (size_t c = 1; c < classes; ++c)
            if (probs->data[c] > probs->data[pred]) pred = c;
        confusion[ex.label][pred]++;
    }
    return report_from_confusion(std::move(confusion));
}

size_t parameter_count(const SnsaWeights& weights) {
    size_t count = 0;
    for (const auto& p : weights.params()) count += p.tensor->size();
    return count;
}

SnsaWeights pretrain_source(const LabeledCorpus& train, const LabeledCorpus* validation,
                            const SnsaConfig& model_config, const TrainConfig& config,
                            MetricsLogger* metrics) {
    config.validate();
    model_config.validate();
    if (train.size() == 0) throw ConfigError("pretrain: empty source corpus");
    {
        std::vector<size_t> counts(model_config.num_classes, 0);
        for (const auto& ex : train.examples) {
            if (ex.label >= model_config.num_classes)
                throw InputError("pretrain: label out of range for example '" + ex.id + "'");
            counts[ex.label]++;
        }
        size_t present = 0;
        for (size_t c : counts) present += c > 0;
        if (present < 2) throw ConfigError("pretrain: source corpus has fewer than 2 classes");
    }

    SnsaWeights weights = SnsaWeights::init(model_config, derive_seed(config.rng_seed, 0x1717));
    AdamState adam(weights);

    const size_t iterations = (train.size() + config.batch_size - 1) / config.batch_size;
    SnsaWeights best;
    double best_ua = -1.0;

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(derive_seed(config.rng_seed, kTagPretrainShuffle, epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t iter = 0; iter < iterations; ++iter) {
            const size_t begin = iter * config.batch_size;
            const size_t end = std::min(begin + config.batch_size, train.size());
            const double inv_batch = 1.0 / static_cast<double>(end - begin);

            zero_all_grads(weights);
            double ce_sum = 0.0;
            for (size_t k = begin; k < end; ++k) {
                const auto& ex = train.examples[order[k]];
                Rng dropout_rng(
                    derive_seed(config.rng_seed, kTagPretrainDropout, epoch, iter, k - begin));
                Graph g;
                auto probs = classify(g, encode(g, ex.features, weights, true, dropout_rng), weights);
                auto ce = example_ce(g, probs, ex.label);
                ce_sum += ce->data[0];
                g.backward(scale(g, ce, inv_batch));
            }
            adam.step(weights, config.lr, config.weight_decay);

            const double ce_mean = ce_sum * inv_batch;
            epoch_loss += ce_sum;
            seen += end - begin;
            if (metrics) {
                nlohmann::json j;
                j["type"] = "iter";
                j["phase"] = "pretrain";
                j["epoch"] = epoch;
                j["iter"] = iter;
                j["loss_source_ce"] = ce_mean;
                j["loss_total"] = ce_mean;
                metrics->log(json_line(j));
            }
        }

        nlohmann::json j;
        j["type"] = "epoch";
        j["phase"] = "pretrain";
        j["epoch"] = epoch;
        j["loss_source_ce"] = epoch_loss / static_cast<double>(seen);
        if (validation != nullptr) {
            EvalReport report = evaluate(weights, *validation);
            j["val_ua"] = report.ua;
            j["val_wa"] = report.wa;
            if (report.ua > best_ua) {
                best_ua = report.ua;
                best = weights.clone();
            }
        }
        if (metrics) metrics->log(json_line(j));
        log_debug("pretrain epoch " + std::to_string(epoch) + " done");
    }
    return validation != nullptr ? best : weights;
}

AdaptResult adapt(const SnsaWeights& pretrained, const LabeledCorpus& source_train,
                  const UnlabeledCorpus& target, const TrainConfig& config,
                  MetricsLogger* metrics) {
    config.validate();
    if (source_train.size() == 0) throw ConfigError("adapt: empty source corpus");
    if (target.size() == 0) throw ConfigError("adapt: empty target corpus");
    const SnsaConfig& model_config = pretrained.config();
    for (const auto& ex : source_train.examples)
        if (ex.label >= model_config.num_classes)
            throw InputError("adapt: source label out of range for example '" + ex.id + "'");

    SnsaWeights weights = pretrained.clone();

    // Fill the memory with one deterministic pass over the source training
    // set (dropout off), one unit-norm slot per example.
    const size_t n = source_train.size();
    const size_t d = model_config.feature_dim();
    std::vector<double> init_features(n * d);
    std::vector<int> slot_labels(n);
    {
        Rng unused(0);
        for (size_t i = 0; i < n; ++i) {
            Graph g(false);
            auto h = encode(g, source_train.examples[i].features, weights, false, unused);
            std::copy(h->data.begin(), h->data.end(), init_features.begin() + i * d);
            slot_labels[i] = static_cast<int>(source_train.examples[i].label);
        }
    }
    ExternalMemory memory = ExternalMemory::init_memory(n, d, init_features, slot_labels);

    if (config.variant == Variant::kSnsaF) {
        // Frozen transfer: no parameter is touched.
        return AdaptResult{std::move(weights), std::move(memory)};
    }

    set_frozen(weights, config.freeze_first_n_conv);
    AdamState adam(weights);

    const bool use_source_ce = config.variant != Variant::kSnsaWoSl;
    const bool mine_negatives = config.variant != Variant::kSnsaWoHl;

    const size_t iterations =
        (std::max(source_train.size(), target.size()) + config.batch_size - 1) / config.batch_size;
    CyclingSampler source_sampler(source_train.size(),
                                  derive_seed(config.rng_seed, kTagAdaptSourceShuffle));
    CyclingSampler target_sampler(target.size(),
                                  derive_seed(config.rng_seed, kTagAdaptTargetShuffle));

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double beta = beta_schedule(epoch, config.epochs, config.beta_max);
        memory.set_beta(beta);

        double epoch_pos_count = 0.0;
        size_t epoch_empty = 0;
        size_t epoch_examples = 0;
        std::vector<size_t> epoch_histogram(model_config.num_classes, 0);
        LossBreakdown epoch_sums;

        for (size_t iter = 0; iter < iterations; ++iter) {
            const auto source_batch = source_sampler.next_batch(config.batch_size);
            const auto target_batch = target_sampler.next_batch(config.batch_size);
            const double inv_s = 1.0 / static_cast<double>(source_batch.size());
            const double inv_t = 1.0 / static_cast<double>(target_batch.size());

            zero_all_grads(weights);

            // Source side: optional cross entropy plus the memory refresh.
            double ce_sum = 0.0;
            if (use_source_ce) {
                for (size_t pos = 0; pos < source_batch.size(); ++pos) {
                    const auto& ex = source_train.examples[source_batch[pos]];
                    Rng dropout_rng(derive_seed(config.rng_seed, kTagAdaptSourceDropout, epoch,
                                                iter, pos));
                    Graph g;
                    auto probs =
                        classify(g, encode(g, ex.features, weights, true, dropout_rng), weights);
                    auto ce = example_ce(g, probs, ex.label);
                    ce_sum += ce->data[0];
                    g.backward(scale(g, ce, inv_s));
                }
            }
            {
                // Fresh slot features from a deterministic dropout-off pass.
                std::vector<double> fresh(source_batch.size() * d);
                Rng unused(0);
                for (size_t pos = 0; pos < source_batch.size(); ++pos) {
                    const auto& ex = source_train.examples[source_batch[pos]];
                    Graph g(false);
                    auto h = encode(g, ex.features, weights, false, unused);
                    std::copy(h->data.begin(), h->data.end(), fresh.begin() + pos * d);
                }
                memory.write(source_batch, fresh, beta);
            }

            // Target side: score a snapshot, assign pseudo targets, regress.
            const MemorySnapshot snapshot = memory.read();
            auto mem_t = snapshot_transposed_tensor(snapshot);
            double pos_sum = 0.0, neg_sum = 0.0;
            for (size_t pos = 0; pos < target_batch.size(); ++pos) {
                const auto& ex = target.examples[target_batch[pos]];
                Rng dropout_rng(
                    derive_seed(config.rng_seed, kTagAdaptTargetDropout, epoch, iter, pos));
                Graph g;
                auto h = encode(g, ex.features, weights, true, dropout_rng);
                auto loss = target_loss_for_example(g, h, mem_t, snapshot.labels, config.gamma,
                                                    config.lambda, mine_negatives,
                                                    model_config.num_classes);
                pos_sum += loss.pos->data[0];
                neg_sum += loss.neg->data[0];
                g.backward(scale(g, loss.hard, inv_t));

                const size_t a_size = loss.assignment.positive_set.size();
                epoch_pos_count += static_cast<double>(a_size);
                epoch_empty += a_size == 0;
                ++epoch_examples;
                for (size_t c = 0; c < epoch_histogram.size(); ++c)
                    epoch_histogram[c] += loss.assignment.class_multilabel[c] != 0;
            }

            adam.step(weights, config.lr, config.weight_decay);

            const LossBreakdown breakdown =
                make_breakdown(use_source_ce ? ce_sum * inv_s : 0.0, pos_sum * inv_t,
                               neg_sum * inv_t);
            epoch_sums.source_ce += breakdown.source_ce;
            epoch_sums.target_pos += breakdown.target_pos;
            epoch_sums.target_neg += breakdown.target_neg;

            if (metrics) {
                nlohmann::json j;
                j["type"] = "iter";
                j["phase"] = "adapt";
                j["epoch"] = epoch;
                j["iter"] = iter;
                j["beta"] = beta;
                j["loss_source_ce"] = breakdown.source_ce;
                j["loss_target_pos"] = breakdown.target_pos;
                j["loss_target_neg"] = breakdown.target_neg;
                j["loss_target_hard"] = breakdown.target_hard;
                j["loss_total"] = breakdown.total;
                j["mean_positive_set"] =
                    epoch_examples == 0 ? 0.0 : epoch_pos_count / static_cast<double>(epoch_examples);
                metrics->log(json_line(j));
            }
        }

        if (metrics) {
            const double inv_iters = 1.0 / static_cast<double>(iterations);
            nlohmann::json j;
            j["type"] = "epoch";
            j["phase"] = "adapt";
            j["epoch"] = epoch;
            j["beta"] = beta;
            j["loss_source_ce"] = epoch_sums.source_ce * inv_iters;
            j["loss_target_pos"] = epoch_sums.target_pos * inv_iters;
            j["loss_target_neg"] = epoch_sums.target_neg * inv_iters;
            j["mean_positive_set"] =
                epoch_examples == 0 ? 0.0 : epoch_pos_count / static_cast<double>(epoch_examples);
            j["fraction_empty"] =
                epoch_examples == 0 ? 0.0
                                    : static_cast<double>(epoch_empty) /
                                          static_cast<double>(epoch_examples);
            j["class_multilabel_histogram"] = epoch_histogram;
            metrics->log(json_line(j));
        }
        log_debug("adapt epoch " + std::to_string(epoch) + " done (beta " + std::to_string(beta) +
                  ")");
    }
    return AdaptResult{std::move(weights), std::move(memory)};
}

}  // namespace nnpm
