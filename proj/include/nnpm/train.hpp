#ifndef NNPM_TRAIN_HPP
#define NNPM_TRAIN_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nnpm/adapt.hpp"
#include "nnpm/data.hpp"
#include "nnpm/memory.hpp"
#include "nnpm/model.hpp"

namespace nnpm {

enum class Variant { kNnpm, kSnsaF, kSnsaWoSl, kSnsaWoHl };

Variant variant_from_name(const std::string& name);
const char* variant_name(Variant v);

struct TrainConfig {
    Variant variant = Variant::kNnpm;
    size_t epochs = 50;
    size_t batch_size = 32;
    double lr = 1e-4;
    double weight_decay = 5e-5;
    double gamma = 0.9;
    double beta_max = 0.4;
    double lambda = 0.01;
    size_t freeze_first_n_conv = 2;
    uint64_t rng_seed = 1234;

    void validate() const;
};

// Bias-corrected Adam with decoupled weight decay. Moment arrays align with
// the parameter registry by index; frozen parameters are skipped entirely.
class AdamState {
  public:
    explicit AdamState(const std::vector<Param>& params);
    explicit AdamState(const SnsaWeights& weights) : AdamState(weights.params()) {}

    void step(std::vector<Param>& params, double lr, double weight_decay);
    void step(SnsaWeights& weights, double lr, double weight_decay) {
        step(weights.params(), lr, weight_decay);
    }
    size_t step_count() const { return step_count_; }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

  private:
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    size_t step_count_ = 0;
};

struct EvalReport {
    std::vector<std::vector<size_t>> confusion;  // [true][predicted]
    std::vector<size_t> per_class_counts;
    size_t total = 0;
    double ua = 0.0;  // mean recall over classes present
    double wa = 0.0;  // trace / total

    std::string to_json() const;
};

// UA/WA and per-class counts from a filled confusion matrix.
EvalReport report_from_confusion(std::vector<std::vector<size_t>> confusion);

// Append-only JSON-lines metrics writer; a null path disables logging.
class MetricsLogger {
  public:
    MetricsLogger() = default;
    explicit MetricsLogger(const std::string& path);
    void log(const std::string& json_line);
    bool enabled() const { return !path_.empty(); }

  private:
    std::string path_;
};

// Supervised source-domain phase: minimizes the classification
// cross-entropy only. Returns the final-epoch weights, or the
// best-validation-UA weights when a validation corpus is supplied.
SnsaWeights pretrain_source(const LabeledCorpus& train, const LabeledCorpus* validation,
                            const SnsaConfig& model_config, const TrainConfig& config,
                            MetricsLogger* metrics);

struct AdaptResult {
    SnsaWeights weights;
    ExternalMemory memory;
};

// Unsupervised adaptation phase. Per epoch the memory rate follows the
// linear schedule; per iteration one source batch refreshes memory slots
// (and contributes cross-entropy unless the variant drops it) and one
// target batch contributes the thresholded similarity loss. The kSnsaF
// variant performs no training at all and returns the input weights
// unchanged.
AdaptResult adapt(const SnsaWeights& pretrained, const LabeledCorpus& source_train,
                  const UnlabeledCorpus& target, const TrainConfig& config,
                  MetricsLogger* metrics);

EvalReport evaluate(const SnsaWeights& weights, const LabeledCorpus& corpus);

// Number of learnable scalars (frozen ones included).
size_t parameter_count(const SnsaWeights& weights);

}  // namespace nnpm

#endif
