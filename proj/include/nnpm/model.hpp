#ifndef NNPM_MODEL_HPP
#define NNPM_MODEL_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nnpm/checkpoint.hpp"
#include "nnpm/dsp.hpp"
#include "nnpm/tensor.hpp"

namespace nnpm {

struct ConvLayerSpec {
    size_t channels = 16;
    size_t kernel_h = 5;
    size_t kernel_w = 5;
    size_t temporal_pool = 4;
};

// Encoder architecture. The two-conv, two-BLSTM shape is fixed; every
// dimension is a parameter. The attention output is flattened across heads,
// so the feature dimension is 2 * blstm_hidden * attention_heads.
struct SnsaConfig {
    size_t input_mel_bins = 40;
    std::array<ConvLayerSpec, 2> conv{ConvLayerSpec{16, 5, 5, 4}, ConvLayerSpec{32, 5, 5, 4}};
    size_t blstm_hidden = 64;      // u, per direction
    size_t attention_hidden = 64;  // d_a
    size_t attention_heads = 4;    // r
    size_t num_classes = 4;
    double dropout = 0.5;

    size_t feature_dim() const { return 2 * blstm_hidden * attention_heads; }
    // Frequency extent after the conv stack (stride 1, same-ish padding).
    size_t conv_output_width() const;
    size_t blstm_input_dim() const { return conv[1].channels * conv_output_width(); }

    void validate() const;
    std::string to_json() const;
    static SnsaConfig from_json(const std::string& json);
    uint64_t hash() const;
};

// One named learnable tensor. Order inside SnsaWeights is fixed by
// construction, which keeps optimizer traversal deterministic.
struct Param {
    std::string name;
    TensorPtr tensor;
    bool trainable = true;
};

// Single parameter set shared by both Siamese branches; encoding source and
// target batches reads the same tensors.
class SnsaWeights {
  public:
    SnsaWeights() = default;
    static SnsaWeights init(const SnsaConfig& config, uint64_t seed);

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    TensorPtr find(const std::string& name) const;

    const SnsaConfig& config() const { return config_; }

    // Deep copy: fresh tensors, same values; used for worker-local replicas
    // and bit-stability assertions.
    SnsaWeights clone() const;

    bool data_equal(const SnsaWeights& other) const;

  private:
    SnsaConfig config_;
    std::vector<Param> params_;
    friend SnsaWeights weights_from_checkpoint(const Checkpoint&);
};

// Feature extraction: conv (pool, relu) x2 -> BLSTM x2 (forward/backward
// concatenation, dropout after each layer in train mode) -> self-attention
// over time -> flattened [1, d] feature.
TensorPtr encode(Graph& g, const Spectrogram& x, const SnsaWeights& w, bool train_mode,
                 Rng& dropout_rng);

// softmax(W h + b) over the class axis, applied to an encoded feature.
TensorPtr classify(Graph& g, const TensorPtr& h, const SnsaWeights& w);

// Attention weights for inspection: [T', r], columns sum to 1 over time.
TensorPtr attention_weights(Graph& g, const Spectrogram& x, const SnsaWeights& w);

// Marks the first N conv layers non-trainable (N in [0, 2]). Their tensors
// stop requiring gradients and the optimizer skips them.
void set_frozen(SnsaWeights& w, size_t freeze_first_n_conv);

// Checkpoint io. Extra blocks (memory state, normalization stats) ride along
// in the same container. Loading verifies the stored config hash.
void save_weights(const std::string& path, const SnsaWeights& w,
                  const std::vector<CheckpointBlock>& extras = {});
SnsaWeights load_weights(const std::string& path, std::vector<CheckpointBlock>* extras = nullptr);

}  // namespace nnpm

#endif
