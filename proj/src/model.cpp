#include "nnpm/model.hpp"

#include <json.hpp>

#include "nnpm/errors.hpp"

namespace nnpm {

size_t SnsaConfig::conv_output_width() const {
    size_t w = input_mel_bins;
    for (const auto& layer : conv) {
        const size_t padding = layer.kernel_w / 2;
        if (layer.kernel_w > w + 2 * padding)
            throw ConfigError("conv kernel wider than padded input");
        w = (w + 2 * padding - layer.kernel_w) + 1;
    }
    return w;
}

void SnsaConfig::validate() const {
    if (input_mel_bins < 1) throw ConfigError("model: input_mel_bins must be >= 1");
    for (const auto& layer : conv) {
        if (layer.channels < 1) throw ConfigError("model: conv channels must be >= 1");
        if (layer.kernel_h < 1 || layer.kernel_w < 1)
            throw ConfigError("model: conv kernel extents must be >= 1");
        if (layer.temporal_pool < 1) throw ConfigError("model: temporal_pool must be >= 1");
    }
    if (blstm_hidden < 1) throw ConfigError("model: blstm_hidden must be >= 1");
    if (attention_hidden < 1) throw ConfigError("model: attention_hidden must be >= 1");
    if (attention_heads < 1) throw ConfigError("model: attention_heads must be >= 1");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
    conv_output_width();
}

std::string SnsaConfig::to_json() const {
    nlohmann::json j;
    j["input_mel_bins"] = input_mel_bins;
    for (size_t i = 0; i < 2; ++i) {
        nlohmann::json c;
        c["channels"] = conv[i].channels;
        c["kernel_h"] = conv[i].kernel_h;
        c["kernel_w"] = conv[i].kernel_w;
        c["temporal_pool"] = conv[i].temporal_pool;
        j["conv"].push_back(c);
    }
    j["blstm_hidden"] = blstm_hidden;
    j["attention_hidden"] = attention_hidden;
    j["attention_heads"] = attention_heads;
    j["num_classes"] = num_classes;
    j["dropout"] = dropout;
    return j.dump();
}

SnsaConfig SnsaConfig::from_json(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    SnsaConfig cfg;
    cfg.input_mel_bins = j.value("input_mel_bins", cfg.input_mel_bins);
    if (j.contains("conv")) {
        const auto& arr = j.at("conv");
        if (!arr.is_array() || arr.size() != 2)
            throw ConfigError("model config: 'conv' must list exactly 2 layers");
        for (size_t i = 0; i < 2; ++i) {
            cfg.conv[i].channels = arr[i].value("channels", cfg.conv[i].channels);
            cfg.conv[i].kernel_h = arr[i].value("kernel_h", cfg.conv[i].kernel_h);
            cfg.conv[i].kernel_w = arr[i].value("kernel_w", cfg.conv[i].kernel_w);
            cfg.conv[i].temporal_pool = arr[i].value("temporal_pool", cfg.conv[i].temporal_pool);
        }
    }
    cfg.blstm_hidden = j.value("blstm_hidden", cfg.blstm_hidden);
    cfg.attention_hidden = j.value("attention_hidden", cfg.attention_hidden);
    cfg.attention_heads = j.value("attention_heads", cfg.attention_heads);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.dropout = j.value("dropout", cfg.dropout);
    cfg.validate();
    return cfg;
}

uint64_t SnsaConfig::hash() const { return fnv1a64(to_json()); }

namespace {

TensorPtr new_param(std::vector<Param>& params, const std::string& name,
                    std::vector<size_t> shape) {
    auto t = make_tensor(std::move(shape), true);
    params.push_back(Param{name, t, true});
    return t;
}

void init_lstm_params(std::vector<Param>& params, const std::string& prefix, size_t in_dim,
                      size_t hidden, Rng& rng) {
    auto w_ih = new_param(params, prefix + ".w_ih", {in_dim, 4 * hidden});
    auto w_hh = new_param(params, prefix + ".w_hh", {hidden, 4 * hidden});
    auto bias = new_param(params, prefix + ".bias", {1, 4 * hidden});
    fill_xavier_uniform(*w_ih, in_dim, 4 * hidden, rng);
    fill_xavier_uniform(*w_hh, hidden, 4 * hidden, rng);
    // gate layout [i, f, g, o]; forget gate bias starts at +1
    for (size_t i = hidden; i < 2 * hidden; ++i) bias->data[i] = 1.0;
}

}  // namespace

SnsaWeights SnsaWeights::init(const SnsaConfig& config, uint64_t seed) {
    config.validate();
    SnsaWeights w;
    w.config_ = config;
    Rng rng(seed);

    size_t in_channels = 1;
    for (size_t i = 0; i < 2; ++i) {
        const auto& spec = config.conv[i];
        const std::string prefix = "conv" + std::to_string(i + 1);
        auto kernels = new_param(w.params_, prefix + ".kernels",
                                 {spec.channels, in_channels, spec.kernel_h, spec.kernel_w});
        fill_xavier_uniform(*kernels, in_channels * spec.kernel_h * spec.kernel_w,
                            spec.channels * spec.kernel_h * spec.kernel_w, rng);
        new_param(w.params_, prefix + ".bias", {spec.channels});
        in_channels = spec.channels;
    }

    const size_t u = config.blstm_hidden;
    init_lstm_params(w.params_, "blstm1.fw", config.blstm_input_dim(), u, rng);
    init_lstm_params(w.params_, "blstm1.bw", config.blstm_input_dim(), u, rng);
    init_lstm_params(w.params_, "blstm2.fw", 2 * u, u, rng);
    init_lstm_params(w.params_, "blstm2.bw", 2 * u, u, rng);

    auto w1 = new_param(w.params_, "attn.w1", {config.attention_hidden, 2 * u});
    fill_xavier_uniform(*w1, 2 * u, config.attention_hidden, rng);
    auto w2 = new_param(w.params_, "attn.w2", {config.attention_heads, config.attention_hidden});
    fill_xavier_uniform(*w2, config.attention_hidden, config.attention_heads, rng);

    auto cls = new_param(w.params_, "cls.weight", {config.num_classes, config.feature_dim()});
    fill_xavier_uniform(*cls, config.feature_dim(), config.num_classes, rng);
    new_param(w.params_, "cls.bias", {1, config.num_classes});
    return w;
}

TensorPtr SnsaWeights::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.tensor;
    throw StateError("unknown parameter: " + name);
}

SnsaWeights SnsaWeights::clone() const {
    SnsaWeights out;
    out.config_ = config_;
    out.params_.reserve(params_.size());
    for (const auto& p : params_) {
        auto t = make_tensor(p.tensor->shape, p.tensor->data, p.tensor->requires_grad);
        out.params_.push_back(Param{p.name, t, p.trainable});
    }
    return out;
}

bool SnsaWeights::data_equal(const SnsaWeights& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != other.params_[i].name) return false;
        if (params_[i].tensor->data != other.params_[i].tensor->data) return false;
    }
    return true;
}

namespace {

// One direction of one LSTM layer over a [T, in] sequence; returns [T, u].
TensorPtr lstm_direction(Graph& g, const TensorPtr& seq, const TensorPtr& w_ih,
                         const TensorPtr& w_hh, const TensorPtr& bias, bool reverse_time) {
    const size_t T = seq->rows();
    const size_t u = w_hh->rows();
    TensorPtr h = make_tensor({1, u});
    TensorPtr c = make_tensor({1, u});
    std::vector<TensorPtr> outputs(T);
    for (size_t step = 0; step < T; ++step) {
        const size_t t = reverse_time ? T - 1 - step : step;
        auto x_t = slice_rows(g, seq, t, 1);
        auto gates = add(g, add(g, matmul(g, x_t, w_ih), matmul(g, h, w_hh)), bias);
        auto i_g = sigmoid(g, slice_cols(g, gates, 0, u));
        auto f_g = sigmoid(g, slice_cols(g, gates, u, u));
        auto g_g = tanh_op(g, slice_cols(g, gates, 2 * u, u));
        auto o_g = sigmoid(g, slice_cols(g, gates, 3 * u, u));
        c = add(g, mul(g, f_g, c), mul(g, i_g, g_g));
        h = mul(g, o_g, tanh_op(g, c));
        outputs[t] = h;
    }
    return concat_rows(g, outputs);
}

TensorPtr blstm_layer(Graph& g, const TensorPtr& seq, const SnsaWeights& w,
                      const std::string& prefix) {
    auto fw = lstm_direction(g, seq, w.find(prefix + ".fw.w_ih"), w.find(prefix + ".fw.w_hh"),
                             w.find(prefix + ".fw.bias"), false);
    auto bw = lstm_direction(g, seq, w.find(prefix + ".bw.w_ih"), w.find(prefix + ".bw.w_hh"),
                             w.find(prefix + ".bw.bias"), true);
    return concat_cols(g, fw, bw);
}

TensorPtr conv_block(Graph& g, const TensorPtr& x, const SnsaWeights& w, size_t layer_idx) {
    const auto& spec = w.config().conv[layer_idx];
    const std::string prefix = "conv" + std::to_string(layer_idx + 1);
    auto conv = conv2d(g, x, w.find(prefix + ".kernels"), w.find(prefix + ".bias"), 1,
                       spec.kernel_h / 2);
    return relu(g, maxpool_temporal(g, conv, spec.temporal_pool));
}

TensorPtr spectrogram_tensor(const Spectrogram& x, const SnsaConfig& config) {
    if (x.mel_bins != config.input_mel_bins)
        throw DimensionError("encode: spectrogram has " + std::to_string(x.mel_bins) +
                             " mel bins, config expects " +
                             std::to_string(config.input_mel_bins));
    auto t = make_tensor({1, x.frames, x.mel_bins});
    t->data = x.values;
    return t;
}

// Shared trunk: [T', 2u] hidden sequence and [T', r] attention columns.
struct EncoderTrunk {
    TensorPtr hidden;     // H, time-major
    TensorPtr attention;  // softmax over time, per head column
};

EncoderTrunk encoder_trunk(Graph& g, const Spectrogram& x, const SnsaWeights& w, bool train_mode,
                           Rng& dropout_rng) {
    const auto& config = w.config();
    auto cube = spectrogram_tensor(x, config);
    auto c1 = conv_block(g, cube, w, 0);
    auto c2 = conv_block(g, c1, w, 1);
    auto seq = to_time_major(g, c2);

    auto h1 = dropout(g, blstm_layer(g, seq, w, "blstm1"), config.dropout, dropout_rng, train_mode);
    auto h2 = dropout(g, blstm_layer(g, h1, w, "blstm2"), config.dropout, dropout_rng, train_mode);

    // scores[t, head] = W2 tanh(W1 H_t); attention normalizes over time.
    auto w1t = transpose(g, w.find("attn.w1"));
    auto w2t = transpose(g, w.find("attn.w2"));
    auto scores = matmul(g, tanh_op(g, matmul(g, h2, w1t)), w2t);
    auto attn = softmax(g, scores, 0);
    return EncoderTrunk{h2, attn};
}

}  // namespace

TensorPtr encode(Graph& g, const Spectrogram& x, const SnsaWeights& w, bool train_mode,
                 Rng& dropout_rng) {
    auto trunk = encoder_trunk(g, x, w, train_mode, dropout_rng);
    auto heads = matmul(g, transpose(g, trunk.attention), trunk.hidden);  // [r, 2u]
    return reshape(g, heads, {1, w.config().feature_dim()});
}

TensorPtr classify(Graph& g, const TensorPtr& h, const SnsaWeights& w) {
    if (h->cols() != w.config().feature_dim())
        throw DimensionError("classify: feature dim " + std::to_string(h->cols()) +
                             " != configured " + std::to_string(w.config().feature_dim()));
    auto logits = add(g, matmul(g, h, transpose(g, w.find("cls.weight"))), w.find("cls.bias"));
    return softmax(g, logits, 1);
}

TensorPtr attention_weights(Graph& g, const Spectrogram& x, const SnsaWeights& w) {
    Rng unused(0);
    return encoder_trunk(g, x, w, false, unused).attention;
}

void set_frozen(SnsaWeights& w, size_t freeze_first_n_conv) {
    if (freeze_first_n_conv > 2)
        throw ConfigError("set_frozen: at most 2 conv layers can be frozen, got " +
                          std::to_string(freeze_first_n_conv));
    for (auto& p : w.params()) {
        size_t layer = 0;
        if (p.name.rfind("conv1.", 0) == 0)
            layer = 1;
        else if (p.name.rfind("conv2.", 0) == 0)
            layer = 2;
        else
            continue;
        const bool frozen = layer <= freeze_first_n_conv;
        p.trainable = !frozen;
        p.tensor->requires_grad = !frozen;
    }
}

void save_weights(const std::string& path, const SnsaWeights& w,
                  const std::vector<CheckpointBlock>& extras) {
    Checkpoint ckpt;
    ckpt.config_hash = w.config().hash();
    ckpt.meta_json = w.config().to_json();
    for (const auto& p : w.params())
        ckpt.blocks.push_back(CheckpointBlock{p.name, p.tensor->shape, p.tensor->data});
    for (const auto& b : extras) ckpt.blocks.push_back(b);
    save_checkpoint(path, ckpt);
}

SnsaWeights weights_from_checkpoint(const Checkpoint& ckpt) {
    const SnsaConfig config = SnsaConfig::from_json(ckpt.meta_json);
    if (config.hash() != ckpt.config_hash)
        throw InputError("checkpoint config hash does not match its stored configuration");
    SnsaWeights w = SnsaWeights::init(config, 0);
    for (auto& p : w.params()) {
        const CheckpointBlock* b = ckpt.find(p.name);
        if (b == nullptr) throw InputError("checkpoint missing parameter block '" + p.name + "'");
        if (b->shape != p.tensor->shape)
            throw InputError("checkpoint block '" + p.name + "' has unexpected shape");
        p.tensor->data = b->data;
    }
    return w;
}

SnsaWeights load_weights(const std::string& path, std::vector<CheckpointBlock>* extras) {
    Checkpoint ckpt = load_checkpoint(path);
    SnsaWeights w = weights_from_checkpoint(ckpt);
    if (extras != nullptr) {
        extras->clear();
        for (auto& b : ckpt.blocks) {
            bool is_param = false;
            for (const auto& p : w.params())
                if (p.name == b.name) {
                    is_param = true;
                    break;
                }
            if (!is_param) extras->push_back(std::move(b));
        }
    }
    return w;
}

}  // namespace nnpm
