#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "nnpm/model.hpp"
#include "test_util.hpp"

using namespace nnpm;

namespace {

// Small architecture that keeps finite-difference sweeps fast.
SnsaConfig tiny_config() {
    SnsaConfig cfg;
    cfg.input_mel_bins = 6;
    cfg.conv[0] = ConvLayerSpec{2, 3, 3, 2};
    cfg.conv[1] = ConvLayerSpec{3, 3, 3, 2};
    cfg.blstm_hidden = 4;
    cfg.attention_hidden = 5;
    cfg.attention_heads = 2;
    cfg.dropout = 0.0;
    return cfg;
}

Spectrogram random_spectrogram(size_t frames, size_t bins, uint64_t seed) {
    Rng rng(seed);
    Spectrogram s;
    s.frames = frames;
    s.mel_bins = bins;
    s.values.resize(frames * bins);
    for (auto& v : s.values) v = rng.uniform(-1.0, 1.0);
    return s;
}

}  // namespace

TEST_CASE("attention weights sum to one over time per head") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 42);
    auto x = random_spectrogram(16, 6, 1);
    Graph g;
    auto attn = attention_weights(g, x, w);
    REQUIRE(attn->rows() == 4);  // 16 -> pool2 -> 8 -> pool2 -> 4
    REQUIRE(attn->cols() == cfg.attention_heads);
    for (size_t head = 0; head < cfg.attention_heads; ++head) {
        double total = 0.0;
        for (size_t t = 0; t < attn->rows(); ++t) {
            CHECK(attn->at(t, head) >= 0.0);
            total += attn->at(t, head);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("single time step replicates the hidden state across heads") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 43);
    auto x = random_spectrogram(4, 6, 2);  // 4 -> 2 -> 1 time step
    Graph g;
    Rng rng(0);
    auto h = encode(g, x, w, false, rng);
    REQUIRE(h->cols() == cfg.feature_dim());
    const size_t span = 2 * cfg.blstm_hidden;
    for (size_t head = 1; head < cfg.attention_heads; ++head)
        for (size_t i = 0; i < span; ++i)
            CHECK(h->data[head * span + i] == doctest::Approx(h->data[i]).epsilon(1e-12));
}

TEST_CASE("encoder is sensitive to temporal order") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 44);
    auto x = random_spectrogram(16, 6, 3);
    auto permuted = x;
    for (size_t m = 0; m < 6; ++m) std::swap(permuted.at(1, m), permuted.at(14, m));

    Graph g1, g2;
    Rng rng(0);
    auto h1 = encode(g1, x, w, false, rng);
    auto h2 = encode(g2, permuted, w, false, rng);
    double max_diff = 0.0;
    for (size_t i = 0; i < h1->size(); ++i)
        max_diff = std::max(max_diff, std::fabs(h1->data[i] - h2->data[i]));
    CHECK(max_diff > 1e-8);
}

TEST_CASE("encode rejects mismatched input width") {
    auto w = SnsaWeights::init(tiny_config(), 45);
    auto bad = random_spectrogram(16, 7, 4);
    Graph g;
    Rng rng(0);
    CHECK_THROWS_AS(encode(g, bad, w, false, rng), DimensionError);
}

TEST_CASE("classify examples") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 46);

    // Zero classifier -> uniform probabilities.
    auto zero = w.clone();
    auto cls_w = zero.find("cls.weight");
    auto cls_b = zero.find("cls.bias");
    std::fill(cls_w->data.begin(), cls_w->data.end(), 0.0);
    std::fill(cls_b->data.begin(), cls_b->data.end(), 0.0);
    Graph g;
    auto h = make_tensor({1, cfg.feature_dim()});
    for (size_t i = 0; i < h->size(); ++i) h->data[i] = 0.1 * static_cast<double>(i);
    auto probs = classify(g, h, zero);
    double total = 0.0;
    for (double p : probs->data) {
        CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
        total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    // Dominant logit wins.
    cls_b->data = {10.0, 0.0, 0.0, 0.0};
    Graph g2;
    auto skewed = classify(g2, h, zero);
    size_t argmax = 0;
    for (size_t i = 1; i < 4; ++i)
        if (skewed->data[i] > skewed->data[argmax]) argmax = i;
    CHECK(argmax == 0);
}

TEST_CASE("gradient check through classify(encode(x))") {
    auto cfg = tiny_config();
    auto x = random_spectrogram(8, 6, 7);
    for (uint64_t seed = 0; seed < 3; ++seed) {
        auto w = SnsaWeights::init(cfg, derive_seed(100, seed));
        std::vector<TensorPtr> params;
        for (auto& p : w.params()) params.push_back(p.tensor);
        std::shared_ptr<Tensor> mix;
        Rng wrng(derive_seed(101, seed));
        Rng dropout_rng(0);
        auto res = nnpm_test::check_gradients(params, [&](Graph& g) {
            auto probs = classify(g, encode(g, x, w, false, dropout_rng), w);
            return nnpm_test::weighted_sum(g, probs, wrng, mix);
        });
        CHECK_MESSAGE(res.max_rel_err < 1e-3, "seed " << seed << ": " << res.worst);
    }
}

TEST_CASE("siamese branches share one parameter set") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 48);
    auto xa = random_spectrogram(8, 6, 8);
    auto xb = random_spectrogram(8, 6, 9);
    Rng rng(0);

    Graph g1, g2;
    auto ha = encode(g1, xa, w, false, rng);
    auto hb = encode(g2, xb, w, false, rng);

    w.find("attn.w1")->data[0] += 0.5;
    Graph g3, g4;
    auto ha2 = encode(g3, xa, w, false, rng);
    auto hb2 = encode(g4, xb, w, false, rng);
    CHECK(ha->data != ha2->data);
    CHECK(hb->data != hb2->data);
}

TEST_CASE("dropout determinism contract") {
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    auto w = SnsaWeights::init(cfg, 49);
    auto x = random_spectrogram(16, 6, 10);

    Graph g1, g2, g3;
    Rng r1(77), r2(77), r3(78);
    auto a = encode(g1, x, w, true, r1);
    auto b = encode(g2, x, w, true, r2);
    auto c = encode(g3, x, w, true, r3);
    CHECK(a->data == b->data);
    CHECK(a->data != c->data);

    // Evaluation mode ignores the rng entirely.
    Graph g4, g5;
    Rng r4(1), r5(2);
    CHECK(encode(g4, x, w, false, r4)->data == encode(g5, x, w, false, r5)->data);
}

TEST_CASE("set_frozen controls gradient flow and trainability flags") {
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 50);
    auto x = random_spectrogram(8, 6, 11);

    set_frozen(w, 0);
    for (const auto& p : w.params()) CHECK(p.trainable);

    set_frozen(w, 1);
    Rng rng(0);
    Graph g;
    auto loss = sum_all(g, encode(g, x, w, false, rng));
    for (auto& p : w.params()) {
        if (p.tensor->requires_grad) {
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
        }
    }
    g.backward(loss);
    for (const auto& p : w.params()) {
        if (p.name.rfind("conv1.", 0) == 0) {
            CHECK_FALSE(p.trainable);
            CHECK(p.tensor->grad.empty());
        } else if (p.name.rfind("conv2.", 0) == 0) {
            CHECK(p.trainable);
            double mag = 0.0;
            for (double v : p.tensor->grad) mag += std::fabs(v);
            CHECK(mag > 0.0);
        }
    }

    CHECK_THROWS_AS(set_frozen(w, 3), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    nnpm_test::TempDir tmp("ckpt");
    auto cfg = tiny_config();
    auto w = SnsaWeights::init(cfg, 51);
    const std::string p1 = tmp.str("a.ckpt");
    const std::string p2 = tmp.str("b.ckpt");
    save_weights(p1, w);
    auto loaded = load_weights(p1);
    CHECK(loaded.data_equal(w));
    save_weights(p2, loaded);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // Encoding is unchanged by a save/load cycle.
    auto x = random_spectrogram(8, 6, 12);
    Graph g1, g2;
    Rng rng(0);
    CHECK(encode(g1, x, w, false, rng)->data == encode(g2, x, loaded, false, rng)->data);
}

TEST_CASE("checkpoint with mismatched config hash is rejected") {
    nnpm_test::TempDir tmp("ckpt_bad");
    auto w = SnsaWeights::init(tiny_config(), 52);
    const std::string path = tmp.str("w.ckpt");
    save_weights(path, w);

    // Corrupt one byte of the stored hash (offset: 8 magic + 4 version).
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(12);
    char b = 0;
    f.read(&b, 1);
    f.seekp(12);
    b = static_cast<char>(b ^ 0xff);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_AS(load_weights(path), InputError);
}

TEST_CASE("checkpoint extras ride along") {
    nnpm_test::TempDir tmp("ckpt_extra");
    auto w = SnsaWeights::init(tiny_config(), 53);
    CheckpointBlock extra{"memory.slots", {2, 3}, {1, 2, 3, 4, 5, 6}};
    const std::string path = tmp.str("w.ckpt");
    save_weights(path, w, {extra});
    std::vector<CheckpointBlock> extras;
    auto loaded = load_weights(path, &extras);
    REQUIRE(extras.size() == 1);
    CHECK(extras[0].name == "memory.slots");
    CHECK(extras[0].data == extra.data);
}

TEST_CASE("config json round trip and validation") {
    auto cfg = tiny_config();
    auto parsed = SnsaConfig::from_json(cfg.to_json());
    CHECK(parsed.hash() == cfg.hash());
    CHECK(parsed.feature_dim() == cfg.feature_dim());

    CHECK_THROWS_AS(SnsaConfig::from_json("{\"blstm_hidden\": 0}"), ConfigError);
    CHECK_THROWS_AS(SnsaConfig::from_json("not json"), ConfigError);
}
