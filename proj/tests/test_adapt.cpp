#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nnpm/adapt.hpp"
#include "nnpm/errors.hpp"
#include "test_util.hpp"

using namespace nnpm;

namespace {

MemorySnapshot orthonormal_snapshot(size_t n, std::vector<int> labels) {
    MemorySnapshot snap;
    snap.slots = n;
    snap.dim = n;
    snap.values.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) snap.values[i * n + i] = 1.0;
    snap.labels = std::move(labels);
    return snap;
}

MemorySnapshot random_snapshot(size_t n, size_t d, uint64_t seed, size_t num_classes = 4) {
    Rng rng(seed);
    MemorySnapshot snap;
    snap.slots = n;
    snap.dim = d;
    snap.values.resize(n * d);
    snap.labels.resize(n);
    for (size_t j = 0; j < n; ++j) {
        double sq = 0.0;
        for (size_t i = 0; i < d; ++i) {
            snap.values[j * d + i] = rng.uniform(-1.0, 1.0);
            sq += snap.values[j * d + i] * snap.values[j * d + i];
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (size_t i = 0; i < d; ++i) snap.values[j * d + i] *= inv;
        snap.labels[j] = static_cast<int>(rng.uniform_int(num_classes));
    }
    return snap;
}

// Brute-force reference: thresholding, target vector, multilabel, mining.
struct NaivePseudo {
    std::vector<size_t> positives;
    std::vector<double> targets;
    std::vector<int> multilabel;
    std::vector<size_t> mined;
    double pos_mean = 0.0;
    double neg_mean_mined = 0.0;
};

NaivePseudo naive_reference(const std::vector<double>& scores, const std::vector<int>& labels,
                            double gamma, double lambda, size_t num_classes) {
    NaivePseudo out;
    out.targets.assign(scores.size(), 0.0);
    out.multilabel.assign(num_classes, 0);
    std::vector<size_t> negatives;
    for (size_t j = 0; j < scores.size(); ++j) {
        if (scores[j] >= gamma) {
            out.positives.push_back(j);
            out.targets[j] = 1.0;
            out.multilabel[static_cast<size_t>(labels[j])] = 1;
        } else {
            negatives.push_back(j);
        }
    }
    if (!negatives.empty()) {
        const size_t keep = static_cast<size_t>(
            std::ceil(lambda * static_cast<double>(negatives.size())));
        // selection by repeated max with ascending-index tie break
        std::vector<size_t> pool = negatives;
        for (size_t k = 0; k < keep && !pool.empty(); ++k) {
            size_t best = 0;
            for (size_t i = 1; i < pool.size(); ++i)
                if (scores[pool[i]] > scores[pool[best]]) best = i;
            out.mined.push_back(pool[best]);
            pool.erase(pool.begin() + static_cast<long>(best));
        }
        std::sort(out.mined.begin(), out.mined.end());
    }
    double pos_sum = 0.0;
    for (size_t j : out.positives) pos_sum += (scores[j] - 1.0) * (scores[j] - 1.0);
    out.pos_mean = out.positives.empty() ? 0.0 : pos_sum / static_cast<double>(out.positives.size());
    double neg_sum = 0.0;
    for (size_t j : out.mined) neg_sum += scores[j] * scores[j];
    out.neg_mean_mined = out.mined.empty() ? 0.0 : neg_sum / static_cast<double>(out.mined.size());
    return out;
}

}  // namespace

TEST_CASE("similarity against orthonormal memory") {
    auto snap = orthonormal_snapshot(5, {0, 1, 2, 3, 0});
    std::vector<double> q(5, 0.0);
    q[3] = 1.0;
    auto scores = similarity_scores(snap, q);
    for (size_t j = 0; j < 5; ++j)
        CHECK(scores[j] == doctest::Approx(j == 3 ? 1.0 : 0.0).epsilon(1e-14));

    std::vector<double> anti(5, 0.0);
    anti[0] = -1.0;
    CHECK(similarity_scores(snap, anti)[0] == doctest::Approx(-1.0).epsilon(1e-14));

    CHECK_THROWS_AS(similarity_scores(snap, std::vector<double>{1.0, 0.0}), DimensionError);
    CHECK_THROWS_AS(similarity_scores(snap, std::vector<double>(5, 0.0)), InputError);
}

TEST_CASE("similarity matches a naive dot-product loop") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto snap = random_snapshot(12, 6, derive_seed(200, seed));
        Rng rng(derive_seed(201, seed));
        std::vector<double> h(6);
        for (auto& v : h) v = rng.uniform(-2.0, 2.0);

        auto scores = similarity_scores(snap, h);

        double norm = 0.0;
        for (double v : h) norm += v * v;
        norm = std::sqrt(norm);
        for (size_t j = 0; j < snap.slots; ++j) {
            double dot = 0.0;
            for (size_t i = 0; i < snap.dim; ++i) dot += snap.values[j * snap.dim + i] * h[i] / norm;
            REQUIRE(scores[j] == doctest::Approx(dot).epsilon(1e-12));
            REQUIRE(scores[j] >= -1.0 - 1e-12);
            REQUIRE(scores[j] <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("pseudo multilabel assignment examples") {
    auto pt = assign_pseudo_multilabel({0.95, 0.5, 0.91}, {2, 0, 2}, 0.9);
    CHECK(pt.positive_set == std::vector<size_t>{0, 2});
    CHECK(pt.slot_targets == std::vector<double>{1, 0, 1});
    CHECK(pt.class_multilabel == std::vector<int>{0, 0, 1, 0});

    auto empty = assign_pseudo_multilabel({0.99, 0.5, 0.7}, {0, 1, 2}, 1.0);
    CHECK(empty.positive_set.empty());
    CHECK(empty.slot_targets == std::vector<double>{0, 0, 0});
    CHECK(empty.class_multilabel == std::vector<int>{0, 0, 0, 0});

    auto vacuous = assign_pseudo_multilabel({-0.3, 0.1, -1.0}, {0, 1, 2}, -1.0);
    CHECK(vacuous.positive_set.size() == 3);

    CHECK_THROWS_AS(assign_pseudo_multilabel({0.5}, {0}, 1.5), ConfigError);
}

TEST_CASE("threshold monotonicity") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto snap = random_snapshot(16, 8, derive_seed(210, seed));
        Rng rng(derive_seed(211, seed));
        std::vector<double> h(8);
        for (auto& v : h) v = rng.uniform(-1.0, 1.0);
        auto scores = similarity_scores(snap, h);
        std::vector<size_t> prev;
        bool first = true;
        for (double gamma = -1.0; gamma <= 1.0; gamma += 0.125) {
            auto pt = assign_pseudo_multilabel(scores, snap.labels, gamma);
            if (!first) {
                // shrinking as gamma grows
                std::set<size_t> cur(pt.positive_set.begin(), pt.positive_set.end());
                for (size_t j : cur) REQUIRE(std::count(prev.begin(), prev.end(), j) == 1);
            }
            prev = pt.positive_set;
            first = false;
        }
    }
}

TEST_CASE("source cross entropy examples") {
    std::vector<std::vector<double>> uniform(3, std::vector<double>(4, 0.25));
    CHECK(source_ce_loss(uniform, {0, 3, 1}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    std::vector<std::vector<double>> perfect = {{1, 0, 0, 0}, {0, 0, 1, 0}};
    CHECK(source_ce_loss(perfect, {0, 2}) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<std::vector<double>> batch = {
        {0.7, 0.1, 0.1, 0.1}, {0.25, 0.25, 0.25, 0.25}, {0.05, 0.05, 0.8, 0.1}};
    std::vector<size_t> labels = {0, 1, 2};
    double manual = 0.0;
    for (size_t k = 0; k < 3; ++k) manual += -std::log(batch[k][labels[k]]);
    manual /= 3.0;
    CHECK(source_ce_loss(batch, labels) == doctest::Approx(manual).epsilon(1e-12));

    CHECK_THROWS_AS(source_ce_loss(batch, {0, 1, 9}), InputError);
}

TEST_CASE("target mse split examples") {
    auto exact = target_mse_loss({1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
    CHECK(exact.pos_mean == 0.0);
    for (double e : exact.neg_sq_errors) CHECK(e == 0.0);

    auto one_pos = target_mse_loss({0.8, 0.3}, {1.0, 0.0});
    CHECK(one_pos.pos_mean == doctest::Approx(0.04).epsilon(1e-12));
    REQUIRE(one_pos.neg_sq_errors.size() == 1);
    CHECK(one_pos.neg_sq_errors[0] == doctest::Approx(0.09).epsilon(1e-12));

    Rng rng(303);
    std::vector<double> scores(20), targets(20);
    for (auto& v : scores) v = rng.uniform(-1.0, 1.0);
    for (auto& v : targets) v = rng.uniform01() < 0.3 ? 1.0 : 0.0;
    auto split = target_mse_loss(scores, targets);
    double pos_sum = 0.0;
    size_t pos_n = 0, neg_i = 0;
    for (size_t j = 0; j < 20; ++j) {
        const double err = (scores[j] - targets[j]) * (scores[j] - targets[j]);
        if (targets[j] == 1.0) {
            pos_sum += err;
            ++pos_n;
        } else {
            REQUIRE(split.neg_sq_errors[neg_i] == doctest::Approx(err).epsilon(1e-12));
            REQUIRE(split.neg_indices[neg_i] == j);
            ++neg_i;
        }
    }
    if (pos_n > 0)
        CHECK(split.pos_mean == doctest::Approx(pos_sum / pos_n).epsilon(1e-12));
}

TEST_CASE("hard negative mining examples") {
    std::vector<double> scores = {0.9, 0.1, 0.5, 0.3};
    std::vector<size_t> negs = {0, 1, 2, 3};
    auto mined = hard_negative_mine(scores, negs, 0.5);
    CHECK(mined == std::vector<size_t>{0, 2});

    CHECK(hard_negative_mine(scores, negs, 1.0) == negs);
    CHECK(hard_negative_mine(scores, {}, 0.5).empty());

    std::vector<double> hundred(100);
    std::vector<size_t> all(100);
    Rng rng(401);
    for (size_t i = 0; i < 100; ++i) {
        hundred[i] = rng.uniform(-1.0, 1.0);
        all[i] = i;
    }
    auto top = hard_negative_mine(hundred, all, 0.01);
    REQUIRE(top.size() == 1);
    size_t argmax = 0;
    for (size_t i = 1; i < 100; ++i)
        if (hundred[i] > hundred[argmax]) argmax = i;
    CHECK(top[0] == argmax);

    CHECK_THROWS_AS(hard_negative_mine(scores, negs, 0.0), ConfigError);
}

TEST_CASE("mining is deterministic under ties") {
    std::vector<double> scores = {0.5, 0.5, 0.5, 0.2, 0.5};
    std::vector<size_t> negs = {0, 1, 2, 3, 4};
    auto a = hard_negative_mine(scores, negs, 0.4);  // ceil(2) = 2
    auto b = hard_negative_mine(scores, negs, 0.4);
    CHECK(a == b);
    CHECK(a == std::vector<size_t>{0, 1});
}

TEST_CASE("pseudo-labels and mining match brute force on random instances") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(derive_seed(500, seed));
        const size_t n = 1 + rng.uniform_int(32);
        auto snap = random_snapshot(n, 8, derive_seed(501, seed));
        std::vector<double> h(8);
        for (auto& v : h) v = rng.uniform(-1.0, 1.0);
        const double gamma = rng.uniform(-0.5, 0.95);
        const double lambda = rng.uniform(0.01, 1.0);

        auto scores = similarity_scores(snap, h);
        auto pt = assign_pseudo_multilabel(scores, snap.labels, gamma);
        auto mse = target_mse_loss(pt.slot_scores, pt.slot_targets);
        auto mined = hard_negative_mine(pt.slot_scores, mse.neg_indices, lambda);

        auto ref = naive_reference(scores, snap.labels, gamma, lambda, 4);
        REQUIRE(pt.positive_set == ref.positives);
        REQUIRE(pt.slot_targets == ref.targets);
        REQUIRE(pt.class_multilabel == ref.multilabel);
        REQUIRE(mined == ref.mined);
        REQUIRE(mse.pos_mean == ref.pos_mean);  // identical arithmetic order
    }
}

TEST_CASE("target loss graph: hand-computed value") {
    MemorySnapshot snap;
    snap.slots = 3;
    snap.dim = 4;
    snap.values = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
    snap.labels = {0, 1, 2};

    Graph g;
    auto h = make_tensor({1, 4}, {0.8, 0.6, 0.0, 0.0}, true);
    auto mem_t = snapshot_transposed_tensor(snap);
    auto loss = target_loss_for_example(g, h, mem_t, snap.labels, 0.75, 0.5, true);

    CHECK(loss.assignment.positive_set == std::vector<size_t>{0});
    CHECK(loss.pos->data[0] == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(loss.neg->data[0] == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(loss.hard->data[0] == doctest::Approx(0.40).epsilon(1e-12));
    // exact breakdown additivity
    CHECK(loss.hard->data[0] == loss.pos->data[0] + loss.neg->data[0]);

    // all-negative variant keeps both negatives
    Graph g2;
    auto loss_all = target_loss_for_example(g2, h, mem_t, snap.labels, 0.75, 0.5, false);
    CHECK(loss_all.neg->data[0] == doctest::Approx((0.36 + 0.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("memory snapshot receives no gradient") {
    auto snap = random_snapshot(6, 5, 601);
    Graph g;
    Rng rng(602);
    auto h = nnpm_test::random_tensor({1, 5}, rng, 0.2, 1.0);
    auto mem_t = snapshot_transposed_tensor(snap);
    auto loss = target_loss_for_example(g, h, mem_t, snap.labels, 0.2, 0.5, true);
    h->ensure_grad();
    h->zero_grad();
    g.backward(loss.hard);
    CHECK(mem_t->grad.empty());
    CHECK_FALSE(mem_t->requires_grad);
    double mag = 0.0;
    for (double v : h->grad) mag += std::fabs(v);
    CHECK(mag > 0.0);

    auto grad_mem = snapshot_transposed_tensor(snap);
    grad_mem->requires_grad = true;
    Graph g3;
    CHECK_THROWS_AS(target_loss_for_example(g3, h, grad_mem, snap.labels, 0.2, 0.5, true),
                    ContractError);
}

TEST_CASE("target loss gradient vs finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto snap = random_snapshot(10, 6, derive_seed(610, seed));
        Rng rng(derive_seed(611, seed));
        auto h = nnpm_test::random_tensor({1, 6}, rng, 0.3, 1.0);

        // keep the threshold away from every score so the positive set is
        // locally constant under the finite-difference probes
        auto mem_t = snapshot_transposed_tensor(snap);
        Graph probe;
        auto probs = similarity_scores(snap, h->data);
        double gamma = 0.5;
        double best_margin = 0.0;
        for (double cand = -0.8; cand <= 0.9; cand += 0.1) {
            double margin = 2.0;
            for (double s : probs) margin = std::min(margin, std::fabs(s - cand));
            if (margin > best_margin) {
                best_margin = margin;
                gamma = cand;
            }
        }

        auto res = nnpm_test::check_gradients({h}, [&](Graph& g) {
            auto mem_const = snapshot_transposed_tensor(snap);
            return target_loss_for_example(g, h, mem_const, snap.labels, gamma, 0.5, true).hard;
        });
        CHECK_MESSAGE(res.max_rel_err < 1e-4, "seed " << seed << ": " << res.worst);
    }
}

TEST_CASE("loss breakdown additivity is exact") {
    auto b = make_breakdown(1.386, 0.3, 0.1);
    CHECK(b.target_hard == 0.3 + 0.1);
    CHECK(b.total == 1.386 + b.target_hard);
    auto zero = make_breakdown(0.0, 0.0, 0.0);
    CHECK(zero.total == 0.0);
    // spot value from simple addition
    auto sum = make_breakdown(1.386, 0.4, 0.0);
    CHECK(sum.total == doctest::Approx(1.786).epsilon(1e-12));
}
