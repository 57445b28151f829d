#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "support.hpp"

using namespace phasenet;

namespace {

// Fraction of (attack, normal) pairs ordered correctly, ties counting one half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                ++pairs;
                num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return num / static_cast<double>(pairs);
}

}  // namespace

TEST(Percentile, LinearInterpolation) {
    std::vector<double> s(100);
    std::iota(s.begin(), s.end(), 1.0);
    std::shuffle(s.begin(), s.end(), std::mt19937_64(1));
    EXPECT_NEAR(percentile_threshold(s, 99), 99.01, 1e-12);
    EXPECT_EQ(percentile_threshold(s, 100), 100.0);
    EXPECT_NEAR(percentile_threshold(s, 50), 50.5, 1e-12);
    for (double p : {1.0, 37.5, 99.0, 100.0}) EXPECT_EQ(percentile_threshold({4.25}, p), 4.25);
    EXPECT_THROW(percentile_threshold({}, 99), DataError);
    EXPECT_THROW(percentile_threshold({1.0}, 0.0), ConfigError);
    EXPECT_THROW(percentile_threshold({1.0}, 101.0), ConfigError);
}

TEST(Classify, StrictBoundary) {
    EXPECT_EQ(classify({0.5, 0.7, 0.70000000001}, 0.7), (std::vector<int>{0, 0, 1}));
    EXPECT_EQ(classify({0.1, 0.2, 0.3}, 5.0), (std::vector<int>{0, 0, 0}));
}

TEST(Classify, HandWorkedFixture) {
    // Validation scores 0.2, 0.4, 0.5, 0.9: tau at p = 75 sits at position
    // 2.25, i.e. 0.5 + 0.25 * 0.4 = 0.6.
    const double tau = percentile_threshold({0.9, 0.2, 0.5, 0.4}, 75);
    EXPECT_NEAR(tau, 0.6, 1e-12);
    const std::vector<double> scores{0.10, 0.60, 0.61, 0.95, 0.30, 2.00};
    const std::vector<int> labels{0, 0, 1, 1, 1, 0};
    const auto pred = classify(scores, tau);
    EXPECT_EQ(pred, (std::vector<int>{0, 0, 1, 1, 0, 1}));
    const auto r = evaluate(pred, labels, scores, tau);
    EXPECT_EQ(r.tp, 2u);
    EXPECT_EQ(r.fp, 1u);
    EXPECT_EQ(r.tn, 2u);
    EXPECT_EQ(r.fn, 1u);
    EXPECT_NEAR(r.attack.precision, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.attack.recall, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.normal.precision, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.accuracy, 4.0 / 6.0, 1e-15);
    // Ordered pairs: attacks {0.61, 0.95, 0.30} vs normals {0.10, 0.60, 2.00}: 2 + 2 + 1 of 9.
    EXPECT_NEAR(*r.roc_auc, 5.0 / 9.0, 1e-15);
    // Descending: 2.00(n) 0.95(a) 0.61(a) 0.60(n) 0.30(a) 0.10(n)
    // AP = 1/3 * 1/2 + 1/3 * 2/3 + 1/3 * 3/5.
    EXPECT_NEAR(*r.average_precision, (0.5 + 2.0 / 3.0 + 0.6) / 3.0, 1e-15);
}

TEST(Auc, Examples) {
    EXPECT_EQ(*roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
    EXPECT_EQ(*roc_auc({0.1, 0.2, 0.9, 0.8}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(*average_precision({0.1, 0.2, 0.9, 0.8}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(*roc_auc({0.5, 0.5, 0.5}, {0, 1, 1}), 0.5);
    EXPECT_FALSE(roc_auc({0.1, 0.2}, {1, 1}).has_value());
    EXPECT_FALSE(average_precision({0.1, 0.2}, {0, 0}).has_value());
    const auto r = evaluate({0, 0}, {0, 0}, {0.1, 0.2});
    EXPECT_FALSE(r.roc_auc.has_value());
    EXPECT_TRUE(to_json(r)["roc_auc"].is_null());
    EXPECT_NE(format_table(r).find("undefined"), std::string::npos);
}

TEST(Auc, EqualsPairCountingExactly) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> len(2, 200), level(0, 12);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = static_cast<std::size_t>(len(rng));
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = level(rng) * 0.25;  // coarse grid so ties are common
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        EXPECT_EQ(*roc_auc(s, y), brute_auc(s, y)) << trial;
    }
}

TEST(Auc, PermutationNullIsOneHalf) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> s(60);
    for (auto& v : s) v = g(rng);
    std::vector<int> y(60, 0);
    std::fill(y.begin(), y.begin() + 20, 1);
    double sum = 0.0;
    const int perms = 10000;
    for (int k = 0; k < perms; ++k) {
        std::shuffle(y.begin(), y.end(), rng);
        sum += *roc_auc(s, y);
    }
    EXPECT_NEAR(sum / perms, 0.5, 0.02);
}

TEST(Evaluate, RecallIsMonotoneInThreshold) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<double> s(300);
    std::vector<int> y(300);
    for (std::size_t i = 0; i < 300; ++i) {
        y[i] = i % 3 == 0;
        s[i] = g(rng) + y[i];
    }
    double prev = 2.0;
    for (double tau = -4.0; tau <= 5.0; tau += 0.05) {
        const auto r = evaluate(classify(s, tau), y, s, tau);
        EXPECT_LE(r.attack.recall, prev);
        EXPECT_EQ(r.count(), 300u);
        EXPECT_EQ(r.accuracy, static_cast<double>(r.tp + r.tn) / 300.0);
        if (r.attack.precision + r.attack.recall > 0) {
            EXPECT_NEAR(r.attack.f1, 2 * r.attack.precision * r.attack.recall / (r.attack.precision + r.attack.recall),
                        1e-15);
        }
        prev = r.attack.recall;
    }
}

TEST(Evaluate, ReorderingWindowsReordersPredictions) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u;
    std::vector<double> s(50);
    for (auto& v : s) v = u(rng);
    std::vector<std::size_t> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> sp(50);
    for (std::size_t i = 0; i < 50; ++i) sp[i] = s[perm[i]];
    const auto a = classify(s, 0.5), b = classify(sp, 0.5);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(b[i], a[perm[i]]);
}

TEST(Evaluate, LengthMismatch) { EXPECT_THROW(evaluate({0, 1}, {0}, {0.1, 0.2}), DataError); }

TEST(Score, EqualsCompositeLossAndIsDeterministic) {
    ModelParams p = init_params(testing_support::tiny_model());
    const auto ws = prepare_all(testing_support::sine_windows(4, 4, 16, 5), testing_support::tiny_spectral());
    const auto a = score_windows(ws, p, LossWeights{});
    const auto b = score_windows(ws, p, LossWeights{});
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        EXPECT_EQ(a[i], composite_loss(ws[i], p, LossWeights{}).total);
        EXPECT_GE(a[i], 0.0);
    }
}

TEST(Score, PerfectReconstructionScoresNearZero) {
    // A silent window has zero magnitude, zero phase and all-ones PCI; zeroed
    // output layers reproduce exactly that.
    ModelParams p = init_params(testing_support::tiny_model());
    for (auto* l : {&p.magnitude_head.out, &p.phase_head.out}) {
        l->w.value.fill(0.0);
        l->b.value.fill(0.0);
    }
    SensorWindow w;
    w.data = Matrix(16, 4);
    const auto s = score_windows({prepare(w, testing_support::tiny_spectral())}, p, LossWeights{});
    EXPECT_LE(s[0], 1e-10);
}
