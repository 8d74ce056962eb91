#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "selm/attack.hpp"
#include "oracles.hpp"

using namespace selm;

namespace {

// Per class n Gaussian vectors in R^d; class 1 is shifted by `shift` in every coordinate.
CiphertextDataset synthetic(std::uint64_t seed, std::size_t n, std::size_t d, double shift) {
    Rng rng(seed);
    CiphertextDataset ds;
    ds.d = d;
    for (int label : {0, 1})
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<float> t(d);
            for (auto& v : t) v = static_cast<float>(rng.normal() + label * shift);
            ds.thetas.push_back(std::move(t));
            ds.labels.push_back(label);
        }
    assign_split(ds, 0.8);
    return ds;
}

GameOptions quick_options() {
    GameOptions o;
    o.classifiers = {Classifier::knn, Classifier::lda};
    o.knn_ks = {5, 25};
    return o;
}

} // namespace

TEST(Features, ZeroAndConstantVectors) {
    const std::vector<float> zero(10, 0.0f);
    for (double v : extract_features(zero)) EXPECT_EQ(v, 0.0);

    const double a = 0.25;
    const std::size_t d = 64;
    const std::vector<float> c(d, static_cast<float>(a));
    const Features f = extract_features(c);
    EXPECT_DOUBLE_EQ(f[0], a);
    EXPECT_NEAR(f[1], 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(f[2], a);
    EXPECT_DOUBLE_EQ(f[3], a);
    EXPECT_DOUBLE_EQ(f[4], d * a);
    EXPECT_DOUBLE_EQ(f[5], std::sqrt(static_cast<double>(d)) * a);
}

TEST(Features, MatchesRecomputation) {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        std::vector<float> v(1 + rng.below(500));
        for (auto& x : v) x = static_cast<float>(rng.normal() * 3.0 - 1.0);
        const double n = static_cast<double>(v.size());
        double sum = 0, l1 = 0, sq = 0;
        for (float x : v) {
            sum += x;
            l1 += std::fabs(x);
            sq += double(x) * x;
        }
        const double mean = sum / n;
        double var = 0;
        for (float x : v) var += (x - mean) * (x - mean);
        const Features f = extract_features(v);
        EXPECT_NEAR(f[0], mean, 1e-12);
        EXPECT_NEAR(f[1], std::sqrt(var / n), 1e-12);
        EXPECT_EQ(f[2], *std::max_element(v.begin(), v.end()));
        EXPECT_EQ(f[3], *std::min_element(v.begin(), v.end()));
        EXPECT_NEAR(f[4], l1, 1e-9);
        EXPECT_NEAR(f[5], std::sqrt(sq), 1e-9);
    }
}

TEST(Features, PermutationInvariant) {
    Rng rng(2);
    std::vector<float> v(257);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    const Features f = extract_features(v);
    for (int t = 0; t < 10; ++t) {
        rng.shuffle(v.begin(), v.end());
        const Features g = extract_features(v);
        for (std::size_t i = 0; i < kFeatureCount; ++i) EXPECT_NEAR(g[i], f[i], 1e-12 * (1 + std::fabs(f[i])));
    }
    EXPECT_THROW(extract_features(std::vector<float>{}), PreconditionError);
}

TEST(Binomial, SmallCases) {
    EXPECT_DOUBLE_EQ(binomial_test(1, 1), 0.5);
    EXPECT_DOUBLE_EQ(binomial_test(2, 2), 0.25);
    EXPECT_DOUBLE_EQ(binomial_test(0, 7), 1.0);
    EXPECT_THROW(binomial_test(3, 2), PreconditionError);
    EXPECT_THROW(binomial_test(0, 0), PreconditionError);
}

TEST(Binomial, ExactBigIntegerOracle) {
    EXPECT_NEAR(binomial_test(60, 100), oracle::binomial_tail(60, 100), 1e-10);
    for (unsigned n = 1; n <= 200; n += 7)
        for (unsigned s = 0; s <= n; ++s) ASSERT_NEAR(binomial_test(s, n), oracle::binomial_tail(s, n), 1e-10) << s << "/" << n;
}

TEST(Binomial, NonIncreasingInSuccesses) {
    for (std::size_t n : {1u, 10u, 99u, 400u, 1000u}) {
        double prev = 2.0;
        for (std::size_t s = 0; s <= n; ++s) {
            const double p = binomial_test(s, n);
            EXPECT_LE(p, prev);
            EXPECT_GE(p, 0.0);
            prev = p;
        }
    }
}

TEST(MutualInformation, IndependentFeature) {
    Rng rng(3);
    Samples s;
    for (int i = 0; i < 10000; ++i) s.push({rng.normal()}, i % 2);
    EXPECT_LT(mutual_information(s)[0], 0.02);
}

TEST(MutualInformation, FeatureEqualsLabel) {
    Samples s;
    for (int i = 0; i < 1000; ++i) s.push({static_cast<double>(i % 2)}, i % 2);
    EXPECT_NEAR(mutual_information(s)[0], std::log(2.0), 1e-12);
}

TEST(MutualInformation, NonNegative) {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        Samples s;
        const std::size_t n = 2 + rng.below(60);
        for (std::size_t i = 0; i < n; ++i) s.push({rng.normal(), std::floor(rng.normal())}, static_cast<int>(i % 2));
        for (double m : mutual_information(s, 2 + rng.below(20))) EXPECT_GE(m, 0.0);
    }
}

TEST(Dataset, SplitSizes) {
    const auto ds = synthetic(5, 10, 4, 0.0);
    EXPECT_EQ(ds.size(), 20u);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 10);
    EXPECT_EQ(ds.train.size(), 16u);
    EXPECT_EQ(ds.test.size(), 4u);
    std::vector<std::size_t> all(ds.train);
    all.insert(all.end(), ds.test.begin(), ds.test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(20);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    EXPECT_EQ(all, expect);
    std::size_t train1 = 0;
    for (std::size_t i : ds.train) train1 += ds.labels[i];
    EXPECT_EQ(train1, 8u);
}

TEST(Dataset, SerializationRoundtrip) {
    const auto ds = synthetic(6, 7, 33, 1.0);
    const Bytes b = serialize(ds);
    EXPECT_EQ(b.size(), 4 + 1 + 4 + 4 + 14 * (1 + 4 * 33u));
    const auto back = deserialize_dataset(b);
    EXPECT_EQ(back.d, ds.d);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.train, ds.train);
    EXPECT_EQ(back.test, ds.test);
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_EQ(0, std::memcmp(back.thetas[i].data(), ds.thetas[i].data(), 4 * ds.d));
    EXPECT_EQ(serialize(back), b);

    Bytes bad = b;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_dataset(bad), FormatError);
    EXPECT_THROW(deserialize_dataset(std::span(b).first(b.size() - 1)), FormatError);
}

TEST(Game, SignalIsDetectedAndFlagsMatchPValues) {
    const std::vector<GamePair> pairs{{"shifted", synthetic(7, 120, 32, 0.5)}};
    GameOptions o = quick_options();
    o.classifiers = {Classifier::knn, Classifier::lda, Classifier::ffnn, Classifier::svm, Classifier::gradboost};
    o.ffnn_hidden_full = 64;
    o.ffnn_hidden_features = 32;
    const auto rep = run_game(pairs, o);
    ASSERT_EQ(rep.rows.size(), 1u);
    ASSERT_EQ(rep.rows[0].cells.size(), 10u);
    for (const auto& c : rep.rows[0].cells) {
        EXPECT_EQ(c.reject_null, c.p_value < 0.05);
        if (!c.available) {
            EXPECT_TRUE(c.classifier == Classifier::svm || c.classifier == Classifier::gradboost);
            continue;
        }
        EXPECT_EQ(c.n, 48u);
        EXPECT_DOUBLE_EQ(c.accuracy, static_cast<double>(c.correct) / 48.0);
        EXPECT_TRUE(c.reject_null) << classifier_name(c.classifier) << " " << input_mode_name(c.mode);
    }
    EXPECT_GT(rep.rows[0].mutual_information[0], 0.3);
    const std::string grid = rep.grid();
    EXPECT_NE(grid.find("row.shifted.svm.full.status=absent"), std::string::npos);
    EXPECT_NE(grid.find("row.shifted.lda.features.p_value="), std::string::npos);
    EXPECT_NE(grid.find("row.shifted.mi.l2="), std::string::npos);
}

TEST(Game, ShuffledLabelsRarelyReject) {
    std::vector<GamePair> pairs;
    for (int i = 0; i < 5; ++i) pairs.push_back({"p" + std::to_string(i), synthetic(10 + i, 120, 32, 0.5)});
    GameOptions o = quick_options();
    o.shuffle_labels = true;
    o.seed = 99;
    const auto rep = run_game(pairs, o);
    std::size_t cells = 0, rejected = 0;
    for (const auto& row : rep.rows)
        for (const auto& c : row.cells) {
            ++cells;
            rejected += c.reject_null;
        }
    EXPECT_EQ(cells, 20u);
    EXPECT_LE(rejected, 2u);
}

TEST(Game, Reproducible) {
    const std::vector<GamePair> pairs{{"a", synthetic(20, 60, 16, 0.2)}, {"b", synthetic(21, 60, 16, 0.0)}};
    GameOptions o = quick_options();
    o.classifiers.push_back(Classifier::ffnn);
    o.ffnn_hidden_full = 32;
    o.ffnn_hidden_features = 16;
    o.seed = 5;
    EXPECT_EQ(run_game(pairs, o).grid(), run_game(pairs, o).grid());
    o.shuffle_labels = true;
    EXPECT_EQ(run_game(pairs, o).grid(), run_game(pairs, o).grid());
}

TEST(Corpus, BalancedAndDeterministic) {
    const Checkpoint model = Checkpoint::from_params(ModelParams{ModelConfig{}, init_params(ModelConfig{}, 21)});
    SecretKey k;
    k.bytes.fill(7);
    const Bytes m0{'a', 'b'}, m1{'x', 'y'};
    CorpusConfig cc;
    cc.n_per_class = 3;
    cc.train_frac = 2.0 / 3.0;
    cc.master_seed = 42;
    cc.train.d = 256;
    const auto a = generate_corpus(k, m0, m1, model, cc);
    EXPECT_EQ(a.size(), 6u);
    EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 0, 1, 1, 1}));
    EXPECT_EQ(a.train.size(), 4u);
    EXPECT_EQ(a.test.size(), 2u);
    EXPECT_EQ(a.d, 256u);
    const auto b = generate_corpus(k, m0, m1, model, cc);
    EXPECT_EQ(a.thetas, b.thetas);
    EXPECT_NE(a.thetas[0], a.thetas[1]);

    EXPECT_THROW(generate_corpus(k, m0, m0, model, cc), PreconditionError);
    EXPECT_THROW(generate_corpus(k, m0, Bytes{'x'}, model, cc), PreconditionError);
}
