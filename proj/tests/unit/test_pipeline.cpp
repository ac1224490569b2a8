#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "flowcast/datagen.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/pipeline.hpp"
#include "support/temp_dir.hpp"

using namespace flowcast;
using testing_support::TempDir;

namespace {

Dataset random_dataset(std::size_t n_cases, std::size_t n_states, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.5f, 2.0f);
    Dataset d;
    d.n_states = n_states;
    d.n_cells = 5;
    d.n_dims = 2;
    for (std::size_t c = 0; c < n_cases; ++c) {
        TensorF s({n_states, 5, 2});
        for (float& v : s.data()) v = normal(rng) * static_cast<float>(c + 1);
        d.cases.push_back({0.1 * static_cast<double>(c), 0.0, std::move(s)});
    }
    return d;
}

}  // namespace

TEST(Split, FullScaleCounts) {
    const auto s = split_cases(131, 0);
    EXPECT_EQ(s.train.size(), 84u);
    EXPECT_EQ(s.validation.size(), 20u);
    EXPECT_EQ(s.test.size(), 27u);
    EXPECT_EQ(s.train.size() + s.validation.size(), 104u);
}

TEST(Split, FloorRuleOnTen) {
    const auto s = split_cases(10, 0);
    EXPECT_EQ(s.train.size(), 7u);
    EXPECT_EQ(s.validation.size(), 1u);
    EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, PartitionForManySeeds) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const std::size_t n = 3 + seed % 60;
        const auto s = split_cases(n, seed);
        std::vector<std::size_t> all;
        all.insert(all.end(), s.train.begin(), s.train.end());
        all.insert(all.end(), s.validation.begin(), s.validation.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::sort(all.begin(), all.end());
        ASSERT_EQ(all.size(), n);
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
        ASSERT_FALSE(s.train.empty());
        ASSERT_FALSE(s.validation.empty());
        ASSERT_FALSE(s.test.empty());
    }
}

TEST(Split, DeterministicPerSeed) {
    const auto a = split_cases(40, 3), b = split_cases(40, 3), c = split_cases(40, 4);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train, c.train);
    EXPECT_THROW(split_cases(2, 0), ConfigError);
}

TEST(Windows, CountFormula) {
    EXPECT_EQ(window_count(420, 3, 1), 417u);
    EXPECT_EQ(window_count(4, 3, 1), 1u);
    EXPECT_EQ(window_count(3, 3, 1), 0u);
    EXPECT_EQ(make_windows<float>(TensorF({420, 2}), 0).size(), 417u);
    EXPECT_TRUE(make_windows<float>(TensorF({3, 2}), 0).empty());
}

TEST(Windows, AdjacencyAndFlattening) {
    const auto d = random_dataset(1, 9, 1);
    const auto w = make_windows(d.cases[0], 0, 3, 1);
    ASSERT_EQ(w.size(), 6u);
    const auto states = d.cases[0].states.data();
    for (const auto& s : w) {
        ASSERT_EQ(s.input.shape(), (Shape{3, 10}));
        ASSERT_EQ(s.target.shape(), (Shape{1, 10}));
        for (std::size_t f = 0; f < 10; ++f) {
            EXPECT_EQ(s.target[f], states[(s.start + 3) * 10 + f]);
            EXPECT_EQ(s.input.at(0, f), states[s.start * 10 + f]);
        }
    }
    EXPECT_EQ(w.back().start, 5u);
}

TEST(Windows, FullScaleSampleSize) {
    constexpr std::size_t features = 125565 * 3;
    const auto w = make_windows<float>(TensorF({4, features}), 0, 3, 1);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].input.size(), 1130085u);
    EXPECT_EQ(w[0].target.size(), 376695u);
}

TEST(Norm, StatsUseOnlyListedCases) {
    const auto d = random_dataset(4, 6, 2);
    const std::vector<std::size_t> train{0, 2};
    const auto stats = compute_norm_stats(d, train);
    ASSERT_EQ(stats.n_dims(), 2u);
    for (std::size_t dim = 0; dim < 2; ++dim) {
        double s = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (std::size_t c : train) {
            const auto v = d.cases[c].states.data();
            for (std::size_t i = dim; i < v.size(); i += 2) {
                s += v[i];
                ++n;
            }
        }
        const double mean = s / static_cast<double>(n);
        for (std::size_t c : train) {
            const auto v = d.cases[c].states.data();
            for (std::size_t i = dim; i < v.size(); i += 2) ss += (v[i] - mean) * (v[i] - mean);
        }
        EXPECT_NEAR(stats.means[dim], mean, 1e-12);
        EXPECT_NEAR(stats.stds[dim], std::sqrt(ss / static_cast<double>(n)), 1e-12);
    }
    auto changed = d;
    for (float& v : changed.cases[3].states.data()) v = 100.0f;
    EXPECT_TRUE(compute_norm_stats(changed, train) == stats);
}

TEST(Norm, NormalizedTrainingDataIsStandardized) {
    const auto d = random_dataset(3, 8, 3);
    const std::vector<std::size_t> all{0, 1, 2};
    const auto stats = compute_norm_stats(d, all);
    for (std::size_t dim = 0; dim < 2; ++dim) {
        double s = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (const auto& c : d.cases) {
            const auto z = apply_normalization(c.states, stats);
            for (std::size_t i = dim; i < z.size(); i += 2) {
                s += z[i];
                ss += static_cast<double>(z[i]) * z[i];
                ++n;
            }
        }
        EXPECT_NEAR(s / static_cast<double>(n), 0.0, 1e-5);
        EXPECT_NEAR(ss / static_cast<double>(n), 1.0, 1e-4);
    }
}

TEST(Norm, InverseRoundTripAndConstantDimension) {
    NormStats stats{{1.5, -2.0}, {0.5, 4.0}};
    const auto x = TensorD::from_rows({{1.0, 2.0}, {3.0, -4.0}});
    const auto back = inverse_normalization(apply_normalization(x, stats), stats);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-14);
    EXPECT_THROW(apply_normalization(TensorD({2, 3}), stats), DimensionError);

    Dataset d;
    d.n_states = 4;
    d.n_cells = 1;
    d.n_dims = 2;
    d.cases.push_back({0, 0, TensorF::filled({4, 1, 2}, 3.0f)});
    const std::vector<std::size_t> only{0};
    const auto flat = compute_norm_stats(d, only);
    EXPECT_EQ(flat.stds[0], kStdFloor);
    EXPECT_TRUE(apply_normalization(d.cases[0].states, flat).all_finite());
}

TEST(Norm, JsonSchemaAndFile) {
    const NormStats stats{{0.25, -1.0}, {1.5, 2.0}};
    const auto j = nlohmann::json::parse(stats.to_json());
    EXPECT_EQ(j.size(), 2u);
    EXPECT_EQ(j.at("means").size(), 2u);
    EXPECT_EQ(j.at("stds")[1].get<double>(), 2.0);
    EXPECT_TRUE(NormStats::from_json(stats.to_json()) == stats);
    EXPECT_THROW(NormStats::from_json(R"({"means":[0.0],"stds":[0.0]})"), FormatError);
    EXPECT_THROW(NormStats::from_json(R"({"means":[0.0,1.0],"stds":[1.0]})"), FormatError);
    EXPECT_THROW(NormStats::from_json("not json"), FormatError);

    TempDir dir;
    write_norm_stats(dir / "n.json", stats);
    EXPECT_TRUE(read_norm_stats(dir / "n.json") == stats);
    EXPECT_THROW(read_norm_stats(dir / "missing.json"), IoError);
}

TEST(Windows, NormalizedWindowsFollowCaseOrder) {
    const auto d = random_dataset(3, 6, 4);
    const std::vector<std::size_t> cases{2, 0};
    const auto stats = compute_norm_stats(d, cases);
    const auto w = make_normalized_windows(d, cases, stats);
    ASSERT_EQ(w.size(), 6u);
    EXPECT_EQ(w[0].case_index, 2u);
    EXPECT_EQ(w[3].case_index, 0u);
    const auto z = apply_normalization(d.cases[2].states, stats);
    EXPECT_EQ(w[1].target[3], z.data()[(1 + 3) * 10 + 3]);
}

TEST(Norm, HandComputedToyCase) {
    Dataset d;
    d.n_states = 2;
    d.n_cells = 1;
    d.n_dims = 2;
    d.cases.push_back({0, 0, TensorF({2, 1, 2}, {1.0f, 10.0f, 3.0f, 20.0f})});
    const std::vector<std::size_t> only{0};
    const auto stats = compute_norm_stats(d, only);
    EXPECT_EQ(stats.means, (std::vector<double>{2.0, 15.0}));
    EXPECT_EQ(stats.stds, (std::vector<double>{1.0, 5.0}));
    const NormStats one{{1.0}, {0.5}};
    EXPECT_EQ(apply_normalization(TensorD({1, 1}, {2.0}), one)[0], 2.0);
}
