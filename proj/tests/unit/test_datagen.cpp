#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "flowcast/datagen.hpp"
#include "flowcast/errors.hpp"
#include "support/temp_dir.hpp"

using namespace flowcast;
using testing_support::TempDir;

namespace {

TankConfig small_tank() {
    TankConfig c;
    c.grid_height = 8;
    c.grid_width = 8;
    c.n_states = 6;
    c.write_interval = 3;
    return c;
}

double mean_speed(const TensorF& states, std::size_t k) {
    const std::size_t cells = states.extent(1);
    double s = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        const double ux = states.data()[(k * cells + c) * 2];
        const double uy = states.data()[(k * cells + c) * 2 + 1];
        s += std::hypot(ux, uy);
    }
    return s / static_cast<double>(cells);
}

}  // namespace

TEST(Solver, ZeroFieldWithoutForcingStaysZero) {
    auto cfg = small_tank();
    cfg.inlet_velocity = 0.0;
    cfg.recirculation_rate = 0.0;
    TensorD u({8, 8, 2});
    for (int i = 0; i < 50; ++i) u = solver_step(u, cfg);
    for (double v : u.data()) EXPECT_EQ(v, 0.0);
}

TEST(Solver, ClosedDiffusionConservesEachComponent) {
    auto cfg = small_tank();
    cfg.advection = false;
    cfg.closed_boundaries = true;
    TensorD u({8, 8, 2});
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::sin(0.37 * static_cast<double>(i)) + 0.1;
    auto sums = [](const TensorD& t) {
        double sx = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < t.size(); i += 2) {
            sx += t[i];
            sy += t[i + 1];
        }
        return std::pair{sx, sy};
    };
    auto before = sums(u);
    for (int step = 0; step < 20; ++step) {
        u = solver_step(u, cfg);
        const auto after = sums(u);
        EXPECT_NEAR(after.first, before.first, 1e-10);
        EXPECT_NEAR(after.second, before.second, 1e-10);
        before = after;
    }
}

TEST(Solver, StabilityViolationIsConfigError) {
    auto cfg = small_tank();
    cfg.dt = 1.0;
    EXPECT_THROW(solver_step(TensorD({8, 8, 2}), cfg), ConfigError);
    EXPECT_THROW(generate_case(cfg, 0), ConfigError);
    EXPECT_GE(cfg.stability_number(), 1.0);
}

TEST(Solver, RejectsWrongFieldShape) {
    EXPECT_THROW(solver_step(TensorD({8, 7, 2}), small_tank()), DimensionError);
}

TEST(Solver, InletAndWallsAreImposed) {
    auto cfg = small_tank();
    cfg.inlet_velocity = 0.7;
    TensorD u({8, 8, 2});
    u = solver_step(u, cfg);
    EXPECT_EQ(u.data()[(3 * 8 + 0) * 2], 0.7);
    EXPECT_EQ(u.data()[(0 * 8 + 0) * 2], 0.0);
    EXPECT_EQ(u.data()[(3 * 8 + 7) * 2], 0.0);
}

TEST(Generate, StateCountDeterminismAndWriteInterval) {
    auto cfg = small_tank();
    const auto a = generate_case(cfg, 1);
    EXPECT_EQ(a.n_states(), 6u);
    EXPECT_TRUE(a == generate_case(cfg, 1));
    for (float v : a.states.data().subspan(0, 128)) EXPECT_EQ(v, 0.0f);
    TensorD u({8, 8, 2});
    for (int s = 0; s < 2 * 3; ++s) u = solver_step(u, cfg);
    const auto k2 = a.states.data().subspan(2 * 128, 128);
    for (std::size_t i = 0; i < 128; ++i) EXPECT_EQ(k2[i], static_cast<float>(u[i]));
}

TEST(Generate, StrongerInletGivesFasterFinalFlow) {
    auto cfg = small_tank();
    cfg.n_states = 30;
    double prev = -1.0;
    for (double inlet : {0.2, 0.4, 0.8}) {
        cfg.inlet_velocity = inlet;
        const auto c = generate_case(cfg, 0);
        const double s = mean_speed(c.states, cfg.n_states - 1);
        EXPECT_GT(s, prev);
        prev = s;
    }
}

TEST(Generate, VelocityStaysBounded) {
    TankConfig cfg;
    cfg.n_states = 60;
    for (double inlet : {0.2, 1.0}) {
        for (double recirc : {0.0, 0.5}) {
            cfg.inlet_velocity = inlet;
            cfg.recirculation_rate = recirc;
            const auto c = generate_case(cfg, 0);
            for (float v : c.states.data()) {
                ASSERT_TRUE(std::isfinite(v));
                ASSERT_LE(std::abs(v), 2.0 * inlet);
            }
        }
    }
}

TEST(Dataset, ShapeParametersAndThreadsAgree) {
    auto cfg = small_tank();
    const auto d = generate_dataset(12, {0.2, 1.0}, {0.0, 0.5}, cfg, 3);
    EXPECT_EQ(d.n_cases(), 12u);
    EXPECT_EQ(d.n_cells, 64u);
    EXPECT_EQ(d.n_dims, 2u);
    EXPECT_EQ(d.cases[0].states.shape(), (Shape{6, 64, 2}));
    std::set<std::pair<double, double>> params;
    for (const auto& c : d.cases) {
        EXPECT_GE(c.inlet_velocity, 0.2);
        EXPECT_LE(c.inlet_velocity, 1.0);
        EXPECT_GE(c.recirculation_rate, 0.0);
        EXPECT_LE(c.recirculation_rate, 0.5);
        params.insert({c.inlet_velocity, c.recirculation_rate});
    }
    EXPECT_EQ(params.size(), 12u);
    EXPECT_TRUE(d == generate_dataset(12, {0.2, 1.0}, {0.0, 0.5}, cfg, 3, 4));
    EXPECT_FALSE(d == generate_dataset(12, {0.2, 1.0}, {0.0, 0.5}, cfg, 4));
}

TEST(Dataset, ParametersDistinctForManyCases) {
    auto cfg = small_tank();
    cfg.grid_height = cfg.grid_width = 3;
    cfg.n_states = 4;
    cfg.write_interval = 1;
    const auto d = generate_dataset(10000, {0.2, 1.0}, {0.0, 0.5}, cfg, 5);
    std::set<std::pair<double, double>> params;
    for (const auto& c : d.cases) params.insert({c.inlet_velocity, c.recirculation_rate});
    EXPECT_EQ(params.size(), 10000u);
}

TEST(Dataset, RejectsInvalidRanges) {
    EXPECT_THROW(generate_dataset(3, {1.0, 0.2}, {0.0, 0.5}, small_tank(), 0), ConfigError);
    EXPECT_THROW(generate_dataset(0, {0.2, 1.0}, {0.0, 0.5}, small_tank(), 0), ConfigError);
    EXPECT_THROW(generate_dataset(3, {0.2, 1e6}, {0.0, 0.5}, small_tank(), 0), ConfigError);
}

TEST(DatasetFile, ByteLayoutAndRoundTrip) {
    const auto d = generate_dataset(2, {0.2, 1.0}, {0.0, 0.5}, small_tank(), 6);
    const auto bytes = encode_dataset(d);
    ASSERT_EQ(bytes.size(), 4 + 5 * 4 + 2 * (16 + 6 * 64 * 2 * 4));
    EXPECT_EQ(std::memcmp(bytes.data(), "CFD1", 4), 0);
    std::uint32_t header[5];
    std::memcpy(header, bytes.data() + 4, sizeof header);
    EXPECT_EQ(header[0], 1u);
    EXPECT_EQ(header[1], 2u);
    EXPECT_EQ(header[2], 6u);
    EXPECT_EQ(header[3], 64u);
    EXPECT_EQ(header[4], 2u);
    double inlet;
    std::memcpy(&inlet, bytes.data() + 24, 8);
    EXPECT_EQ(inlet, d.cases[0].inlet_velocity);

    TempDir dir;
    write_dataset(dir / "d.bin", d);
    EXPECT_TRUE(read_dataset(dir / "d.bin") == d);
}

TEST(DatasetFile, RejectsCorruption) {
    const auto d = generate_dataset(2, {0.2, 1.0}, {0.0, 0.5}, small_tank(), 6);
    auto bytes = encode_dataset(d);
    auto magic = bytes;
    magic[0] = std::byte{'X'};
    try {
        decode_dataset(magic, "bad.bin");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.bin"), std::string::npos);
    }
    auto version = bytes;
    version[4] = std::byte{2};
    EXPECT_THROW(decode_dataset(version, "v"), FormatError);
    auto truncated = bytes;
    truncated.resize(truncated.size() - 4);
    EXPECT_THROW(decode_dataset(truncated, "t"), FormatError);
    auto padded = bytes;
    padded.push_back(std::byte{0});
    EXPECT_THROW(decode_dataset(padded, "p"), FormatError);
}
