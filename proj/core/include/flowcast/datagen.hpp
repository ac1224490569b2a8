#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// Parameters of the synthetic 2-D tank. The tank is one unit wide, so the
/// cell size is 1 / grid_width. This is a desk-scale advection-diffusion
/// analog of a URANS tank simulation, not a port of one.
struct TankConfig {
    std::size_t grid_height = 16;
    std::size_t grid_width = 16;
    double dt = 0.01;
    double nu = 0.05;
    double inlet_velocity = 0.6;
    double recirculation_rate = 0.25;
    std::size_t write_interval = 10;
    std::size_t n_states = 120;

    bool advection = true;
    /// Zero-flux walls everywhere, no inlet and no recirculation. Used to
    /// check the diffusion stencil in isolation.
    bool closed_boundaries = false;
    /// Amplitude of seeded noise in the initial field; 0 starts from rest.
    double initial_noise = 0.0;

    double cell_size() const { return 1.0 / static_cast<double>(grid_width); }
    std::size_t n_cells() const { return grid_height * grid_width; }
    /// dt * (|inlet| / h + 4 nu / h^2); must stay below 1.
    double stability_number() const;
    void validate() const;
};

inline constexpr std::size_t kVelocityDims = 2;

struct CaseTrajectory {
    double inlet_velocity = 0.0;
    double recirculation_rate = 0.0;
    TensorF states;  ///< [n_states x n_cells x n_dims]

    std::size_t n_states() const { return states.extent(0); }
    friend bool operator==(const CaseTrajectory&, const CaseTrajectory&) = default;
};

struct Dataset {
    std::vector<CaseTrajectory> cases;
    std::size_t n_states = 0;
    std::size_t n_cells = 0;
    std::size_t n_dims = 0;

    std::size_t n_cases() const { return cases.size(); }
    void validate() const;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One explicit step on a [H x W x 2] velocity field: upwind self-advection,
/// central-difference diffusion, inlet forcing on the middle half of the
/// left wall, recirculation of the right-half mean velocity into a fixed
/// left-half source block, and no-slip on the remaining walls.
TensorD solver_step(const TensorD& u, const TankConfig& cfg);

/// Runs from the initial field, storing state k after k * write_interval steps.
CaseTrajectory generate_case(const TankConfig& cfg, std::uint64_t seed);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Each case draws (inlet_velocity, recirculation_rate) uniformly from the
/// ranges with a generator seeded by derive_seed(seed, case index).
Dataset generate_dataset(std::size_t n_cases, Range inlet_range, Range recirc_range, const TankConfig& cfg,
                         std::uint64_t seed, std::size_t threads = 1);

/// Dataset file ("CFD1"):
///   magic "CFD1"; u32 LE version=1, n_cases, n_states, n_cells, n_dims
///   per case: f64 LE inlet_velocity, recirculation_rate, then
///   n_states*n_cells*n_dims f32 LE values in (state, cell, dim) order.
std::vector<std::byte> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::byte> bytes, const std::string& source);

void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace flowcast
