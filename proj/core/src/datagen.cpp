#include "flowcast/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <thread>

#include "flowcast/binary_io.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/seed.hpp"

namespace flowcast {

namespace {

constexpr std::string_view kMagic = "CFD1";
constexpr std::uint32_t kVersion = 1;

struct Grid {
    std::size_t rows;
    std::size_t cols;

    std::size_t at(std::size_t r, std::size_t c, std::size_t d) const { return (r * cols + c) * kVelocityDims + d; }
    bool wall(std::size_t r, std::size_t c) const { return r == 0 || c == 0 || r + 1 == rows || c + 1 == cols; }
};

// Middle half of the left wall.
bool is_inlet(const Grid& g, std::size_t r, std::size_t c) {
    return c == 0 && r >= g.rows / 4 && r < g.rows - g.rows / 4;
}

// Block in the lower-left quadrant fed by the recirculator.
bool is_recirculation_source(const Grid& g, std::size_t r, std::size_t c) {
    return r >= 1 && r <= std::max<std::size_t>(1, g.rows / 4) && c >= g.cols / 4 && c < g.cols / 2;
}

}  // namespace

double TankConfig::stability_number() const {
    const double h = cell_size();
    return dt * (std::abs(inlet_velocity) / h + 4.0 * nu / (h * h));
}

void TankConfig::validate() const {
    if (grid_height < 3 || grid_width < 3) throw ConfigError("tank grid must be at least 3x3 cells");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("tank dt must be positive");
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw ConfigError("tank nu must be non-negative");
    if (!std::isfinite(inlet_velocity) || !std::isfinite(recirculation_rate)) {
        throw ConfigError("tank inlet/recirculation must be finite");
    }
    if (write_interval < 1) throw ConfigError("write_interval must be >= 1");
    if (n_states < 4) throw ConfigError("n_states must be >= 4 to form one training window");
    if (!(initial_noise >= 0.0)) throw ConfigError("initial_noise must be non-negative");
    const double s = stability_number();
    if (!(s < 1.0)) {
        throw ConfigError("tank time step violates the explicit stability bound: dt*(|u|/h + 4nu/h^2) = " +
                          std::to_string(s) + " >= 1");
    }
}

TensorD solver_step(const TensorD& u, const TankConfig& cfg) {
    cfg.validate();
    const Grid g{cfg.grid_height, cfg.grid_width};
    require_same_shape(u.shape(), Shape{g.rows, g.cols, kVelocityDims}, "solver_step field");

    const double h = cfg.cell_size();
    const double diff_k = cfg.nu / (h * h);
    const auto in = u.data();
    TensorD next(u.shape());
    auto out = next.data();

    // Field value at a neighbour; with closed boundaries a missing neighbour
    // mirrors the centre cell, giving zero flux through the wall.
    auto value = [&](std::size_t r, std::size_t c, long dr, long dc, std::size_t d) {
        const long rr = static_cast<long>(r) + dr;
        const long cc = static_cast<long>(c) + dc;
        if (rr < 0 || cc < 0 || rr >= static_cast<long>(g.rows) || cc >= static_cast<long>(g.cols)) {
            return in[g.at(r, c, d)];
        }
        return in[g.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), d)];
    };

    std::array<double, kVelocityDims> right_mean{};
    if (!cfg.closed_boundaries && cfg.recirculation_rate != 0.0) {
        std::size_t n = 0;
        for (std::size_t r = 1; r + 1 < g.rows; ++r) {
            for (std::size_t c = g.cols / 2; c + 1 < g.cols; ++c) {
                for (std::size_t d = 0; d < kVelocityDims; ++d) right_mean[d] += in[g.at(r, c, d)];
                ++n;
            }
        }
        for (double& m : right_mean) m /= static_cast<double>(n);
    }

    for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
            if (!cfg.closed_boundaries && g.wall(r, c)) {
                const bool inlet = is_inlet(g, r, c);
                out[g.at(r, c, 0)] = inlet ? cfg.inlet_velocity : 0.0;
                out[g.at(r, c, 1)] = 0.0;
                continue;
            }
            const double ux = in[g.at(r, c, 0)];
            const double uy = in[g.at(r, c, 1)];
            for (std::size_t d = 0; d < kVelocityDims; ++d) {
                const double phi = in[g.at(r, c, d)];
                const double east = value(r, c, 0, 1, d);
                const double west = value(r, c, 0, -1, d);
                const double north = value(r, c, 1, 0, d);
                const double south = value(r, c, -1, 0, d);
                double rate = diff_k * ((east - phi) + (west - phi) + (north - phi) + (south - phi));
                if (cfg.advection) {
                    const double dx = ux > 0.0 ? (phi - west) : (east - phi);
                    const double dy = uy > 0.0 ? (phi - south) : (north - phi);
                    rate -= (ux * dx + uy * dy) / h;
                }
                double v = phi + cfg.dt * rate;
                if (!cfg.closed_boundaries && is_recirculation_source(g, r, c)) {
                    v += cfg.dt * cfg.recirculation_rate * right_mean[d];
                }
                out[g.at(r, c, d)] = v;
            }
        }
    }
    require_finite<double>(next.data(), "solver_step");
    return next;
}

CaseTrajectory generate_case(const TankConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t cells = cfg.n_cells();
    TensorD field({cfg.grid_height, cfg.grid_width, kVelocityDims});
    if (cfg.initial_noise > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, cfg.initial_noise);
        for (double& v : field.data()) v = noise(rng);
    }

    CaseTrajectory traj;
    traj.inlet_velocity = cfg.inlet_velocity;
    traj.recirculation_rate = cfg.recirculation_rate;
    traj.states = TensorF({cfg.n_states, cells, kVelocityDims});
    const std::size_t stride = cells * kVelocityDims;
    auto store = [&](std::size_t k) {
        auto dst = traj.states.data().subspan(k * stride, stride);
        std::transform(field.data().begin(), field.data().end(), dst.begin(),
                       [](double v) { return static_cast<float>(v); });
    };
    store(0);
    for (std::size_t k = 1; k < cfg.n_states; ++k) {
        for (std::size_t s = 0; s < cfg.write_interval; ++s) field = solver_step(field, cfg);
        store(k);
    }
    return traj;
}

Dataset generate_dataset(std::size_t n_cases, Range inlet_range, Range recirc_range, const TankConfig& cfg,
                         std::uint64_t seed, std::size_t threads) {
    if (n_cases < 1) throw ConfigError("generate_dataset: n_cases must be >= 1");
    for (const Range* r : {&inlet_range, &recirc_range}) {
        if (!std::isfinite(r->lo) || !std::isfinite(r->hi) || r->lo > r->hi) {
            throw ConfigError("generate_dataset: invalid parameter range [" + std::to_string(r->lo) + ", " +
                              std::to_string(r->hi) + "]");
        }
    }
    for (double inlet : {inlet_range.lo, inlet_range.hi}) {
        TankConfig probe = cfg;
        probe.inlet_velocity = inlet;
        probe.validate();
    }

    std::vector<TankConfig> configs(n_cases, cfg);
    for (std::size_t i = 0; i < n_cases; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        std::uniform_real_distribution<double> inlet(inlet_range.lo, inlet_range.hi);
        std::uniform_real_distribution<double> recirc(recirc_range.lo, recirc_range.hi);
        configs[i].inlet_velocity = inlet(rng);
        configs[i].recirculation_rate = recirc(rng);
    }

    Dataset d;
    d.n_states = cfg.n_states;
    d.n_cells = cfg.n_cells();
    d.n_dims = kVelocityDims;
    d.cases.resize(n_cases);
    auto work = [&](std::size_t first, std::size_t step) {
        for (std::size_t i = first; i < n_cases; i += step) {
            d.cases[i] = generate_case(configs[i], derive_seed(seed ^ 0xC0FFEEull, i));
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, n_cases);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> pool;
            for (std::size_t t = 0; t < threads; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        work(t, threads);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return d;
}

void Dataset::validate() const {
    if (n_states < 1 || n_cells < 1 || n_dims < 1) throw DimensionError("dataset extents must be positive");
    const Shape expected{n_states, n_cells, n_dims};
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].states.shape() != expected) {
            throw DimensionError("dataset case " + std::to_string(i) + " has shape " +
                                 shape_string(cases[i].states.shape()) + ", expected " + shape_string(expected));
        }
    }
}

std::vector<std::byte> encode_dataset(const Dataset& d) {
    d.validate();
    ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(d.n_cases()));
    w.u32(static_cast<std::uint32_t>(d.n_states));
    w.u32(static_cast<std::uint32_t>(d.n_cells));
    w.u32(static_cast<std::uint32_t>(d.n_dims));
    for (const auto& c : d.cases) {
        w.f64(c.inlet_velocity);
        w.f64(c.recirculation_rate);
        w.f32_array(c.states.data());
    }
    return w.bytes();
}

Dataset decode_dataset(std::span<const std::byte> bytes, const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(source + ": unsupported dataset version " + std::to_string(version));
    }
    Dataset d;
    const std::size_t n_cases = r.u32();
    d.n_states = r.u32();
    d.n_cells = r.u32();
    d.n_dims = r.u32();
    if (d.n_states == 0 || d.n_cells == 0 || d.n_dims == 0) {
        throw FormatError(source + ": dataset header has a zero extent");
    }
    const std::size_t per_case = d.n_states * d.n_cells * d.n_dims;
    const std::size_t expected = n_cases * (2 * sizeof(double) + per_case * sizeof(float));
    if (r.remaining() != expected) {
        throw FormatError(source + ": truncated or oversized payload: header declares " +
                          std::to_string(expected) + " bytes after the header, file has " +
                          std::to_string(r.remaining()));
    }
    d.cases.resize(n_cases);
    for (auto& c : d.cases) {
        c.inlet_velocity = r.f64();
        c.recirculation_rate = r.f64();
        c.states = TensorF({d.n_states, d.n_cells, d.n_dims});
        r.f32_array(c.states.data());
    }
    return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
    write_file_atomic(path, encode_dataset(d));
}

Dataset read_dataset(const std::filesystem::path& path) {
    return decode_dataset(read_file_bytes(path), path.string());
}

}  // namespace flowcast
