#include "flowcast/checkpoint.hpp"

#include <limits>

#include "flowcast/binary_io.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

constexpr std::string_view kMagic = "FCM1";

std::uint32_t narrow_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError(std::string(what) + " does not fit the checkpoint header");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const SurrogateModel<float>& model) {
    model.validate();
    ByteWriter w;
    w.magic(kMagic);
    const auto& c = model.config;
    w.u32(narrow_u32(c.n_timesteps, "n_timesteps"));
    w.u32(narrow_u32(c.n_outputs, "n_outputs"));
    w.u32(narrow_u32(c.n_features, "n_features"));
    w.u32(narrow_u32(c.hidden, "hidden"));
    w.u32(narrow_u32(c.dense_hidden, "dense_hidden"));
    for (const auto& p : model.parameters()) w.f32_array(p.tensor->data());
    return w.bytes();
}

SurrogateModel<float> decode_checkpoint(std::span<const std::byte> bytes, const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic(kMagic);
    ModelConfig c;
    c.n_timesteps = r.u32();
    c.n_outputs = r.u32();
    c.n_features = r.u32();
    c.hidden = r.u32();
    c.dense_hidden = r.u32();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(source + ": invalid model header: " + e.what());
    }
    auto model = SurrogateModel<float>::zeros(c);
    std::size_t expected = 0;
    for (const auto& p : model.parameters()) expected += p.tensor->size() * sizeof(float);
    if (r.remaining() != expected) {
        throw FormatError(source + ": parameter payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " + std::to_string(expected));
    }
    for (const auto& p : model.parameters()) r.f32_array(p.tensor->data());
    for (const auto& p : model.parameters()) {
        if (!p.tensor->all_finite()) throw FormatError(source + ": non-finite values in " + std::string(p.name));
    }
    return model;
}

void write_checkpoint(const std::filesystem::path& path, const SurrogateModel<float>& model) {
    write_file_atomic(path, encode_checkpoint(model));
}

SurrogateModel<float> read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace flowcast
