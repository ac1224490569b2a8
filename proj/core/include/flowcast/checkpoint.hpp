#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "flowcast/layers.hpp"

namespace flowcast {

/// Model checkpoint ("FCM1"):
///   magic "FCM1"
///   u32 LE x5: n_timesteps, n_outputs, n_features, hidden, dense_hidden
///   f32 LE tensors in SurrogateModel::parameters() order
std::vector<std::byte> encode_checkpoint(const SurrogateModel<float>& model);
SurrogateModel<float> decode_checkpoint(std::span<const std::byte> bytes, const std::string& source);

void write_checkpoint(const std::filesystem::path& path, const SurrogateModel<float>& model);
SurrogateModel<float> read_checkpoint(const std::filesystem::path& path);

}  // namespace flowcast
