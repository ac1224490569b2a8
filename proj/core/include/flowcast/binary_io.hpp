#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcast {

/// Append-only little-endian encoder.
class ByteWriter {
public:
    void magic(std::string_view four_cc);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void f32_array(std::span<const float> values);

    const std::vector<std::byte>& bytes() const noexcept { return buf_; }

private:
    std::vector<std::byte> buf_;
};

/// Bounds-checked little-endian decoder; throws FormatError naming `source`
/// when the payload ends early.
class ByteReader {
public:
    ByteReader(std::span<const std::byte> bytes, std::string source);

    void expect_magic(std::string_view four_cc);
    std::uint32_t u32();
    float f32();
    double f64();
    void f32_array(std::span<float> out);

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const std::string& source() const noexcept { return source_; }

private:
    void need(std::size_t n);

    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
    std::string source_;
};

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace flowcast
