#include "flowcast/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
    if constexpr (std::endian::native == std::endian::big) {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
        }
        return out;
    } else {
        return v;
    }
}

template <typename U>
void put(std::vector<std::byte>& buf, U v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf.insert(buf.end(), p, p + sizeof(U));
}

}  // namespace

void ByteWriter::magic(std::string_view four_cc) {
    for (char c : four_cc) buf_.push_back(static_cast<std::byte>(c));
}

void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }

void ByteWriter::f32(float v) { put(buf_, std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) { put(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f32_array(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        const auto* p = reinterpret_cast<const std::byte*>(values.data());
        buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
        for (float v : values) f32(v);
    }
}

ByteReader::ByteReader(std::span<const std::byte> bytes, std::string source)
    : bytes_(bytes), source_(std::move(source)) {}

void ByteReader::need(std::size_t n) {
    if (remaining() < n) {
        throw FormatError(source_ + ": truncated payload (needed " + std::to_string(n) + " bytes, " +
                          std::to_string(remaining()) + " left)");
    }
}

void ByteReader::expect_magic(std::string_view four_cc) {
    need(four_cc.size());
    for (char c : four_cc) {
        if (bytes_[pos_++] != static_cast<std::byte>(c)) {
            throw FormatError(source_ + ": bad magic, expected '" + std::string(four_cc) + "'");
        }
    }
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return to_little(v);
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return std::bit_cast<double>(to_little(v));
}

void ByteReader::f32_array(std::span<float> out) {
    need(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    } else {
        for (float& v : out) v = f32();
    }
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<std::byte> bytes(size);
    in.seekg(0);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw IoError("failed reading '" + path.string() + "'");
    }
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into '" + path.string() + "'");
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

}  // namespace flowcast
