#include "vipcap/features_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "vipcap/error.hpp"

namespace vipcap {
namespace {

constexpr char kMagic[4] = {'V', 'I', 'P', 'C'};
constexpr std::size_t kHeaderSize = 16;

}  // namespace

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffU));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffU));
}

void put_f32(std::vector<std::byte>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::span<const std::byte> bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return v;
}

float get_f32(std::span<const std::byte> bytes, std::size_t offset) {
    return std::bit_cast<float>(get_u32(bytes, offset));
}

Matrix decode_features(std::span<const std::byte> bytes) {
    require(bytes.size() >= kHeaderSize, ErrorKind::Decode,
            fmt::format("feature container too short ({} bytes)", bytes.size()));
    require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::Decode, "feature container: bad magic");
    const std::uint32_t version = get_u32(bytes, 4);
    require(version == kFeatureFormatVersion, ErrorKind::Decode,
            fmt::format("feature container: unsupported version {}", version));
    const std::uint64_t rows = get_u32(bytes, 8);
    const std::uint64_t dim = get_u32(bytes, 12);
    const std::uint64_t expected = kHeaderSize + rows * dim * 4;
    require(bytes.size() == expected, ErrorKind::Decode,
            fmt::format("feature container: {}x{} needs {} bytes, got {}", rows, dim, expected, bytes.size()));

    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    std::size_t at = kHeaderSize;
    for (Eigen::Index i = 0; i < out.size(); ++i, at += 4) {
        const float v = get_f32(bytes, at);
        require(std::isfinite(v), ErrorKind::Decode, "feature container: non-finite value");
        out.data()[i] = v;
    }
    return out;
}

std::vector<std::byte> encode_features(const Matrix& features) {
    std::vector<std::byte> out;
    out.reserve(kHeaderSize + static_cast<std::size_t>(features.size()) * 4);
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_u32(out, kFeatureFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(features.rows()));
    put_u32(out, static_cast<std::uint32_t>(features.cols()));
    for (Eigen::Index i = 0; i < features.size(); ++i) put_f32(out, static_cast<float>(features.data()[i]));
    return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    require(in.good() || size == 0, ErrorKind::Io, fmt::format("failed reading '{}'", path.string()));
    return bytes;
}

Matrix read_features(const std::filesystem::path& path) { return decode_features(read_file_bytes(path)); }

void write_features(const std::filesystem::path& path, const Matrix& features) {
    const auto bytes = encode_features(features);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vipcap
