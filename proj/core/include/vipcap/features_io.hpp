#pragma once

// "VIPC" feature container: 4-byte magic, u32 version (=1), u32 rows,
// u32 dim, then rows*dim little-endian float32 values in row-major order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vipcap/matrix.hpp"

namespace vipcap {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

Matrix decode_features(std::span<const std::byte> bytes);
std::vector<std::byte> encode_features(const Matrix& features);

Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& features);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

/// Little-endian primitives shared by the binary containers.
void put_u32(std::vector<std::byte>& out, std::uint32_t v);
void put_u64(std::vector<std::byte>& out, std::uint64_t v);
void put_f32(std::vector<std::byte>& out, float v);
std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset);
std::uint64_t get_u64(std::span<const std::byte> bytes, std::size_t offset);
float get_f32(std::span<const std::byte> bytes, std::size_t offset);

}  // namespace vipcap
