#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace taskmaml::io {

/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

void append_f32_le(std::string& out, float value);
void append_u64_le(std::string& out, std::uint64_t value);
float read_f32_le(const unsigned char* bytes);
std::uint64_t read_u64_le(const unsigned char* bytes);

std::vector<float> decode_f32_le(std::string_view bytes);
std::string encode_f32_le(std::span<const float> values);

std::vector<std::string> split_csv_line(std::string_view line);

/// Shortest decimal text that round-trips the double.
std::string format_double(double value);

std::uint32_t crc32(std::string_view bytes);

}  // namespace taskmaml::io
