#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace drumrl {

// SplitMix64 finaliser; derives independent stream seeds from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

// 64-bit FNV-1a, stable across platforms. Used for config hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Shortest decimal that round-trips a double exactly.
std::string format_double(double value);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Keeps freed training buffers in the heap instead of unmapping them after
// every minibatch. Process-wide; no-op outside glibc.
void tune_allocator();

}  // namespace drumrl
