#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <string_view>

#include "drumrl/oracle.hpp"

namespace test {

inline drumrl::DrumConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> angle(0, drumrl::kMaxAngle);
  drumrl::DrumConfig c;
  for (int& a : c.angles) a = angle(rng);
  return c;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(std::string_view name) {
  const auto dir = std::filesystem::temp_directory_path() / "drumrl_tests" / std::string(name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace test
