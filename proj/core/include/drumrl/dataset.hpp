#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "drumrl/oracle.hpp"

namespace drumrl {

struct Sample {
  DrumConfig config;
  BurnupStep step = BurnupStep::kYr0;
  CoreResponse response;
  // Index of the source calculation; shared by all symmetry copies.
  int group_id = 0;

  bool operator==(const Sample&) const = default;
};

enum class SplitPart { kTrain, kValidation, kTest };

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  std::uint64_t seed = 0;

  std::vector<Sample>& part(SplitPart p);
  const std::vector<Sample>& part(SplitPart p) const;
  bool operator==(const DatasetSplit&) const = default;
};

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

// 90% configs with independent uniform integer angles, 10% (n / 10) configs
// with all six angles equal. Deterministic in seed.
std::vector<DrumConfig> sample_configs(std::size_t n, std::uint64_t seed);

// Labels sampled configs with the deterministic oracle; group ids 0..n-1.
std::vector<Sample> generate(BurnupStep step, std::size_t n, std::uint64_t seed,
                             const OracleParams& params);

// Largest-remainder apportionment of n_groups; ties go to the later part.
std::array<std::size_t, 3> split_group_counts(std::size_t n_groups,
                                              const SplitFractions& fractions);

// Partitions by group id (never splitting a group) after a seeded shuffle.
DatasetSplit split(std::span<const Sample> samples, std::uint64_t seed,
                   const SplitFractions& fractions = {});

// All 12 symmetry images of every sample, in sample-major order.
std::vector<Sample> augment(std::span<const Sample> samples);
DatasetSplit augment(const DatasetSplit& split);

// CSV, header `step,group_id,theta1..theta6,k_eff,p1..p6`. `step` is the
// burnup age in years. Lines starting with '#' are comments.
void save_samples(const std::filesystem::path& path,
                  std::span<const Sample> samples,
                  std::string_view comment = {});
std::vector<Sample> load_samples(const std::filesystem::path& path);

// Combined file: same columns plus a trailing `split` column
// (train|validation|test). The split seed is stored as a `# seed=N` comment.
void save_split(const std::filesystem::path& path, const DatasetSplit& split,
                std::string_view comment = {});
DatasetSplit load_split(const std::filesystem::path& path);

std::string_view split_part_name(SplitPart p);

}  // namespace drumrl
