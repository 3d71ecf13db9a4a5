#include "drumrl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl {
namespace {

constexpr std::string_view kBaseHeader =
    "step,group_id,theta1,theta2,theta3,theta4,theta5,theta6,k_eff,p1,p2,p3,"
    "p4,p5,p6";
constexpr std::size_t kBaseColumns = 15;

std::string sample_row(const Sample& s) {
  std::string row = std::to_string(burnup_years(s.step)) + "," +
                    std::to_string(s.group_id);
  for (int a : s.config.angles) row += "," + std::to_string(a);
  row += "," + format_double(s.response.k_eff);
  for (double p : s.response.powers) row += "," + format_double(p);
  return row;
}

template <typename T>
T parse_number(const std::string& field, const std::string& source,
               std::size_t line, std::string_view column) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, value);
  if (field.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ParseError(source, line,
                     "bad value '" + field + "' in column " + std::string(column));
  }
  return value;
}

Sample parse_sample(const std::vector<std::string>& f, const std::string& source,
                    std::size_t line) {
  Sample s;
  try {
    s.step = burnup_from_years(parse_number<int>(f[0], source, line, "step"));
  } catch (const DomainError& e) {
    throw ParseError(source, line, e.what());
  }
  s.group_id = parse_number<int>(f[1], source, line, "group_id");
  for (int i = 0; i < kNumHexants; ++i) {
    s.config.angles[i] = parse_number<int>(f[2 + i], source, line, "theta");
  }
  try {
    s.config.validate();
  } catch (const DomainError& e) {
    throw ParseError(source, line, e.what());
  }
  s.response.k_eff = parse_number<double>(f[8], source, line, "k_eff");
  for (int i = 0; i < kNumHexants; ++i) {
    s.response.powers[i] = parse_number<double>(f[9 + i], source, line, "p");
  }
  return s;
}

// Reads header and rows; `on_row` receives (fields, line number).
template <typename OnRow, typename OnComment>
void read_csv(const std::filesystem::path& path, std::string_view header,
              OnRow on_row, OnComment on_comment) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  const std::string source = path.string();
  const std::size_t n_columns = split_csv_line(header).size();
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (!text.empty() && text[0] == '#') {
      on_comment(std::string_view(text).substr(1));
      continue;
    }
    if (!have_header) {
      if (text != header) {
        throw ParseError(source, line, "header mismatch, expected '" +
                                           std::string(header) + "'");
      }
      have_header = true;
      continue;
    }
    if (text.empty()) continue;
    auto fields = split_csv_line(text);
    if (fields.size() != n_columns) {
      throw ParseError(source, line,
                       "expected " + std::to_string(n_columns) + " fields, got " +
                           std::to_string(fields.size()));
    }
    on_row(fields, line);
  }
  if (!have_header) throw ParseError(source, line, "missing header");
}

void write_comment(std::ostream& out, std::string_view comment) {
  if (comment.empty()) return;
  std::istringstream lines{std::string(comment)};
  std::string l;
  while (std::getline(lines, l)) out << "# " << l << "\n";
}

}  // namespace

std::vector<Sample>& DatasetSplit::part(SplitPart p) {
  switch (p) {
    case SplitPart::kTrain: return train;
    case SplitPart::kValidation: return validation;
    case SplitPart::kTest: return test;
  }
  throw DomainError("invalid split part");
}

const std::vector<Sample>& DatasetSplit::part(SplitPart p) const {
  return const_cast<DatasetSplit*>(this)->part(p);
}

std::string_view split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::kTrain: return "train";
    case SplitPart::kValidation: return "validation";
    case SplitPart::kTest: return "test";
  }
  throw DomainError("invalid split part");
}

std::vector<DrumConfig> sample_configs(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_configs: n must be >= 1");
  const std::size_t n_uniform = n / 10;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> angle(0, kMaxAngle);
  std::vector<DrumConfig> configs;
  configs.reserve(n);
  for (std::size_t i = 0; i < n - n_uniform; ++i) {
    DrumConfig c;
    for (int& a : c.angles) a = angle(rng);
    configs.push_back(c);
  }
  for (std::size_t i = 0; i < n_uniform; ++i) {
    configs.push_back(DrumConfig::uniform(angle(rng)));
  }
  return configs;
}

std::vector<Sample> generate(BurnupStep step, std::size_t n, std::uint64_t seed,
                             const OracleParams& params) {
  params.validate();
  const auto configs = sample_configs(n, seed);
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    samples.push_back(
        {configs[i], step, evaluate(configs[i], step, params), static_cast<int>(i)});
  }
  return samples;
}

std::array<std::size_t, 3> split_group_counts(std::size_t n_groups,
                                              const SplitFractions& fractions) {
  const std::array<double, 3> f{fractions.train, fractions.validation,
                                fractions.test};
  double sum = 0.0;
  for (double x : f) {
    if (!(x >= 0.0)) throw DomainError("split fractions must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split fractions must sum to 1");

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = f[i] * static_cast<double>(n_groups);
    // Snap quotas that are integral up to rounding noise.
    const double rounded = std::round(quota);
    const double q = std::abs(quota - rounded) < 1e-9 ? rounded : quota;
    counts[i] = static_cast<std::size_t>(std::floor(q));
    remainders[i] = q - std::floor(q);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
    return a > b;
  });
  for (std::size_t k = 0; assigned < n_groups; ++k, ++assigned) {
    ++counts[order[k % 3]];
  }
  return counts;
}

DatasetSplit split(std::span<const Sample> samples, std::uint64_t seed,
                   const SplitFractions& fractions) {
  std::set<int> unique_groups;
  for (const auto& s : samples) unique_groups.insert(s.group_id);
  if (unique_groups.size() < 3) {
    throw DomainError("split requires at least 3 groups, got " +
                      std::to_string(unique_groups.size()));
  }
  std::vector<int> groups(unique_groups.begin(), unique_groups.end());
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  const auto counts = split_group_counts(groups.size(), fractions);
  std::map<int, SplitPart> assignment;
  std::size_t idx = 0;
  const std::array<SplitPart, 3> parts{SplitPart::kTrain, SplitPart::kValidation,
                                       SplitPart::kTest};
  for (int p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < counts[p]; ++k) assignment[groups[idx++]] = parts[p];
  }

  DatasetSplit out;
  out.seed = seed;
  for (const auto& s : samples) out.part(assignment.at(s.group_id)).push_back(s);
  return out;
}

std::vector<Sample> augment(std::span<const Sample> samples) {
  std::vector<Sample> out;
  out.reserve(samples.size() * kNumSymmetryOps);
  for (const auto& s : samples) {
    for (int op = 0; op < kNumSymmetryOps; ++op) {
      auto [config, response] = apply_symmetry(op, s.config, s.response);
      out.push_back({config, s.step, response, s.group_id});
    }
  }
  return out;
}

DatasetSplit augment(const DatasetSplit& split) {
  DatasetSplit out;
  out.seed = split.seed;
  out.train = augment(split.train);
  out.validation = augment(split.validation);
  out.test = augment(split.test);
  return out;
}

void save_samples(const std::filesystem::path& path,
                  std::span<const Sample> samples, std::string_view comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_comment(out, comment);
  out << kBaseHeader << "\n";
  for (const auto& s : samples) out << sample_row(s) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  std::vector<Sample> samples;
  const std::string source = path.string();
  read_csv(
      path, kBaseHeader,
      [&](const std::vector<std::string>& f, std::size_t line) {
        samples.push_back(parse_sample(f, source, line));
      },
      [](std::string_view) {});
  return samples;
}

void save_split(const std::filesystem::path& path, const DatasetSplit& split,
                std::string_view comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_comment(out, comment);
  out << "# seed=" << split.seed << "\n";
  out << kBaseHeader << ",split\n";
  for (auto p : {SplitPart::kTrain, SplitPart::kValidation, SplitPart::kTest}) {
    for (const auto& s : split.part(p)) {
      out << sample_row(s) << "," << split_part_name(p) << "\n";
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetSplit load_split(const std::filesystem::path& path) {
  DatasetSplit split;
  const std::string source = path.string();
  const std::string header = std::string(kBaseHeader) + ",split";
  read_csv(
      path, header,
      [&](const std::vector<std::string>& f, std::size_t line) {
        Sample s = parse_sample(f, source, line);
        const std::string& name = f[kBaseColumns];
        if (name == "train") {
          split.train.push_back(s);
        } else if (name == "validation") {
          split.validation.push_back(s);
        } else if (name == "test") {
          split.test.push_back(s);
        } else {
          throw ParseError(source, line, "unknown split '" + name + "'");
        }
      },
      [&](std::string_view comment) {
        while (!comment.empty() && comment.front() == ' ') comment.remove_prefix(1);
        if (!comment.starts_with("seed=")) return;
        const auto digits = comment.substr(5);
        std::uint64_t seed = 0;
        auto res = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (res.ec == std::errc() && res.ptr == digits.data() + digits.size()) {
          split.seed = seed;
        }
      });
  return split;
}

}  // namespace drumrl
