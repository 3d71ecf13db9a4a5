#pragma once

// Synthetic core physics model: drum angles + burnup state -> k_eff and
// hexant power fractions. Deterministic unless a noise seed is supplied.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

namespace drumrl {

inline constexpr int kNumHexants = 6;
inline constexpr int kMaxAngle = 180;
inline constexpr int kNumSymmetryOps = 12;
inline constexpr int kNumBurnupSteps = 3;

enum class BurnupStep : int { kYr0 = 0, kYr2 = 1, kYr4 = 2 };

inline constexpr std::array<BurnupStep, kNumBurnupSteps> kAllBurnupSteps = {
    BurnupStep::kYr0, BurnupStep::kYr2, BurnupStep::kYr4};

inline constexpr int index_of(BurnupStep step) {
  return static_cast<int>(step);
}
int burnup_years(BurnupStep step);
std::string_view burnup_tag(BurnupStep step);  // "yr0", "yr2", "yr4"
BurnupStep burnup_from_index(int index);
BurnupStep burnup_from_years(int years);
BurnupStep burnup_from_tag(std::string_view tag);

using HexantValues = std::array<double, kNumHexants>;

struct DrumConfig {
  std::array<int, kNumHexants> angles{};

  static DrumConfig uniform(int angle);
  // Throws DomainError if any angle is outside [0, 180].
  void validate() const;
  bool operator==(const DrumConfig&) const = default;
};

struct CoreResponse {
  double k_eff = 1.0;
  HexantValues powers{};

  bool operator==(const CoreResponse&) const = default;
};

struct OracleParams {
  std::array<double, kNumBurnupSteps> base_k{1.0, 1.0, 1.0};
  double total_drum_worth = 0.05;
  double interaction_strength = 0.002;
  double tilt_gain = 0.6;
  // Weight of the hexant at offset j from the one being evaluated.
  HexantValues neighbor_kernel{0.6, 0.15, 0.05, 0.0, 0.05, 0.15};
  double noise_sigma_pcm = 9.0;

  void validate() const;

  nlohmann::json to_json() const;
  static OracleParams from_json(const nlohmann::json& j);

  // Text config file: JSON object with the keys written by to_json().
  void save(const std::filesystem::path& path) const;
  static OracleParams load(const std::filesystem::path& path);

  bool operator==(const OracleParams&) const = default;
};

// Integral drum worth W(theta) = (1 - cos(pi theta / 180)) / 2.
double worth_curve(double theta_deg);

double k_eff(const DrumConfig& config, BurnupStep step,
             const OracleParams& params);

// Same model evaluated at real-valued angles (degrees, each in [0, 180]).
double k_eff_continuous(const HexantValues& angles_deg, BurnupStep step,
                        const OracleParams& params);

HexantValues hexant_powers(const DrumConfig& config, BurnupStep step,
                           const OracleParams& params);

// With a seed, adds N(0, noise_sigma) to k_eff and relative noise of the same
// magnitude to each power, then renormalises the powers.
CoreResponse evaluate(const DrumConfig& config, BurnupStep step,
                      const OracleParams& params,
                      std::optional<std::uint64_t> noise_seed = std::nullopt);

// Symmetry group of the hexant layout. Ops 0-5 rotate by op positions
// (out[i] = in[i - op]); ops 6-11 reverse the hexant order and then rotate by
// (op - 6). Angles are permuted, never mirrored.
template <typename T>
std::array<T, kNumHexants> permute_hexants(int op,
                                           const std::array<T, kNumHexants>& in);

std::pair<DrumConfig, CoreResponse> apply_symmetry(int op,
                                                   const DrumConfig& config,
                                                   const CoreResponse& response);

// Closed-form base_k per step so that the uniform config at the target angle
// is exactly critical.
OracleParams calibrate(const std::array<double, kNumBurnupSteps>& target_angles,
                       double total_drum_worth = 0.05,
                       double interaction_strength = 0.002);

inline constexpr std::array<double, kNumBurnupSteps> kDefaultCriticalAngles = {
    91.0, 113.0, 136.0};

// Bisection on k(theta * 1, step) - 1 over [0, 180]. Returns nullopt when the
// uniform configuration cannot reach criticality.
std::optional<double> find_critical_angle(BurnupStep step,
                                          const OracleParams& params,
                                          double tolerance_deg = 1e-9);

// ---------------------------------------------------------------------------

void check_symmetry_op(int op);

template <typename T>
std::array<T, kNumHexants> permute_hexants(
    int op, const std::array<T, kNumHexants>& in) {
  check_symmetry_op(op);
  std::array<T, kNumHexants> src = in;
  int shift = op;
  if (op >= kNumHexants) {
    for (int i = 0; i < kNumHexants; ++i) src[i] = in[kNumHexants - 1 - i];
    shift = op - kNumHexants;
  }
  std::array<T, kNumHexants> out{};
  for (int i = 0; i < kNumHexants; ++i) {
    out[i] = src[(i - shift + kNumHexants) % kNumHexants];
  }
  return out;
}

}  // namespace drumrl
