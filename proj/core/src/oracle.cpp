#include "drumrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl {
namespace {

// Sums in ascending order so the result does not depend on hexant labelling.
double permutation_invariant_sum(HexantValues values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

HexantValues worths(const DrumConfig& config) {
  HexantValues w{};
  for (int i = 0; i < kNumHexants; ++i) w[i] = worth_curve(config.angles[i]);
  return w;
}

}  // namespace

int burnup_years(BurnupStep step) { return 2 * index_of(step); }

std::string_view burnup_tag(BurnupStep step) {
  switch (step) {
    case BurnupStep::kYr0: return "yr0";
    case BurnupStep::kYr2: return "yr2";
    case BurnupStep::kYr4: return "yr4";
  }
  throw DomainError("invalid burnup step");
}

BurnupStep burnup_from_index(int index) {
  if (index < 0 || index >= kNumBurnupSteps) {
    throw DomainError("burnup index out of range: " + std::to_string(index));
  }
  return static_cast<BurnupStep>(index);
}

BurnupStep burnup_from_years(int years) {
  if (years != 0 && years != 2 && years != 4) {
    throw DomainError("burnup years must be 0, 2 or 4, got " +
                      std::to_string(years));
  }
  return static_cast<BurnupStep>(years / 2);
}

BurnupStep burnup_from_tag(std::string_view tag) {
  for (auto step : kAllBurnupSteps) {
    if (burnup_tag(step) == tag) return step;
  }
  throw DomainError("unknown burnup tag '" + std::string(tag) + "'");
}

DrumConfig DrumConfig::uniform(int angle) {
  DrumConfig c;
  c.angles.fill(angle);
  c.validate();
  return c;
}

void DrumConfig::validate() const {
  for (int i = 0; i < kNumHexants; ++i) {
    if (angles[i] < 0 || angles[i] > kMaxAngle) {
      throw DomainError("drum angle " + std::to_string(i + 1) + " = " +
                        std::to_string(angles[i]) + " outside [0, 180]");
    }
  }
}

void OracleParams::validate() const {
  for (double b : base_k) {
    if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("base_k must be > 0");
  }
  if (!(total_drum_worth > 0.0)) {
    throw DomainError("total_drum_worth must be > 0");
  }
  if (!(interaction_strength >= 0.0)) {
    throw DomainError("interaction_strength must be >= 0");
  }
  if (!std::isfinite(tilt_gain)) throw DomainError("tilt_gain must be finite");
  for (int j = 0; j < kNumHexants; ++j) {
    if (!(neighbor_kernel[j] >= 0.0)) {
      throw DomainError("neighbor_kernel weights must be >= 0");
    }
    if (neighbor_kernel[j] != neighbor_kernel[(kNumHexants - j) % kNumHexants]) {
      throw DomainError("neighbor_kernel must be symmetric about offset 0");
    }
  }
  if (!(noise_sigma_pcm >= 0.0)) throw DomainError("noise_sigma_pcm must be >= 0");
}

nlohmann::json OracleParams::to_json() const {
  return nlohmann::json{
      {"base_k_yr0", base_k[0]},
      {"base_k_yr2", base_k[1]},
      {"base_k_yr4", base_k[2]},
      {"total_drum_worth", total_drum_worth},
      {"interaction_strength", interaction_strength},
      {"tilt_gain", tilt_gain},
      {"neighbor_kernel", neighbor_kernel},
      {"noise_sigma_pcm", noise_sigma_pcm},
  };
}

OracleParams OracleParams::from_json(const nlohmann::json& j) {
  OracleParams p;
  try {
    p.base_k = {j.at("base_k_yr0").get<double>(), j.at("base_k_yr2").get<double>(),
                j.at("base_k_yr4").get<double>()};
    p.total_drum_worth = j.at("total_drum_worth").get<double>();
    p.interaction_strength = j.at("interaction_strength").get<double>();
    p.tilt_gain = j.at("tilt_gain").get<double>();
    p.neighbor_kernel = j.at("neighbor_kernel").get<HexantValues>();
    p.noise_sigma_pcm = j.at("noise_sigma_pcm").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("oracle params", 0, e.what());
  }
  p.validate();
  return p;
}

void OracleParams::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

OracleParams OracleParams::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return from_json(j);
}

double worth_curve(double theta_deg) {
  if (!(theta_deg >= 0.0 && theta_deg <= kMaxAngle)) {
    throw DomainError("worth_curve angle outside [0, 180]");
  }
  return 0.5 * (1.0 - std::cos(std::numbers::pi * theta_deg / 180.0));
}

double k_eff_continuous(const HexantValues& angles_deg, BurnupStep step,
                        const OracleParams& params) {
  HexantValues w{};
  for (int i = 0; i < kNumHexants; ++i) w[i] = worth_curve(angles_deg[i]);
  HexantValues pairs{};
  for (int i = 0; i < kNumHexants; ++i) {
    pairs[i] = w[i] * w[(i + 1) % kNumHexants];
  }
  return params.base_k[index_of(step)] +
         params.total_drum_worth / kNumHexants * permutation_invariant_sum(w) +
         params.interaction_strength * permutation_invariant_sum(pairs);
}

double k_eff(const DrumConfig& config, BurnupStep step,
             const OracleParams& params) {
  config.validate();
  HexantValues angles{};
  for (int i = 0; i < kNumHexants; ++i) angles[i] = config.angles[i];
  return k_eff_continuous(angles, step, params);
}

HexantValues hexant_powers(const DrumConfig& config, BurnupStep /*step*/,
                           const OracleParams& params) {
  config.validate();
  const HexantValues w = worths(config);
  const double mean_w = permutation_invariant_sum(w) / kNumHexants;
  HexantValues u{};
  for (int i = 0; i < kNumHexants; ++i) {
    double smoothed = 0.0;
    for (int j = 0; j < kNumHexants; ++j) {
      smoothed += params.neighbor_kernel[j] * (w[(i + j) % kNumHexants] - mean_w);
    }
    u[i] = std::exp(params.tilt_gain * smoothed);
  }
  double total = 0.0;
  for (double x : u) total += x;
  for (double& x : u) x /= total;
  return u;
}

CoreResponse evaluate(const DrumConfig& config, BurnupStep step,
                      const OracleParams& params,
                      std::optional<std::uint64_t> noise_seed) {
  CoreResponse r{k_eff(config, step, params), hexant_powers(config, step, params)};
  if (noise_seed && params.noise_sigma_pcm > 0.0) {
    const double sigma = params.noise_sigma_pcm * 1e-5;
    std::mt19937_64 rng(*noise_seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    r.k_eff += gauss(rng);
    double total = 0.0;
    for (double& p : r.powers) {
      p = std::max(p * (1.0 + gauss(rng)), 0.0);
      total += p;
    }
    for (double& p : r.powers) p /= total;
  }
  return r;
}

void check_symmetry_op(int op) {
  if (op < 0 || op >= kNumSymmetryOps) {
    throw DomainError("symmetry op index must be in [0, 11], got " +
                      std::to_string(op));
  }
}

std::pair<DrumConfig, CoreResponse> apply_symmetry(int op,
                                                   const DrumConfig& config,
                                                   const CoreResponse& response) {
  DrumConfig c{permute_hexants(op, config.angles)};
  CoreResponse r{response.k_eff, permute_hexants(op, response.powers)};
  return {c, r};
}

OracleParams calibrate(const std::array<double, kNumBurnupSteps>& target_angles,
                       double total_drum_worth, double interaction_strength) {
  OracleParams p;
  p.total_drum_worth = total_drum_worth;
  p.interaction_strength = interaction_strength;
  for (int s = 0; s < kNumBurnupSteps; ++s) {
    const double w = worth_curve(target_angles[s]);
    p.base_k[s] = 1.0 - total_drum_worth * w -
                  interaction_strength * kNumHexants * w * w;
  }
  p.validate();
  return p;
}

std::optional<double> find_critical_angle(BurnupStep step,
                                          const OracleParams& params,
                                          double tolerance_deg) {
  auto excess = [&](double theta) {
    HexantValues angles;
    angles.fill(theta);
    return k_eff_continuous(angles, step, params) - 1.0;
  };
  double lo = 0.0;
  double hi = kMaxAngle;
  double f_lo = excess(lo);
  const double f_hi = excess(hi);
  if (f_lo > 0.0 || f_hi < 0.0) return std::nullopt;
  while (hi - lo > tolerance_deg) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = excess(mid);
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace drumrl
