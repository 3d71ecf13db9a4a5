#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "drumrl/dataset.hpp"
#include "drumrl/error.hpp"
#include "test_support.hpp"

using namespace drumrl;

namespace {

const OracleParams& params() {
  static const OracleParams p = calibrate(kDefaultCriticalAngles);
  return p;
}

std::set<int> groups(const std::vector<Sample>& v) {
  std::set<int> g;
  for (const auto& s : v) g.insert(s.group_id);
  return g;
}

bool is_uniform(const DrumConfig& c) {
  return std::all_of(c.angles.begin(), c.angles.end(), [&](int a) { return a == c.angles[0]; });
}

}  // namespace

TEST_CASE("sample_configs is deterministic and in range") {
  const auto a = sample_configs(250, 7);
  const auto b = sample_configs(250, 7);
  CHECK(a == b);
  CHECK(a.size() == 250);
  CHECK_FALSE(a == sample_configs(250, 8));
  for (const auto& c : a) {
    for (int v : c.angles) {
      CHECK(v >= 0);
      CHECK(v <= 180);
    }
  }
  CHECK_THROWS_AS(sample_configs(0, 1), DomainError);
}

TEST_CASE("sample_configs anchors 10% uniform configurations") {
  const auto a = sample_configs(250, 7);
  // The first 225 are independent draws, the last 25 are uniform.
  for (std::size_t i = 225; i < 250; ++i) CHECK(is_uniform(a[i]));
  int uniform_in_random = 0;
  for (std::size_t i = 0; i < 225; ++i) uniform_in_random += is_uniform(a[i]);
  CHECK(uniform_in_random == 0);
  CHECK(sample_configs(9, 1).size() == 9);
  const auto small = sample_configs(9, 1);
  CHECK(std::none_of(small.begin(), small.end(), is_uniform));
}

TEST_CASE("generate labels with the deterministic oracle") {
  std::size_t total = 0;
  for (BurnupStep s : kAllBurnupSteps) {
    const auto samples = generate(s, 250, 3, params());
    total += samples.size();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      CHECK(samples[i].group_id == static_cast<int>(i));
      CHECK(samples[i].step == s);
      CHECK(samples[i].response == evaluate(samples[i].config, s, params()));
      double sum = 0.0;
      for (double p : samples[i].response.powers) sum += p;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    CHECK(samples == generate(s, 250, 3, params()));
  }
  CHECK(total == 750);
}

TEST_CASE("split group counts use largest remainder") {
  using A = std::array<std::size_t, 3>;
  CHECK(split_group_counts(250, {}) == A{175, 37, 38});
  CHECK(split_group_counts(100, {}) == A{70, 15, 15});
  CHECK(split_group_counts(3, {}) == A{2, 0, 1});
  CHECK(split_group_counts(10, {0.5, 0.25, 0.25}) == A{5, 2, 3});
  for (std::size_t n = 3; n < 400; ++n) {
    const auto c = split_group_counts(n, {});
    CHECK(c[0] + c[1] + c[2] == n);
    CHECK(std::abs(static_cast<double>(c[0]) - 0.70 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(c[1]) - 0.15 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(c[2]) - 0.15 * n) <= 1.0);
  }
  CHECK_THROWS_AS(split_group_counts(10, {0.5, 0.5, 0.5}), DomainError);
  CHECK_THROWS_AS(split_group_counts(10, {1.2, -0.1, -0.1}), DomainError);
}

TEST_CASE("split partitions by group") {
  const auto samples = generate(BurnupStep::kYr0, 250, 1, params());
  const DatasetSplit sp = split(samples, 99);
  CHECK(sp.seed == 99);
  CHECK(sp.train.size() == 175);
  CHECK(sp.validation.size() == 37);
  CHECK(sp.test.size() == 38);
  std::multiset<int> all;
  for (const auto* part : {&sp.train, &sp.validation, &sp.test}) {
    for (const auto& s : *part) all.insert(s.group_id);
  }
  CHECK(all.size() == 250);
  CHECK(std::set<int>(all.begin(), all.end()).size() == 250);
  CHECK(sp == split(samples, 99));
  CHECK_FALSE(sp == split(samples, 100));

  const std::vector<Sample> two(samples.begin(), samples.begin() + 2);
  CHECK_THROWS_AS(split(two, 1), DomainError);
}

TEST_CASE("augment multiplies by 12 and keeps groups together") {
  const auto samples = generate(BurnupStep::kYr2, 250, 4, params());
  const auto aug = augment(samples);
  CHECK(aug.size() == 3000);
  std::map<int, std::vector<const Sample*>> by_group;
  for (const auto& s : aug) by_group[s.group_id].push_back(&s);
  CHECK(by_group.size() == 250);
  for (const auto& [g, members] : by_group) {
    CHECK(members.size() == 12);
    for (const Sample* m : members) CHECK(m->response.k_eff == members.front()->response.k_eff);
  }
  // Uniform configurations keep all 12 copies.
  const auto uni = augment(std::span(samples).subspan(240, 1));
  CHECK(uni.size() == 12);
  for (const auto& s : uni) CHECK(s.config == samples[240].config);

  const DatasetSplit sp = augment(split(samples, 5));
  CHECK(sp.train.size() == 175 * 12);
  CHECK(sp.validation.size() == 37 * 12);
  CHECK(sp.test.size() == 456);
  CHECK(groups(sp.test).size() == 38);
  for (int g : groups(sp.test)) {
    CHECK_FALSE(groups(sp.train).contains(g));
    CHECK_FALSE(groups(sp.validation).contains(g));
  }
}

TEST_CASE("sample CSV round-trip") {
  const auto dir = test::temp_dir("dataset_csv");
  const auto samples = augment(generate(BurnupStep::kYr4, 20, 2, params()));
  save_samples(dir / "s.csv", samples, "made by a test");
  CHECK(load_samples(dir / "s.csv") == samples);
  const std::string text = test::read_file(dir / "s.csv");
  CHECK(text.starts_with("# made by a test\nstep,group_id,theta1,theta2,theta3,theta4,theta5,theta6,k_eff,p1,p2,p3,p4,p5,p6\n"));
  // First data row: step in years, integer angles.
  CHECK(text.find("\n4,0,") != std::string::npos);
}

TEST_CASE("split CSV round-trip") {
  const auto dir = test::temp_dir("dataset_split");
  const DatasetSplit sp = augment(split(generate(BurnupStep::kYr0, 30, 2, params()), 77));
  save_split(dir / "d.csv", sp, "run_seed=1 config_hash=abc");
  const DatasetSplit back = load_split(dir / "d.csv");
  CHECK(back == sp);
  CHECK(back.seed == 77);
}

TEST_CASE("malformed CSV input names the offending line") {
  const auto dir = test::temp_dir("dataset_bad");
  const auto samples = generate(BurnupStep::kYr0, 5, 2, params());
  save_samples(dir / "ok.csv", samples);
  std::string text = test::read_file(dir / "ok.csv");

  // Truncated last row.
  const std::string truncated = text.substr(0, text.size() - 25);
  test::write_file(dir / "trunc.csv", truncated);
  try {
    load_samples(dir / "trunc.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 6);
  }

  std::string header = text;
  header.replace(0, 4, "year");
  test::write_file(dir / "header.csv", header);
  try {
    load_samples(dir / "header.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }

  std::string bad_value = text;
  const auto second_row = bad_value.find('\n', bad_value.find('\n') + 1) + 1;
  bad_value.replace(second_row + 2, 1, "x");
  test::write_file(dir / "value.csv", bad_value);
  try {
    load_samples(dir / "value.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  std::string angle = text;
  const auto row = angle.find('\n') + 1;
  const auto third_comma = angle.find(',', angle.find(',', row) + 1) + 1;
  angle.replace(third_comma, angle.find(',', third_comma) - third_comma, "181");
  test::write_file(dir / "angle.csv", angle);
  CHECK_THROWS_AS(load_samples(dir / "angle.csv"), ParseError);

  CHECK_THROWS_AS(load_samples(dir / "missing.csv"), ParseError);
  test::write_file(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_samples(dir / "empty.csv"), ParseError);
}
