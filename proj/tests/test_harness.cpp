#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cornerheat/errors.hpp"
#include "cornerheat/harness.hpp"
#include "json.hpp"

using namespace cornerheat;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Recomputes every rate column from the printed errors.
void audit_rates(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  ASSERT_EQ(line, kCsvHeader);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) rows.push_back(split(line));
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) ASSERT_EQ(r.size(), 12u);
  for (int col : {4, 6, 8}) {
    EXPECT_TRUE(rows[0][col + 1].empty());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i][col].empty()) continue;
      const double a = std::stod(rows[i - 1][col]), b = std::stod(rows[i][col]);
      const double want = compute_eoc(std::vector<double>{a, b})[0];
      EXPECT_NEAR(std::stod(rows[i][col + 1]), want, 1e-8);
    }
  }
}

}  // namespace

TEST(Eoc, Examples) {
  EXPECT_DOUBLE_EQ(compute_eoc(std::vector<double>{4e-2, 1e-2})[0], 2.0);
  EXPECT_DOUBLE_EQ(compute_eoc(std::vector<double>{1e-2, 1e-2})[0], 0.0);
  EXPECT_NEAR(compute_eoc(std::vector<double>{2.2848e-2, 5.6370e-3})[0], 2.02, 5e-3);
  EXPECT_THROW(compute_eoc(std::vector<double>{1e-2, 0.0}), Error);
  EXPECT_THROW(compute_eoc(std::vector<double>{-1.0, 1e-2}), Error);
  EXPECT_NEAR(eoc_fit(std::vector<double>{1.0, 0.25, 0.0625, 0.015625}), 2.0, 1e-12);
  EXPECT_THROW(eoc_fit(std::vector<double>{1.0}), Error);
}

TEST(Record, RatesEmptyOnFirstLevel) {
  ConvergenceRecord r;
  for (int l = 1; l <= 3; ++l) {
    ConvergenceRow row;
    row.level = l;
    row.h = std::pow(0.5, l);
    row.err_l2 = std::pow(0.25, l);
    row.err_weighted = std::pow(0.5, l);
    r.rows.push_back(row);
  }
  r.fill_rates();
  EXPECT_FALSE(r.rows[0].rate_l2.has_value());
  EXPECT_DOUBLE_EQ(*r.rows[2].rate_l2, 2.0);
  EXPECT_DOUBLE_EQ(*r.rows[1].rate_weighted, 1.0);
  EXPECT_FALSE(r.rows[1].rate_post.has_value());
  audit_rates(r.to_csv());
}

TEST(Config, StudyNamesRoundTrip) {
  for (auto s : {Study::table1, Study::gamma, Study::advection_qoi, Study::cfl_probe, Study::elliptic_pollution}) {
    EXPECT_EQ(parse_study(study_name(s)), s);
  }
  EXPECT_THROW(parse_study("table2"), Error);
}

TEST(Config, DefaultsAndValidation) {
  StudyConfig c;
  EXPECT_EQ(c.resolved_levels(), 6);
  EXPECT_DOUBLE_EQ(c.resolved_dt0(), 0.1);
  c.study = Study::advection_qoi;
  EXPECT_EQ(c.resolved_levels(), 5);
  EXPECT_DOUBLE_EQ(c.resolved_dt0(), 0.02);
  c.levels = 2;
  EXPECT_THROW(c.validate(), Error);
  c.levels = 3;
  c.gamma = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c.gamma = 0.2;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, GammaOption) {
  EXPECT_FALSE(parse_gamma_option("auto").has_value());
  EXPECT_DOUBLE_EQ(*parse_gamma_option("0.125"), 0.125);
  EXPECT_THROW(parse_gamma_option("0.1x"), Error);
  EXPECT_THROW(parse_gamma_option("fast"), Error);
}

TEST(Config, Toml) {
  StudyConfig c;
  load_config(R"([study]
name = "advection_qoi"
levels = 4
dt0 = 0.01
t-end = 0.5
gamma = "auto"
grading-mu = 0.7
zero-source = true
out = "reports"
)",
              c);
  EXPECT_EQ(c.study, Study::advection_qoi);
  EXPECT_EQ(c.levels, 4);
  EXPECT_DOUBLE_EQ(c.dt0, 0.01);
  EXPECT_DOUBLE_EQ(c.t_end, 0.5);
  EXPECT_FALSE(c.gamma.has_value());
  EXPECT_DOUBLE_EQ(c.grading_mu, 0.7);
  EXPECT_TRUE(c.zero_source);
  EXPECT_EQ(c.out, "reports");

  load_config("[study]\ngamma = 0.11\n", c);
  EXPECT_DOUBLE_EQ(*c.gamma, 0.11);
  EXPECT_THROW(load_config("[study]\nspeed = 3\n", c), Error);
  EXPECT_THROW(load_config("[other]\nlevels = 3\n", c), Error);
  EXPECT_THROW(load_config("[study\nlevels = 3\n", c), Error);
  EXPECT_THROW(load_config("[study]\nlevels = \"many\"\n", c), Error);
  EXPECT_THROW(load_config_file("/nonexistent/config.toml", c), Error);
}

TEST(Studies, EllipticCsvIsDeterministic) {
  StudyConfig c;
  c.study = Study::elliptic_pollution;
  c.levels = 3;
  c.gamma = 0.12;
  const auto a = run_elliptic_pollution(c);
  const auto b = run_elliptic_pollution(c);
  EXPECT_EQ(a.standard.to_csv(false), b.standard.to_csv(false));
  EXPECT_EQ(a.corrected.to_csv(false), b.corrected.to_csv(false));
  audit_rates(a.standard.to_csv());
  audit_rates(a.corrected.to_csv());
  EXPECT_FALSE(a.standard.rows[0].dt.has_value());
}

TEST(Studies, Table1SmallRun) {
  StudyConfig c;
  c.levels = 3;
  c.gamma = 0.12;
  const auto r = run_table1(c);
  ASSERT_EQ(r.standard.rows.size(), 3u);
  EXPECT_EQ(r.substeps, 2);
  EXPECT_DOUBLE_EQ(*r.standard.rows[2].dt, 0.1 / 16 / r.substeps);
  EXPECT_NEAR(r.k1_exact, std::sin(1.0), 1e-15);
  audit_rates(r.standard.to_csv());
  audit_rates(r.corrected.to_csv());
  // corrected beats standard in the weighted norm already on coarse levels
  EXPECT_LT(*r.corrected.rows[2].err_weighted, *r.standard.rows[2].err_weighted);
  EXPECT_EQ(r.standard.to_csv(false), run_table1(c).standard.to_csv(false));
}

TEST(Studies, GammaReportDeterministic) {
  StudyConfig c;
  c.study = Study::gamma;
  c.levels = 4;
  const auto a = run_gamma(c);
  const auto b = run_gamma(c);
  EXPECT_EQ(a.to_json(), b.to_json());
  const auto checks = gamma_checks(a);
  for (const auto& k : checks) EXPECT_TRUE(k.pass) << k.name << ": " << k.detail;
}

TEST(Studies, AdvectionZeroSource) {
  StudyConfig c;
  c.study = Study::advection_qoi;
  c.levels = 3;
  c.zero_source = true;
  c.gamma = 0.15;
  const auto r = run_advection_qoi(c);
  for (const auto& l : r.levels) {
    EXPECT_EQ(l.qoi_standard, 0.0);
    EXPECT_EQ(l.qoi_corrected, 0.0);
  }
  for (const auto& k : r.checks()) EXPECT_TRUE(k.pass);
}

TEST(Studies, CflProbeWritesJson) {
  StudyConfig c;
  c.study = Study::cfl_probe;
  c.levels = 2;
  const auto dir = std::filesystem::temp_directory_path() / "cornerheat_cfl_test";
  std::filesystem::remove_all(dir);
  c.out = dir.string();
  std::ostringstream log;
  const auto checks = run_study(c, log);
  for (const auto& k : checks) EXPECT_TRUE(k.pass) << k.name << ": " << k.detail;
  std::ifstream in(dir / "cfl_probe.json");
  ASSERT_TRUE(in.good());
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j.at("levels").size(), 2u);
  EXPECT_GT(j["levels"][0]["dt_max"].get<double>(), j["levels"][1]["dt_max"].get<double>());
  std::filesystem::remove_all(dir);
}
