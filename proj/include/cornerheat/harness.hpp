#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cornerheat/correction.hpp"
#include "cornerheat/geometry.hpp"

namespace cornerheat {

enum class Study { table1, gamma, advection_qoi, cfl_probe, elliptic_pollution };

Study parse_study(const std::string& name);
std::string study_name(Study s);

struct StudyConfig {
  Study study = Study::table1;
  int levels = 0;      // 0 picks the study default
  double dt0 = 0.0;    // 0 picks the study default
  double t_end = 1.0;
  std::optional<double> alpha;  // default 1 - pi / theta
  std::optional<double> gamma;  // empty means search
  std::string out;              // output directory, empty for none
  unsigned seed = 1;
  /// Each nominal step dt0 / 4^(L-1) is split into this many substeps; 0 picks
  /// the smallest count that keeps every level below 0.9 dt_max.
  int substeps = 0;
  double grading_mu = 0.6;
  bool zero_source = false;  // advection study with f = 0

  [[nodiscard]] int resolved_levels() const;
  [[nodiscard]] double resolved_dt0() const;
  void validate() const;
};

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  long dofs = 0;
  std::optional<double> dt;  // empty for elliptic studies
  std::optional<double> err_l2, rate_l2;
  std::optional<double> err_weighted, rate_weighted;
  std::optional<double> err_post, rate_post;
  std::optional<double> k1h;
  double wall_seconds = 0.0;
};

struct ConvergenceRecord {
  std::vector<ConvergenceRow> rows;

  /// Fills every rate column from the adjacent error entries.
  void fill_rates();
  /// Header: level,h,dofs,dt,err_l2,rate_l2,err_weighted,rate_weighted,err_post,rate_post,k1h,wall_seconds
  void write_csv(std::ostream& out, bool include_wall = true) const;
  [[nodiscard]] std::string to_csv(bool include_wall = true) const;
};

inline constexpr const char* kCsvHeader =
    "level,h,dofs,dt,err_l2,rate_l2,err_weighted,rate_weighted,err_post,rate_post,k1h,wall_seconds";

/// rate_i = log2(err_{i-1} / err_i); throws on non-positive errors.
std::vector<double> compute_eoc(std::span<const double> errors);
/// Least-squares slope of -log2(err) against level (mesh factor 2).
double eoc_fit(std::span<const double> errors);

/// One acceptance-band check.
struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Table1Result {
  ConvergenceRecord standard;
  ConvergenceRecord corrected;  // err_l2/err_weighted of the corrected scheme, err_post post-processed
  std::vector<double> gammas;
  int substeps = 1;
  double k1_exact = 0.0;
  std::vector<double> k1_errors;
  double k1_eoc = 0.0;  // fit over levels 3..L
  std::vector<Check> checks() const;
};

struct EllipticResult {
  ConvergenceRecord standard;   // err_post column: L2 error away from the corner
  ConvergenceRecord corrected;  // same layout
  std::vector<double> gammas;
  std::vector<Check> checks() const;
};

struct AdvectionLevel {
  int level = 0;
  double h = 0.0;
  long dofs = 0;
  double dt = 0.0;
  double qoi_standard = 0.0;
  double qoi_corrected = 0.0;
  double peak_corrected = 0.0;  // quadratic reconstruction of the maximum
};

struct AdvectionResult {
  std::vector<AdvectionLevel> levels;
  std::vector<double> gammas_by_corner;  // finest level
  int substeps = 1;
  double qoi_extrapolated = 0.0;  // from the reconstructed peaks
  double extrapolation_order = 0.0;
  double eoc_standard = 0.0;   // fit over all but the finest level
  double eoc_corrected = 0.0;
  bool zero_source = false;
  std::vector<Check> checks() const;
  [[nodiscard]] std::string to_json() const;
};

struct CflLevel {
  int level = 0;
  double h = 0.0;
  double h_min = 0.0;
  double dt_max = 0.0;
  double ratio = 0.0;  // dt_max / previous level's dt_max, 0 on the first
  double dt_max_graded = 0.0;
  bool stable_bounded = false;
  double worst_bound_ratio = 0.0;  // max_n ||U^n|| / bound_n
  bool unstable_aborted = false;
  long abort_step = -1;
};

struct CflResult {
  std::vector<CflLevel> levels;
  double grading_mu = 0.6;
  std::vector<Check> checks() const;
  [[nodiscard]] std::string to_json() const;
};

/// Uniform hierarchy of the L-shape, levels 1..n.
std::vector<TriMesh> l_shape_hierarchy(int levels);

Table1Result run_table1(const StudyConfig& cfg);
EllipticResult run_elliptic_pollution(const StudyConfig& cfg);
GammaSearchReport run_gamma(const StudyConfig& cfg);
std::vector<Check> gamma_checks(const GammaSearchReport& report);
AdvectionResult run_advection_qoi(const StudyConfig& cfg);
CflResult run_cfl_probe(const StudyConfig& cfg);

/// "auto" (or empty) means search; anything else must be a number.
std::optional<double> parse_gamma_option(const std::string& text);

/// Applies a TOML document with a flat [study] table to `cfg`. Keys may be
/// kebab- or snake-case; a `name` or `study` key selects the study.
void load_config(std::string_view toml_text, StudyConfig& cfg);
void load_config_file(const std::string& path, StudyConfig& cfg);

/// Runs the configured study, prints a summary to `log`, writes reports into
/// cfg.out when set and returns the acceptance-band checks.
std::vector<Check> run_study(const StudyConfig& cfg, std::ostream& log);

}  // namespace cornerheat
