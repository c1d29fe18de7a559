#include "specdec/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "specdec/csv.hpp"
#include "specdec/error.hpp"

namespace specdec {

namespace {

constexpr double kNuSlack = 1e-9;

}  // namespace

void validate(const TimingBreakdown& t) {
  for (double x : {t.t_overhead, t.t_verify, t.t_backbone, t.t_head}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(Errc::InvalidArgument, "timings must be finite and >= 0");
  }
}

void validate(const PerfPoint& p) {
  if (!(p.nu > 0.0)) throw Error(Errc::InvalidArgument, "nu must be > 0");
  if (p.nu > 1.0 + kNuSlack) {
    throw Error(Errc::InvalidArgument,
                "nu = " + std::to_string(p.nu) + " > 1: head slower than the full-vocabulary head");
  }
  if (!(p.rho_tau > 0.0)) throw Error(Errc::InvalidArgument, "rho_tau must be > 0");
  if (!(p.kappa >= 0.0)) throw Error(Errc::InvalidArgument, "kappa must be >= 0");
}

double tps(double tau, const TimingBreakdown& timing) {
  validate(timing);
  if (!(tau >= 1.0)) throw Error(Errc::InvalidArgument, "tau must be >= 1");
  const double total = timing.total();
  if (total <= 0.0) throw Error(Errc::DivisionByZero, "total time is zero");
  return tau / total;
}

double kappa(const TimingBreakdown& timing_full) {
  validate(timing_full);
  const double non_head = timing_full.t_non_head();
  if (non_head <= 0.0) throw Error(Errc::DivisionByZero, "non-head time is zero");
  return timing_full.t_head / non_head;
}

double speedup(double nu, double rho_tau, double kappa) {
  validate(PerfPoint{nu, rho_tau, kappa});
  return rho_tau * (1.0 + kappa) / (1.0 + nu * kappa);
}

double min_acceptance_ratio(double nu, double kappa) {
  validate(PerfPoint{nu, 1.0, kappa});
  return (1.0 + nu * kappa) / (1.0 + kappa);
}

std::vector<LevelPoint> level_curve_grid(double kappa, const std::vector<double>& speedup_levels,
                                         const std::vector<double>& nu_grid) {
  if (speedup_levels.empty() || nu_grid.empty()) throw Error(Errc::InvalidArgument, "empty level-curve grid");
  std::vector<LevelPoint> out;
  out.reserve(speedup_levels.size() * nu_grid.size());
  for (double level : speedup_levels) {
    if (!(level > 0.0)) throw Error(Errc::InvalidArgument, "speedup levels must be > 0");
    for (double nu : nu_grid) {
      out.push_back({level, nu, level * min_acceptance_ratio(nu, kappa)});
    }
  }
  return out;
}

std::vector<ReferenceRow> load_reference_table(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(Errc::IoError, "cannot open reference table " + csv_path.string());
  const auto table = read_csv(in);
  const auto col = [&](const char* name) { return table.column(name); };
  const std::size_t c_method = col("method");
  const std::size_t c_config = col("config");
  const std::size_t c_speedup = col("speedup");
  const std::size_t c_rho = col("rho_tau");
  const std::size_t c_nu = col("nu");
  std::vector<ReferenceRow> rows;
  for (const auto& r : table.rows) {
    rows.push_back(ReferenceRow{r[c_method], r[c_config], parse_double(r[c_speedup]), parse_double(r[c_rho]),
                                parse_double(r[c_nu])});
  }
  if (rows.empty()) throw Error(Errc::ConfigError, "reference table " + csv_path.string() + " has no rows");
  return rows;
}

bool CrosscheckReport::all_pass() const noexcept {
  return std::all_of(rows.begin(), rows.end(), [](const CrosscheckRow& r) { return r.pass; });
}

double CrosscheckReport::max_delta() const noexcept {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.delta);
  return m;
}

CrosscheckReport crosscheck(const std::vector<ReferenceRow>& rows, double kappa, double tolerance) {
  CrosscheckReport report;
  report.tolerance = tolerance;
  for (const auto& ref : rows) {
    CrosscheckRow row;
    row.reference = ref;
    row.kappa = kappa;
    row.predicted_speedup = speedup(ref.nu, ref.rho_tau, kappa);
    row.delta = std::abs(row.predicted_speedup - ref.measured_speedup);
    row.pass = row.delta <= tolerance;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace specdec
