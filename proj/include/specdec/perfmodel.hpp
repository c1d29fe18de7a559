#pragma once

// Acceptance-cost performance model.
//
//   TPS        = tau / (T_overhead + T_verify + T_backbone + T_head)
//   kappa      = T_head^Full / (T_overhead + T_verify + T_backbone)
//   speedup    = rho_tau * (1 + kappa) / (1 + nu * kappa)
//   break-even : rho_tau > (1 + nu * kappa) / (1 + kappa)

#include <filesystem>
#include <string>
#include <vector>

namespace specdec {

struct TimingBreakdown {
  double t_overhead = 0.0;
  double t_verify = 0.0;
  double t_backbone = 0.0;
  double t_head = 0.0;

  double t_draft() const noexcept { return t_backbone + t_head; }
  double t_non_head() const noexcept { return t_overhead + t_verify + t_backbone; }
  double total() const noexcept { return t_overhead + t_verify + t_draft(); }
};

void validate(const TimingBreakdown& timing);

struct PerfPoint {
  double nu = 1.0;
  double rho_tau = 1.0;
  double kappa = 0.0;
};

/// Rejects nu outside (0, 1] (1e-9 slack), rho_tau <= 0 and kappa < 0.
void validate(const PerfPoint& point);

double tps(double tau, const TimingBreakdown& timing);
double kappa(const TimingBreakdown& timing_full);
double speedup(double nu, double rho_tau, double kappa);
inline double speedup(const PerfPoint& p) { return speedup(p.nu, p.rho_tau, p.kappa); }
double min_acceptance_ratio(double nu, double kappa);

struct LevelPoint {
  double level = 0.0;
  double nu = 0.0;
  double rho_tau = 0.0;
};

/// rho_tau on each speedup level curve, for every (level, nu) pair.
std::vector<LevelPoint> level_curve_grid(double kappa, const std::vector<double>& speedup_levels,
                                         const std::vector<double>& nu_grid);

struct ReferenceRow {
  std::string method;
  std::string config;
  double measured_speedup = 0.0;
  double rho_tau = 0.0;
  double nu = 0.0;
};

/// Reads method,config,speedup,rho_tau,nu rows (header required).
std::vector<ReferenceRow> load_reference_table(const std::filesystem::path& csv_path);

struct CrosscheckRow {
  ReferenceRow reference;
  double kappa = 0.0;
  double predicted_speedup = 0.0;
  double delta = 0.0;
  bool pass = false;
};

struct CrosscheckReport {
  std::vector<CrosscheckRow> rows;
  double tolerance = 0.05;

  bool all_pass() const noexcept;
  double max_delta() const noexcept;
};

CrosscheckReport crosscheck(const std::vector<ReferenceRow>& rows, double kappa = 0.25, double tolerance = 0.05);

}  // namespace specdec
