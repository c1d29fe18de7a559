#include <cmath>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "specdec/perfmodel.hpp"

using namespace specdec;

TEST_CASE("tps examples") {
  CHECK(tps(4.0, TimingBreakdown{0.004, 0.003, 0.002, 0.001}) == doctest::Approx(400.0).epsilon(1e-14));
  CHECK(tps(1.0, TimingBreakdown{0.25, 0.25, 0.25, 0.25}) == 1.0);
  const TimingBreakdown t{0.01, 0.02, 0.005, 0.003};
  const TimingBreakdown t2{0.02, 0.04, 0.01, 0.006};
  CHECK(tps(3.5, t2) == doctest::Approx(tps(3.5, t) / 2.0).epsilon(1e-14));
  CHECK_ERRC(tps(2.0, TimingBreakdown{}), Errc::DivisionByZero);
  CHECK_ERRC(tps(0.5, t), Errc::InvalidArgument);
  CHECK_ERRC(tps(2.0, TimingBreakdown{-1.0, 1.0, 1.0, 1.0}), Errc::InvalidArgument);
}

TEST_CASE("kappa examples") {
  CHECK(kappa(TimingBreakdown{1.0, 2.0, 1.0, 1.0}) == 0.25);
  CHECK(kappa(TimingBreakdown{1.0, 2.0, 1.0, 0.0}) == 0.0);
  CHECK(kappa(TimingBreakdown{0.5, 0.25, 0.25, 1.0}) == 1.0);
  CHECK_ERRC(kappa(TimingBreakdown{0.0, 0.0, 0.0, 1.0}), Errc::DivisionByZero);
}

TEST_CASE("speedup examples") {
  for (double k : {0.0, 0.25, 3.0}) CHECK(speedup(1.0, 1.0, k) == 1.0);
  const double s = speedup(0.21, 0.99, 0.25);
  CHECK(s == doctest::Approx(0.99 * 1.25 / 1.0525).epsilon(1e-15));
  CHECK(std::abs(s - 1.176) < 5e-4);
  CHECK(speedup(1e-12, 1.0, 0.25) == doctest::Approx(1.25).epsilon(1e-11));
}

TEST_CASE("speedup rejects points outside its domain") {
  CHECK_ERRC(speedup(1.2, 1.0, 0.25), Errc::InvalidArgument);
  CHECK_ERRC(speedup(0.0, 1.0, 0.25), Errc::InvalidArgument);
  CHECK_ERRC(speedup(0.5, 0.0, 0.25), Errc::InvalidArgument);
  CHECK_ERRC(speedup(0.5, 1.0, -0.1), Errc::InvalidArgument);
  CHECK_NOTHROW(speedup(1.0 + 5e-10, 1.0, 0.25));
}

TEST_CASE("speedup monotonicity") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double nu = 0.01 + 0.98 * uniform01(rng);
    const double rho = 0.5 + uniform01(rng);
    const double k = 0.01 + 2.0 * uniform01(rng);
    CHECK(speedup(nu + 0.005, rho, k) < speedup(nu, rho, k));
    CHECK(speedup(nu, rho + 0.01, k) > speedup(nu, rho, k));
    CHECK(speedup(nu, 1.0, k + 0.01) > speedup(nu, 1.0, k));
  }
}

TEST_CASE("min_acceptance_ratio examples") {
  CHECK(min_acceptance_ratio(0.3, 0.0) == 1.0);
  CHECK(min_acceptance_ratio(1.0, 0.25) == 1.0);
  CHECK(std::abs(min_acceptance_ratio(0.2, 0.25) - 0.84) < 1e-15);
}

TEST_CASE("break-even identity") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double nu = 1e-3 + (1.0 - 1e-3) * uniform01(rng);
    const double k = 4.0 * uniform01(rng);
    CHECK(std::abs(speedup(nu, min_acceptance_ratio(nu, k), k) - 1.0) < 1e-12);
  }
}

TEST_CASE("level_curve_grid examples") {
  const auto one = level_curve_grid(0.25, {1.0}, {1.0});
  REQUIRE(one.size() == 1);
  CHECK(one[0].rho_tau == 1.0);

  const auto g = level_curve_grid(0.25, {1.19}, {0.21});
  CHECK(g[0].rho_tau == doctest::Approx(1.19 * 1.0525 / 1.25).epsilon(1e-15));
  CHECK(std::abs(g[0].rho_tau - 1.0020) < 5e-5);

  Rng rng(5);
  std::vector<double> levels;
  std::vector<double> nus;
  for (int i = 0; i < 20; ++i) {
    levels.push_back(0.5 + uniform01(rng));
    nus.push_back(0.01 + 0.99 * uniform01(rng));
  }
  const double k = 0.4;
  const auto grid = level_curve_grid(k, levels, nus);
  CHECK(grid.size() == 400);
  for (const auto& pt : grid) CHECK(std::abs(speedup(pt.nu, pt.rho_tau, k) - pt.level) < 1e-12);

  CHECK_ERRC(level_curve_grid(0.25, {}, {0.5}), Errc::InvalidArgument);
  CHECK_ERRC(level_curve_grid(0.25, {0.0}, {0.5}), Errc::InvalidArgument);
}

TEST_CASE("crosscheck examples") {
  const std::vector<ReferenceRow> rows{{"Full Vocab", "-", 1.00, 1.00, 1.00},
                                       {"SlimSpec", "r=d/8", 1.19, 0.99, 0.21},
                                       {"FR-Spec", "V_tr=16K", 0.93, 0.78, 0.20}};
  const auto report = crosscheck(rows);
  CHECK(report.rows[0].predicted_speedup == 1.0);
  CHECK(report.rows[0].delta == 0.0);
  CHECK(std::abs(report.rows[1].delta - (1.19 - 0.99 * 1.25 / 1.0525)) < 1e-15);
  CHECK(report.rows[1].delta == doctest::Approx(0.014).epsilon(0.05));
  CHECK(report.rows[2].predicted_speedup == doctest::Approx(0.929).epsilon(1e-3));
  CHECK(report.rows[2].delta < 0.01);
  CHECK(report.all_pass());

  const auto strict = crosscheck(rows, 0.25, 0.001);
  CHECK_FALSE(strict.all_pass());
  CHECK(strict.max_delta() == report.rows[1].delta);
}

TEST_CASE("bundled reference table passes the crosscheck") {
  const auto rows = load_reference_table(std::filesystem::path(SPECDEC_DATA_DIR) / "reference_speedups.csv");
  CHECK(rows.size() == 17);
  const auto report = crosscheck(rows, 0.25, 0.05);
  for (const auto& r : report.rows) {
    CHECK_MESSAGE(r.pass, r.reference.method, " ", r.reference.config, " delta ", r.delta);
  }
}

TEST_CASE("reference table loading errors") {
  CHECK_ERRC(load_reference_table("/nonexistent/reference.csv"), Errc::IoError);
  const auto path = std::filesystem::temp_directory_path() / "specdec_bad_reference.csv";
  {
    std::ofstream out(path);
    out << "method,config,speedup,rho_tau\nFull,-,1,1\n";
  }
  CHECK_ERRC(load_reference_table(path), Errc::ConfigError);
  std::filesystem::remove(path);
}
