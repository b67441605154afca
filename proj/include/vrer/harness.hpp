#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrer/agents.hpp"

namespace vrer {

struct ExperimentSpec {
  std::string env = "cartpole";
  std::string algo = "ac";  // "ac" | "ppo"
  AgentConfig agent;
  int macro_reps = 30;
  std::uint64_t seed = 0;  // replication r uses seed + r
  int jobs = 1;
  std::filesystem::path out;  // empty: nothing written
  bool record_walltime = true;  // off: wall times are written as zero

  void validate() const;
};

/// Calibrated defaults for an environment and algorithm ("ac" | "ppo").
/// Fermentation learns on rewards scaled by 1e-3 with a short discount
/// horizon; the classic-control tasks use gamma = 0.99 and raw rewards.
AgentConfig default_agent_config(std::string_view env, std::string_view algo);

/// One row per outer iteration, aggregated over replications.
struct CurveRow {
  int iter = 0;
  double return_mean = 0.0;
  double return_ci = 0.0;  // 95% normal half-width
  double tracevar_mean = 0.0;
  double tracevar_ci = 0.0;
  double reuse_size_mean = 0.0;
  double walltime_s = 0.0;
};

struct AggregateCurve {
  std::vector<CurveRow> rows;
};

inline constexpr const char* kCurveHeader =
    "iter,return_mean,return_ci,tracevar_mean,tracevar_ci,reuse_size_mean,walltime_s";

/// Mean and 1.96 * sd / sqrt(n) half-width; the half-width of a single
/// value is 0.
struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};
MeanCi mean_ci(const std::vector<double>& values);

/// Runs one replication with seed spec.seed + replication.
TrainResult run_replication(const ExperimentSpec& spec, int replication);

/// All replications, in replication order; parallel up to spec.jobs.
/// Throws Error if any replication fails.
std::vector<std::vector<IterationLog>> run_replications(const ExperimentSpec& spec);

/// Pure function of the per-run logs. With record_walltime = false the
/// wall-time column is written as zero.
AggregateCurve aggregate(const std::vector<std::vector<IterationLog>>& runs,
                         bool record_walltime = true);

void write_curve_csv(const AggregateCurve& curve, std::ostream& out);
AggregateCurve read_curve_csv(std::istream& in);
void write_run_csv(const std::vector<IterationLog>& log, std::ostream& out);
std::vector<IterationLog> read_run_csv(std::istream& in);

AggregateCurve load_curve(const std::filesystem::path& file);
void save_curve(const AggregateCurve& curve, const std::filesystem::path& file);

/// Runs the replications and, when spec.out is set, writes
/// out/curve.csv and out/runs/rep_NNN.csv.
AggregateCurve run_experiment(const ExperimentSpec& spec);

/// Re-aggregates the per-run logs found under dir/runs into dir/curve.csv.
AggregateCurve reaggregate(const std::filesystem::path& dir, bool record_walltime = true);

struct Comparison {
  std::vector<double> mean_difference;  // a - b per iteration
  std::optional<int> crossing_a;        // first iteration with return_mean >= target
  std::optional<int> crossing_b;
  double auc_difference = 0.0;          // sum over iterations of (a - b)
  double final_difference = 0.0;
  double target = 0.0;
};

/// Throws StructuralError when the curves have different lengths.
Comparison compare(const AggregateCurve& a, const AggregateCurve& b, double target);
std::string format_comparison(const Comparison& cmp);

/// One experiment per value of c, written to out/c_<value>/.
std::vector<AggregateCurve> sweep_c(const ExperimentSpec& spec, const std::vector<double>& values);

/// Directory name used by sweep_c for a value of c.
std::string sweep_dir_name(double c);

}  // namespace vrer
