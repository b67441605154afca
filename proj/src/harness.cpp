#include "vrer/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw IoError("bad number '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw IoError("bad number '" + s + "'");
  } catch (const std::out_of_range&) {
    throw IoError("number out of range '" + s + "'");
  }
}

constexpr const char* kRunHeader = "iter,mean_return,trace_var,reuse_size,wall_time_s,epochs_run,kl";

}  // namespace

void ExperimentSpec::validate() const {
  if (env != "cartpole" && env != "acrobot" && env != "fermentation") {
    throw UsageError("unknown environment '" + env + "'");
  }
  if (algo != "ac" && algo != "ppo") throw UsageError("unknown algorithm '" + algo + "'");
  if (macro_reps < 1) throw UsageError("macro-reps must be >= 1");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  agent.validate();
}

AgentConfig default_agent_config(std::string_view env, std::string_view algo) {
  AgentConfig a;
  a.adv_norm = algo == "ppo";
  if (algo == "ppo") {
    a.lr_actor = 0.001;
    a.lr_critic = 0.005;
  } else {
    a.lr_actor = env == "cartpole" ? 0.005 : 0.001;
    a.lr_critic = a.lr_actor;
  }
  if (env == "fermentation") {
    // Squared setpoint errors reach 1e4 per step. With gamma near one the
    // critic's error on the long tail dominates the advantage and drives
    // the feed to zero.
    a.gamma = 0.7;
    a.reward_scale = 1e-3;
    if (algo == "ac") {
      a.lr_actor = 1e-4;
      a.lr_critic = 0.005;
    }
  }
  return a;
}

MeanCi mean_ci(const std::vector<double>& values) {
  MeanCi out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  out.mean = sum / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

TrainResult run_replication(const ExperimentSpec& spec, int replication) {
  std::mt19937_64 rng(spec.seed + static_cast<std::uint64_t>(replication));
  auto env = make_env(spec.env);
  spdlog::debug("replication {} (seed {}) starting", replication,
                spec.seed + static_cast<std::uint64_t>(replication));
  auto result = spec.algo == "ac" ? train_actor_critic_vrer(*env, spec.agent, rng)
                                  : train_ppo_vrer(*env, spec.agent, rng);
  if (!result.logs.empty()) {
    spdlog::debug("replication {} done: final return {}", replication,
                  result.logs.back().mean_return);
  }
  return result;
}

std::vector<std::vector<IterationLog>> run_replications(const ExperimentSpec& spec) {
  spec.validate();
  const auto reps = static_cast<std::size_t>(spec.macro_reps);
  std::vector<std::vector<IterationLog>> logs(reps);
  std::vector<std::string> errors(reps);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) {
      try {
        logs[r] = run_replication(spec, static_cast<int>(r)).logs;
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), reps);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::string failures;
  for (std::size_t r = 0; r < reps; ++r) {
    if (!errors[r].empty()) {
      spdlog::error("replication {} failed: {}", r, errors[r]);
      failures += " [" + std::to_string(r) + "] " + errors[r];
    }
  }
  if (!failures.empty()) throw Error("replication failure:" + failures);
  return logs;
}

AggregateCurve aggregate(const std::vector<std::vector<IterationLog>>& runs,
                         bool record_walltime) {
  AggregateCurve curve;
  if (runs.empty()) return curve;
  const std::size_t iters = runs.front().size();
  for (const auto& run : runs) {
    if (run.size() != iters) throw StructuralError("runs have different iteration counts");
  }
  for (std::size_t k = 0; k < iters; ++k) {
    std::vector<double> ret, var, reuse, wall;
    for (const auto& run : runs) {
      ret.push_back(run[k].mean_return);
      var.push_back(run[k].trace_var);
      reuse.push_back(static_cast<double>(run[k].reuse_size));
      wall.push_back(run[k].wall_time_s);
    }
    CurveRow row;
    row.iter = runs.front()[k].iter;
    const auto r = mean_ci(ret);
    const auto v = mean_ci(var);
    row.return_mean = r.mean;
    row.return_ci = r.half_width;
    row.tracevar_mean = v.mean;
    row.tracevar_ci = v.half_width;
    row.reuse_size_mean = mean_ci(reuse).mean;
    row.walltime_s = record_walltime ? mean_ci(wall).mean : 0.0;
    curve.rows.push_back(row);
  }
  return curve;
}

void write_curve_csv(const AggregateCurve& curve, std::ostream& out) {
  out << kCurveHeader << '\n';
  for (const auto& row : curve.rows) {
    out << row.iter << ',' << format_number(row.return_mean) << ','
        << format_number(row.return_ci) << ',' << format_number(row.tracevar_mean) << ','
        << format_number(row.tracevar_ci) << ',' << format_number(row.reuse_size_mean) << ','
        << format_number(row.walltime_s) << '\n';
  }
}

AggregateCurve read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) {
    throw IoError("curve file does not start with the expected header");
  }
  AggregateCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw IoError("curve row has " + std::to_string(f.size()) + " fields");
    CurveRow row;
    row.iter = static_cast<int>(parse_double(f[0]));
    row.return_mean = parse_double(f[1]);
    row.return_ci = parse_double(f[2]);
    row.tracevar_mean = parse_double(f[3]);
    row.tracevar_ci = parse_double(f[4]);
    row.reuse_size_mean = parse_double(f[5]);
    row.walltime_s = parse_double(f[6]);
    curve.rows.push_back(row);
  }
  return curve;
}

void write_run_csv(const std::vector<IterationLog>& log, std::ostream& out) {
  out << kRunHeader << '\n';
  for (const auto& row : log) {
    // Full precision so re-aggregation reproduces the curve exactly.
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%zu,%.17g,%d,%.17g", row.iter,
                  row.mean_return, row.trace_var, row.reuse_size, row.wall_time_s,
                  row.epochs_run, row.kl);
    out << buf << '\n';
  }
}

std::vector<IterationLog> read_run_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRunHeader) {
    throw IoError("run log does not start with the expected header");
  }
  std::vector<IterationLog> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw IoError("run log row has " + std::to_string(f.size()) + " fields");
    IterationLog row;
    row.iter = static_cast<int>(parse_double(f[0]));
    row.mean_return = parse_double(f[1]);
    row.trace_var = parse_double(f[2]);
    row.reuse_size = static_cast<std::size_t>(parse_double(f[3]));
    row.wall_time_s = parse_double(f[4]);
    row.epochs_run = static_cast<int>(parse_double(f[5]));
    row.kl = parse_double(f[6]);
    log.push_back(row);
  }
  return log;
}

AggregateCurve load_curve(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  return read_curve_csv(in);
}

void save_curve(const AggregateCurve& curve, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  write_curve_csv(curve, out);
  if (!out) throw IoError("failed writing " + file.string());
}

AggregateCurve run_experiment(const ExperimentSpec& spec) {
  spdlog::info("running {} {} vrer={} c={} reps={}", spec.env, spec.algo,
               spec.agent.vrer ? "on" : "off", spec.agent.c, spec.macro_reps);
  auto runs = run_replications(spec);
  // Without wall time the run logs, like the curve, depend only on the seed.
  if (!spec.record_walltime) {
    for (auto& run : runs)
      for (auto& log : run) log.wall_time_s = 0.0;
  }
  auto curve = aggregate(runs, spec.record_walltime);
  if (!spec.out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(spec.out / "runs", ec);
    if (ec) throw IoError("cannot create " + (spec.out / "runs").string() + ": " + ec.message());
    for (std::size_t r = 0; r < runs.size(); ++r) {
      char name[32];
      std::snprintf(name, sizeof(name), "rep_%03zu.csv", r);
      std::ofstream out(spec.out / "runs" / name, std::ios::binary);
      if (!out) throw IoError("cannot write run log " + std::string(name));
      write_run_csv(runs[r], out);
    }
    save_curve(curve, spec.out / "curve.csv");
    spdlog::info("wrote {}", (spec.out / "curve.csv").string());
  }
  return curve;
}

AggregateCurve reaggregate(const std::filesystem::path& dir, bool record_walltime) {
  std::vector<std::vector<IterationLog>> runs;
  for (int r = 0;; ++r) {
    char name[32];
    std::snprintf(name, sizeof(name), "rep_%03d.csv", r);
    const auto file = dir / "runs" / name;
    if (!std::filesystem::exists(file)) break;
    std::ifstream in(file);
    runs.push_back(read_run_csv(in));
  }
  if (runs.empty()) throw IoError("no run logs under " + (dir / "runs").string());
  auto curve = aggregate(runs, record_walltime);
  save_curve(curve, dir / "curve.csv");
  return curve;
}

Comparison compare(const AggregateCurve& a, const AggregateCurve& b, double target) {
  if (a.rows.size() != b.rows.size()) {
    throw StructuralError("curves have different lengths (" + std::to_string(a.rows.size()) +
                          " vs " + std::to_string(b.rows.size()) + ")");
  }
  Comparison cmp;
  cmp.target = target;
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    const double d = a.rows[k].return_mean - b.rows[k].return_mean;
    cmp.mean_difference.push_back(d);
    cmp.auc_difference += d;
    if (!cmp.crossing_a && a.rows[k].return_mean >= target) cmp.crossing_a = a.rows[k].iter;
    if (!cmp.crossing_b && b.rows[k].return_mean >= target) cmp.crossing_b = b.rows[k].iter;
  }
  if (!cmp.mean_difference.empty()) cmp.final_difference = cmp.mean_difference.back();
  return cmp;
}

std::string format_comparison(const Comparison& cmp) {
  std::ostringstream out;
  auto crossing = [](const std::optional<int>& c) {
    return c ? std::to_string(*c) : std::string("never");
  };
  out << "target," << format_number(cmp.target) << '\n';
  out << "crossing_a," << crossing(cmp.crossing_a) << '\n';
  out << "crossing_b," << crossing(cmp.crossing_b) << '\n';
  out << "auc_difference," << format_number(cmp.auc_difference) << '\n';
  out << "final_difference," << format_number(cmp.final_difference) << '\n';
  out << "iter,mean_difference\n";
  for (std::size_t k = 0; k < cmp.mean_difference.size(); ++k) {
    out << (k + 1) << ',' << format_number(cmp.mean_difference[k]) << '\n';
  }
  return out.str();
}

std::string sweep_dir_name(double c) { return "c_" + format_number(c); }

std::vector<AggregateCurve> sweep_c(const ExperimentSpec& spec, const std::vector<double>& values) {
  if (values.empty()) throw UsageError("sweep needs at least one value of c");
  std::vector<AggregateCurve> curves;
  for (double c : values) {
    ExperimentSpec s = spec;
    s.agent.c = c;
    s.agent.vrer = true;
    if (!spec.out.empty()) s.out = spec.out / sweep_dir_name(c);
    curves.push_back(run_experiment(s));
  }
  return curves;
}

}  // namespace vrer
