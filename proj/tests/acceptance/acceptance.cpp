// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--jobs N] [--out DIR]
//
// --only selects criteria for a partial run. The exit status is non-zero if
// any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tabular_mdp.hpp"
#include "vrer/agents.hpp"
#include "vrer/estimators.hpp"
#include "vrer/harness.hpp"
#include "vrer/policy.hpp"

using namespace vrer;
using vrer::testing::one_hot;
using vrer::testing::TabularMdp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string fmt(const char* format, Args... args) {
  char buf[1024];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// Per-coordinate running mean and sum of squared deviations.
struct CoordinateStats {
  explicit CoordinateStats(Eigen::Index dim)
      : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& x) {
    ++n;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2.array() += delta.array() * (x - mean).array();
  }
  double standard_error(Eigen::Index i) const {
    const double k = static_cast<double>(n);
    return std::sqrt(m2(i) / (k - 1.0) / k);
  }
  std::size_t n = 0;
  Eigen::VectorXd mean, m2;
};

// ---------------------------------------------------------------------------
// Enumerable MDP shared by criteria 1-3.
//
// Every policy is a tabular softmax model. Policy i's samples are drawn
// independently: s from its normalized discounted occupancy d^i, then a from
// pi_i(.|s). The replay store caches log(d^i(s) pi_i(a|s)), so the library's
// ILR and MLR estimators form exact occupancy-times-action ratios.

struct Behavior {
  ActorCritic model;
  TabularMdp::Table pi;
  Eigen::Vector2d d;
  double density(int s, int a) const { return d(s) * pi(s, a); }
};

struct Setup {
  TabularMdp mdp;
  std::vector<Behavior> policies;  // snapshot index i is policies[i - 1]; the last is the target
  TabularMdp::Table advantage;     // of the target
  Eigen::VectorXd exact;           // exact gradient of the target

  const Behavior& policy(int index) const { return policies[static_cast<std::size_t>(index - 1)]; }
  const Behavior& target() const { return policies.back(); }
  int target_index() const { return static_cast<int>(policies.size()); }
};

Behavior behavior_from(const TabularMdp& mdp, const ActorCritic& model) {
  Behavior b{model, vrer::testing::policy_table(model), {}};
  b.d = mdp.state_distribution(b.pi);
  return b;
}

// The target plus one behavior per noise scale: the target's actor
// parameters shifted by Gaussian noise of that scale.
Setup make_setup(const std::vector<double>& noise_scales, std::uint64_t seed) {
  Setup s;
  std::mt19937_64 rng(seed);
  const ActorCritic target = vrer::testing::tabular_model(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double scale : noise_scales) {
    Eigen::VectorXd p = target.actor_parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += scale * g(rng);
    ActorCritic m = target;
    m.set_parameters(p, target.critic_parameters());
    s.policies.push_back(behavior_from(s.mdp, m));
  }
  s.policies.push_back(behavior_from(s.mdp, target));
  s.advantage = s.mdp.advantages(s.target().pi);
  s.exact = vrer::testing::exact_gradient(s.mdp, s.target().model);
  return s;
}

int state_of(const Transition& t) { return t.s(0) > 0.5 ? 0 : 1; }
int action_of(const Transition& t) { return static_cast<int>(t.a.value); }

LogLikelihoodFn joint_likelihood(const Setup& s) {
  return [&s](const PolicySnapshot& snap, std::span<const Transition> ts) {
    const auto& b = s.policy(snap.index);
    std::vector<double> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(std::log(b.density(state_of(t), action_of(t))));
    return out;
  };
}

std::vector<Transition> draw(const Setup& s, int index, int n, std::mt19937_64& rng) {
  const auto& b = s.policy(index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const int st = u(rng) < b.d(0) ? 0 : 1;
    const int a = u(rng) < b.pi(st, 0) ? 0 : 1;
    Transition t;
    t.s = one_hot(st);
    t.s_next = t.s;
    t.a = Action::discrete(a);
    t.policy_index = index;
    out.push_back(std::move(t));
  }
  return out;
}

// One independent batch of n samples from each listed policy (ascending).
ReplayStore fill_store(const Setup& s, const std::vector<int>& indices, int n,
                       std::mt19937_64& rng) {
  ReplayStore store;
  const auto lik = joint_likelihood(s);
  for (int i : indices) store.append_batch(draw(s, i, n, rng));
  for (int i : indices) {
    const auto& m = s.policy(i).model;
    store.extend_cache(PolicySnapshot{i, m.actor_parameters(), m.critic_parameters()}, lik);
  }
  return store;
}

std::vector<double> advantages(const Setup& s, const ReplayStore& store, const ReuseSet& reuse) {
  std::vector<double> out;
  for (const auto& ref : store.pool(reuse)) {
    const auto& t = store.transition(ref);
    out.push_back(s.advantage(state_of(t), action_of(t)));
  }
  return out;
}

// Exact trace variance of one ILR sample drawn from `sampler`: the summand
// f * A * score with f = d^k pi_k / (d^i pi_i).
double exact_single_trace_var(const Setup& s, const Behavior& sampler) {
  const auto& k = s.target();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(s.exact.size());
  double second = 0.0;
  for (int st = 0; st < 2; ++st) {
    for (int a = 0; a < 2; ++a) {
      const double p = sampler.density(st, a);
      const Eigen::VectorXd x = k.density(st, a) / p * s.advantage(st, a) *
                                k.model.score(one_hot(st), Action::discrete(a));
      mean += p * x;
      second += p * x.squaredNorm();
    }
  }
  return second - mean.squaredNorm();
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const Setup s = make_setup({0.8, 1.5}, 101);
  const ReuseSet reuse{1, 2, 3};
  const int batches = 100000, n = 4;
  std::mt19937_64 rng(1);
  CoordinateStats stats(s.exact.size());
  for (int b = 0; b < batches; ++b) {
    const auto store = fill_store(s, {1, 2, 3}, n, rng);
    stats.add(mlr_estimate(s.target().model, 3, store, reuse, advantages(s, store, reuse)).grad);
  }
  double worst = 0.0;
  int checked = 0;
  for (Eigen::Index i = 0; i < s.exact.size(); ++i) {
    const double se = stats.standard_error(i);
    const double gap = std::abs(stats.mean(i) - s.exact(i));
    if (se == 0.0) {
      // Critic coordinates: both sides are identically zero.
      if (gap > 1e-12) return {false, fmt("coordinate %ld: zero spread but gap %.3g", long(i), gap)};
      continue;
    }
    worst = std::max(worst, gap / se);
    ++checked;
  }
  return {worst <= 3.0,
          fmt("%d batches of 3 x %d samples, %d coordinates, max |mean - exact| = %.2f SE (limit 3)",
              batches, n, checked, worst)};
}

Outcome criterion_2() {
  const Setup s = make_setup({0.8, 1.5}, 101);
  const ReuseSet reuse{1, 2, 3};
  const int reps = 10000, n = 4;
  std::mt19937_64 rng(2);
  // Both estimators are unbiased, so E||X - g||^2 is the trace variance.
  // D_r = ||MLR_r - g||^2 - ||ILR_r - g||^2 is a paired sample of the gap.
  double sum_d = 0.0, sum_d2 = 0.0, sum_mlr = 0.0, sum_ilr = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto store = fill_store(s, {1, 2, 3}, n, rng);
    const auto adv = advantages(s, store, reuse);
    const Eigen::VectorXd mlr = mlr_estimate(s.target().model, 3, store, reuse, adv).grad;
    Eigen::VectorXd ilr = Eigen::VectorXd::Zero(s.exact.size());
    for (int i = 1; i <= 3; ++i) {
      const std::vector<double> part(adv.begin() + (i - 1) * n, adv.begin() + i * n);
      ilr += ilr_estimate(s.target().model, 3, store, i, part).grad / 3.0;
    }
    const double a = (mlr - s.exact).squaredNorm(), b = (ilr - s.exact).squaredNorm();
    sum_mlr += a;
    sum_ilr += b;
    sum_d += a - b;
    sum_d2 += (a - b) * (a - b);
  }
  const double m = sum_d / reps;
  const double sd = std::sqrt((sum_d2 - reps * m * m) / (reps - 1.0));
  const double z = -m / (sd / std::sqrt(static_cast<double>(reps)));
  return {z > 2.326,
          fmt("%d replications: TrVar(MLR) = %.4g, TrVar(avg ILR) = %.4g, one-sided z = %.1f (need > 2.326)",
              reps, sum_mlr / reps, sum_ilr / reps, z)};
}

Outcome criterion_3() {
  // Three behaviors close to the target and two far from it.
  const Setup s = make_setup({0.15, 0.25, 0.35, 2.5, 4.0}, 303);
  const int k = s.target_index();
  const int n = 8;
  const double c = 1.5;
  const double pg = exact_single_trace_var(s, s.target()) / n;
  std::map<int, double> ilr;
  for (int i = 1; i < k; ++i) ilr[i] = exact_single_trace_var(s, s.policy(i)) / n;
  const ReuseSet reuse = select_by_trace_variance(k, pg, ilr, c);
  const double bound = c / static_cast<double>(reuse.size()) * pg;

  std::mt19937_64 rng(3);
  const int reps = 40000;
  double sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto store = fill_store(s, reuse.indices(), n, rng);
    const Eigen::VectorXd g =
        mlr_estimate(s.target().model, k, store, reuse, advantages(s, store, reuse)).grad;
    sum += (g - s.exact).squaredNorm();
  }
  const double measured = sum / reps;
  std::string kept;
  for (int i : reuse) kept += (kept.empty() ? "" : ",") + std::to_string(i);
  return {measured <= 1.1 * bound && reuse.size() > 1,
          fmt("|U| = %zu of %d (kept %s), TrVar(MLR) = %.4g vs (c/|U|) TrVar(PG) = %.4g, ratio %.3f (limit 1.1)",
              reuse.size(), k, kept.c_str(), measured, bound, measured / bound)};
}

Outcome criterion_4() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> set_size(1, 20);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const long draws = 1000000;
  long violations = 0;
  double largest = 0.0;
  std::vector<double> comps;
  for (long d = 0; d < draws; ++d) {
    const int m = set_size(rng);
    comps.assign(static_cast<std::size_t>(m), 0.0);
    if (d % 2 == 0) {
      // Categorical policies over up to 6 actions, logits up to +-60.
      const int n_actions = 2 + static_cast<int>(rng() % 5);
      const int action = static_cast<int>(rng() % static_cast<unsigned>(n_actions));
      const double spread = 60.0 * unit(rng);
      for (auto& lp : comps) {
        std::vector<double> logits(static_cast<std::size_t>(n_actions));
        for (auto& l : logits) l = spread * normal(rng);
        const double top = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - top);
        lp = logits[static_cast<std::size_t>(action)] - top - std::log(z);
      }
    } else {
      // Clamped Gaussians on [0, 1]; actions include both bounds.
      const double u = unit(rng);
      const double action = u < 0.1 ? 0.0 : (u < 0.2 ? 1.0 : unit(rng));
      for (auto& lp : comps) {
        lp = clamped_gaussian_score(action, 3.0 * normal(rng), -6.0 + 7.0 * unit(rng), 0.0, 1.0)
                 .log_prob;
      }
    }
    const auto target = static_cast<std::size_t>(rng() % static_cast<unsigned>(m));
    const double f = mixture_ratio(comps[target], comps);
    largest = std::max(largest, f / m);
    if (!(f <= static_cast<double>(m)) || !(f > 0.0)) ++violations;
  }
  return {violations == 0, fmt("%ld draws, %ld violations, max f/|U| = %.6f", draws, violations, largest)};
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

Outcome criterion_5() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int cases = 200;
  const double h = 1e-6;
  double worst_score = 0.0, worst_value = 0.0;
  for (int c = 0; c < cases; ++c) {
    ModelShape shape;
    shape.obs_dim = 2 + c % 4;
    if (c % 2 == 0) {
      shape.trunk_hidden = {5};
    } else {
      shape.actor_hidden = {4, 3};
      shape.critic_hidden = {4, 3};
    }
    shape.hidden_activation = c % 3 == 0 ? Activation::relu : Activation::tanh;
    const bool gaussian = c % 4 >= 2;
    shape.kind = gaussian ? PolicyKind::truncated_gaussian : PolicyKind::categorical;
    shape.n_actions = 2 + c % 3;
    shape.action_low = -1.0;
    shape.action_high = 2.0;
    ActorCritic model(shape, rng);
    Eigen::VectorXd params = model.parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) += 0.3 * normal(rng);
    model.set_parameters(params);

    Eigen::VectorXd state(shape.obs_dim);
    for (Eigen::Index i = 0; i < state.size(); ++i) state(i) = normal(rng);
    Action action;
    if (gaussian) {
      const int where = c % 3;  // interior, lower bound, upper bound
      action = Action::continuous(where == 0 ? -1.0 + 3.0 * unit(rng) : (where == 1 ? -1.0 : 2.0));
    } else {
      action = Action::discrete(static_cast<int>(rng() % static_cast<unsigned>(shape.n_actions)));
    }

    const Eigen::VectorXd score = model.score(state, action);
    const Eigen::VectorXd value = model.value_gradient(state);
    Eigen::VectorXd fd_score(params.size()), fd_value(params.size());
    ActorCritic probe = model;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      Eigen::VectorXd p = params;
      p(i) += h;
      probe.set_parameters(p);
      const double lp_up = probe.log_prob(state, action), v_up = probe.value(state);
      p(i) -= 2.0 * h;
      probe.set_parameters(p);
      fd_score(i) = (lp_up - probe.log_prob(state, action)) / (2.0 * h);
      fd_value(i) = (v_up - probe.value(state)) / (2.0 * h);
    }
    worst_score = std::max(worst_score, relative_error(score, fd_score));
    worst_value = std::max(worst_value, relative_error(value, fd_value));
  }
  return {worst_score <= 1e-4 && worst_value <= 1e-4,
          fmt("%d cases, max relative error: score %.2e, critic %.2e (limit 1e-4)", cases,
              worst_score, worst_value)};
}

// ---------------------------------------------------------------------------
// Training criteria.

constexpr int kIterations = 100;
constexpr int kReps = 30;
constexpr std::size_t kSnapshotCap = 10;
constexpr double kTarget = 400.0;

struct Runs {
  int jobs = 1;
  std::filesystem::path out;
  std::map<std::string, AggregateCurve> cache;

  const AggregateCurve& get(const std::string& env, const std::string& algo, bool vrer, double c) {
    const std::string name = env + "_" + algo + (vrer ? "_vrer_" + sweep_dir_name(c) : "_base");
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    ExperimentSpec spec;
    spec.env = env;
    spec.algo = algo;
    spec.agent = default_agent_config(env, algo);
    spec.agent.iterations = kIterations;
    spec.agent.vrer = vrer;
    spec.agent.c = c;
    spec.agent.max_snapshots = kSnapshotCap;
    spec.macro_reps = kReps;
    spec.seed = 1000;
    spec.jobs = jobs;
    spec.record_walltime = false;
    if (!out.empty()) spec.out = out / name;
    const auto start = std::chrono::steady_clock::now();
    auto curve = run_experiment(spec);
    spdlog::info("{}: {:.0f} s", name,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return cache.emplace(name, std::move(curve)).first->second;
  }
};

std::string crossing_text(const std::optional<int>& c) {
  return c ? std::to_string(*c) : std::string("never");
}

// Earlier crossing: VRER crosses and the baseline either crosses later or
// never does.
bool earlier(const Comparison& cmp) {
  return cmp.crossing_a && (!cmp.crossing_b || *cmp.crossing_a < *cmp.crossing_b);
}

Outcome criterion_6(Runs& runs) {
  bool pass = true;
  std::string detail;
  for (const std::string algo : {"ac", "ppo"}) {
    const auto& base = runs.get("cartpole", algo, false, 1.5);
    const auto& vrer = runs.get("cartpole", algo, true, 1.5);
    const auto cmp = compare(vrer, base, kTarget);
    const double fv = vrer.rows.back().return_mean, fb = base.rows.back().return_mean;
    const bool ok = earlier(cmp) && fv >= fb;
    pass = pass && ok;
    detail += fmt("%s%s: crossing VRER %s vs base %s, final %.1f vs %.1f", detail.empty() ? "" : "; ",
                  algo.c_str(), crossing_text(cmp.crossing_a).c_str(),
                  crossing_text(cmp.crossing_b).c_str(), fv, fb);
  }
  return {pass, detail};
}

double fraction_lower(const AggregateCurve& vrer, const AggregateCurve& base, int warmup) {
  int lower = 0, total = 0;
  for (std::size_t i = 0; i < vrer.rows.size(); ++i) {
    if (vrer.rows[i].iter <= warmup) continue;
    ++total;
    if (vrer.rows[i].tracevar_mean < base.rows[i].tracevar_mean) ++lower;
  }
  return total == 0 ? 0.0 : static_cast<double>(lower) / total;
}

Outcome criterion_7(Runs& runs) {
  const double ac = fraction_lower(runs.get("cartpole", "ac", true, 1.5),
                                   runs.get("cartpole", "ac", false, 1.5), 10);
  const double ppo = fraction_lower(runs.get("cartpole", "ppo", true, 1.5),
                                    runs.get("cartpole", "ppo", false, 1.5), 10);
  return {ac >= 0.7,
          fmt("AC: VRER Tr(Var) lower in %.0f%% of iterations 11-%d (need 70%%); PPO: %.0f%%",
              100.0 * ac, kIterations, 100.0 * ppo)};
}

Outcome criterion_8(Runs& runs) {
  const std::vector<double> values{1.2, 1.5, 2.0, 4.0};
  std::vector<std::pair<double, double>> finals;
  std::string detail;
  for (double c : values) {
    const auto& row = runs.get("cartpole", "ac", true, c).rows.back();
    finals.emplace_back(row.return_mean, row.return_ci);
    detail += fmt("%sc=%g: %.1f +- %.1f", detail.empty() ? "" : ", ", c, row.return_mean, row.return_ci);
  }
  bool pass = true;
  for (std::size_t i = 0; i < finals.size(); ++i)
    for (std::size_t j = i + 1; j < finals.size(); ++j)
      pass = pass && std::abs(finals[i].first - finals[j].first) <= finals[i].second + finals[j].second;
  return {pass, detail + " (pairwise 95% bands overlap)"};
}

Outcome criterion_9(Runs& runs) {
  const auto& base = runs.get("fermentation", "ac", false, 1.5);
  const auto& vrer = runs.get("fermentation", "ac", true, 1.5);
  auto averages = [](const AggregateCurve& c) {
    double m = 0.0, ci = 0.0;
    for (const auto& r : c.rows) {
      m += r.return_mean;
      ci += r.return_ci;
    }
    const double n = static_cast<double>(c.rows.size());
    return std::pair{m / n, ci / n};
  };
  const auto [mv, cv] = averages(vrer);
  const auto [mb, cb] = averages(base);
  return {mv > mb && cb > cv,
          fmt("mean return VRER %.1f vs AC %.1f; mean 95%% half-width VRER %.1f vs AC %.1f", mv, mb,
              cv, cb)};
}

Outcome criterion_10() {
  CartPole env;
  std::mt19937_64 rng(10);
  ActorCritic model = make_model(env, true, rng);
  ActorCritic scratch = model;
  RolloutCollector collector(env, rng);
  std::uint64_t calls = 0;
  const LogLikelihoodFn lik = [&](const PolicySnapshot& snap, std::span<const Transition> ts) {
    scratch.set_parameters(snap.actor_params, snap.critic_params);
    std::vector<double> out;
    for (const auto& t : ts) {
      ++calls;
      out.push_back(scratch.log_prob(t.s, t.a));
    }
    return out;
  };
  ReplayStore store;
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::size_t d = 0;
  int mismatches = 0;
  const int iterations = 25;
  for (int k = 1; k <= iterations; ++k) {
    const int n = 20 + (7 * k) % 31;
    store.append_batch(collector.collect(model, k, n, rng));
    d += static_cast<std::size_t>(n);
    const auto before = calls;
    store.extend_cache(PolicySnapshot{k, model.actor_parameters(), model.critic_parameters()}, lik);
    const auto expected = d + static_cast<std::size_t>(k - 1) * static_cast<std::size_t>(n);
    if (calls - before != expected || store.evaluation_count() != calls) ++mismatches;
    // Move the policy so every snapshot is distinct.
    Eigen::VectorXd p = model.parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += jitter(rng);
    model.set_parameters(p);
  }
  return {mismatches == 0,
          fmt("%d iterations with varying |T_k|, %d mismatches, %llu evaluations in total", iterations,
              mismatches, static_cast<unsigned long long>(calls))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--jobs", jobs, "concurrent replications");
  app.add_option("--out", out, "directory for the training curves");
  CLI11_PARSE(app, argc, argv);

  Runs runs;
  runs.jobs = jobs;
  runs.out = out;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"estimator unbiasedness", criterion_1},
      {"variance ordering", criterion_2},
      {"selection-rule bound", criterion_3},
      {"ratio bound", criterion_4},
      {"gradient correctness", criterion_5},
      {"convergence", [&] { return criterion_6(runs); }},
      {"variance reduction", [&] { return criterion_7(runs); }},
      {"c-sensitivity", [&] { return criterion_8(runs); }},
      {"fermentation", [&] { return criterion_9(runs); }},
      {"cache efficiency", criterion_10},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d (%s): %s  %s [%.1f s]\n", id, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
