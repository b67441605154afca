#include "vrer/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

constexpr double pi = std::numbers::pi;

double wrap_angle(double x) {
  const double width = 2.0 * pi;
  while (x > pi) x -= width;
  while (x < -pi) x += width;
  return x;
}

void require_running(const EnvState& state) {
  if (state.done) throw EpisodeFinishedError("step called on a finished episode");
}

}  // namespace

Eigen::VectorXd Environment::observation_scale() const {
  return Eigen::VectorXd::Ones(observation_dim());
}

// ---------------------------------------------------------------- CartPole

EnvState CartPole::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-0.05, 0.05);
  for (auto& v : s_) v = unif(rng);
  state_ = EnvState{};
  state_.observation = Eigen::Map<const Eigen::Vector4d>(s_.data());
  return state_;
}

void CartPole::set_physical_state(const std::array<double, 4>& s) {
  s_ = s;
  state_ = EnvState{};
  state_.observation = Eigen::Map<const Eigen::Vector4d>(s_.data());
}

StepResult CartPole::step(const Action& action) {
  require_running(state_);
  const int a = action.index();
  if (a != 0 && a != 1) throw StructuralError("cartpole action must be 0 or 1");

  auto& [x, x_dot, theta, theta_dot] = s_;
  const double force = a == 1 ? force_mag : -force_mag;
  const double total_mass = mass_cart + mass_pole;
  const double pole_mass_length = mass_pole * half_length;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (gravity * sin_t - cos_t * temp) /
      (half_length * (4.0 / 3.0 - mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  x_dot += tau * x_acc;
  x += tau * x_dot;
  theta_dot += tau * theta_acc;
  theta += tau * theta_dot;

  state_.t += 1;
  state_.observation = Eigen::Map<const Eigen::Vector4d>(s_.data());
  state_.terminal = x < -x_threshold || x > x_threshold || theta < -theta_threshold ||
                    theta > theta_threshold;
  state_.truncated = !state_.terminal && state_.t >= max_steps();
  state_.done = state_.terminal || state_.truncated;
  return StepResult{state_, 1.0};
}

// ----------------------------------------------------------------- Acrobot

Eigen::VectorXd Acrobot::observation_scale() const {
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(6);
  scale(4) = 1.0 / max_vel_1;
  scale(5) = 1.0 / max_vel_2;
  return scale;
}

Eigen::VectorXd Acrobot::observe() const {
  Eigen::VectorXd obs(6);
  obs << std::cos(s_[0]), std::sin(s_[0]), std::cos(s_[1]), std::sin(s_[1]), s_[2], s_[3];
  return obs;
}

EnvState Acrobot::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-0.1, 0.1);
  for (auto& v : s_) v = unif(rng);
  state_ = EnvState{};
  state_.observation = observe();
  return state_;
}

void Acrobot::set_physical_state(const std::array<double, 4>& s) {
  s_ = s;
  state_ = EnvState{};
  state_.observation = observe();
}

std::array<double, 4> Acrobot::derivatives(const std::array<double, 4>& s, double torque) {
  constexpr double g = 9.8;
  const double m1 = link_mass_1, m2 = link_mass_2;
  const double l1 = link_length_1;
  const double lc1 = link_com_1, lc2 = link_com_2;
  const double i1 = link_moi, i2 = link_moi;
  const auto [theta1, theta2, dtheta1, dtheta2] = s;

  const double d1 =
      m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - pi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - pi / 2.0) + phi2;
  const double ddtheta2 =
      (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

StepResult Acrobot::step(const Action& action) {
  require_running(state_);
  const int a = action.index();
  if (a < 0 || a > 2) throw StructuralError("acrobot action must be 0, 1 or 2");
  const double torque = static_cast<double>(a - 1);

  auto add = [](const std::array<double, 4>& x, const std::array<double, 4>& k, double h) {
    std::array<double, 4> out{};
    for (int i = 0; i < 4; ++i) out[i] = x[i] + h * k[i];
    return out;
  };
  const auto k1 = derivatives(s_, torque);
  const auto k2 = derivatives(add(s_, k1, dt / 2.0), torque);
  const auto k3 = derivatives(add(s_, k2, dt / 2.0), torque);
  const auto k4 = derivatives(add(s_, k3, dt), torque);
  for (int i = 0; i < 4; ++i) s_[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

  s_[0] = wrap_angle(s_[0]);
  s_[1] = wrap_angle(s_[1]);
  s_[2] = std::clamp(s_[2], -max_vel_1, max_vel_1);
  s_[3] = std::clamp(s_[3], -max_vel_2, max_vel_2);

  state_.t += 1;
  state_.observation = observe();
  state_.terminal = -std::cos(s_[0]) - std::cos(s_[1] + s_[0]) > 1.0;
  state_.truncated = !state_.terminal && state_.t >= max_steps();
  state_.done = state_.terminal || state_.truncated;
  return StepResult{state_, state_.terminal ? 0.0 : -1.0};
}

// ------------------------------------------------------------ Fermentation

Eigen::VectorXd Fermentation::observation_scale() const {
  Eigen::VectorXd scale(9);
  scale << 0.1, 1.0, 0.05, 1.0, 0.5, 0.01, 1.0, 10.0, 0.2;
  return scale;
}

ReactorState Fermentation::derivatives(const ReactorState& x, double feed) const {
  const double growth = p_.mu_max * (x.substrate / (p_.k_s + x.substrate)) *
                        (x.nitrogen / (p_.k_n + x.nitrogen));
  const double dilution = feed / x.volume;
  ReactorState d;
  d.cells = growth * x.cells;
  d.citrate = p_.citrate_rate * x.cells;
  d.substrate = -(1.0 / p_.yield) * growth * x.cells - p_.maintenance * x.cells +
                dilution * p_.feed_substrate - x.substrate * dilution;
  d.nitrogen = -p_.n_yield * growth * x.cells - x.nitrogen * dilution;
  d.volume = feed;
  return d;
}

double Fermentation::reward_for(double substrate) const {
  const double e = substrate - p_.setpoint;
  return -e * e;
}

Eigen::VectorXd Fermentation::observe() const {
  const ReactorState rates = derivatives(x_, 0.0);
  Eigen::VectorXd obs(9);
  obs << x_.cells, x_.citrate, x_.substrate, x_.nitrogen, x_.volume, hours_, rates.cells,
      rates.citrate, rates.substrate;
  return obs;
}

EnvState Fermentation::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(1.0 - p_.reset_noise, 1.0 + p_.reset_noise);
  x_.cells = p_.x0 * unif(rng);
  x_.citrate = p_.c0 * unif(rng);
  x_.substrate = p_.s0 * unif(rng);
  x_.nitrogen = p_.n0 * unif(rng);
  x_.volume = p_.v0 * unif(rng);
  hours_ = 0.0;
  state_ = EnvState{};
  state_.observation = observe();
  return state_;
}

void Fermentation::set_reactor(const ReactorState& x, double hours) {
  x_ = x;
  hours_ = hours;
  state_ = EnvState{};
  state_.t = static_cast<int>(std::lround(hours / p_.epoch_hours));
  state_.observation = observe();
}

StepResult Fermentation::step(const Action& action) {
  require_running(state_);
  if (!std::isfinite(action.value)) throw StructuralError("feed rate must be finite");
  const double feed = std::clamp(action.value, 0.0, p_.max_feed);
  const double h = p_.epoch_hours / p_.inner_steps;

  auto axpy = [](const ReactorState& x, const ReactorState& k, double a) {
    return ReactorState{x.cells + a * k.cells, x.citrate + a * k.citrate,
                        x.substrate + a * k.substrate, x.nitrogen + a * k.nitrogen,
                        x.volume + a * k.volume};
  };
  for (int i = 0; i < p_.inner_steps; ++i) {
    const auto k1 = derivatives(x_, feed);
    const auto k2 = derivatives(axpy(x_, k1, h / 2.0), feed);
    const auto k3 = derivatives(axpy(x_, k2, h / 2.0), feed);
    const auto k4 = derivatives(axpy(x_, k3, h), feed);
    ReactorState next = x_;
    next.cells += h / 6.0 * (k1.cells + 2.0 * k2.cells + 2.0 * k3.cells + k4.cells);
    next.citrate += h / 6.0 * (k1.citrate + 2.0 * k2.citrate + 2.0 * k3.citrate + k4.citrate);
    next.substrate +=
        h / 6.0 * (k1.substrate + 2.0 * k2.substrate + 2.0 * k3.substrate + k4.substrate);
    next.nitrogen +=
        h / 6.0 * (k1.nitrogen + 2.0 * k2.nitrogen + 2.0 * k3.nitrogen + k4.nitrogen);
    next.volume += h / 6.0 * (k1.volume + 2.0 * k2.volume + 2.0 * k3.volume + k4.volume);
    // RK4 can overshoot below zero once a nutrient is exhausted.
    next.cells = std::max(next.cells, 0.0);
    next.citrate = std::max(next.citrate, 0.0);
    next.substrate = std::max(next.substrate, 0.0);
    next.nitrogen = std::max(next.nitrogen, 0.0);
    x_ = next;
  }
  hours_ += p_.epoch_hours;

  state_.t += 1;
  state_.observation = observe();
  // Harvest ends the batch: nothing follows the last epoch, so it is terminal
  // rather than a time-limit cut.
  state_.terminal = state_.t >= max_steps();
  state_.truncated = false;
  state_.done = state_.terminal;
  return StepResult{state_, reward_for(x_.substrate)};
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "cartpole") return std::make_unique<CartPole>();
  if (name == "acrobot") return std::make_unique<Acrobot>();
  if (name == "fermentation") return std::make_unique<Fermentation>();
  throw UsageError("unknown environment '" + std::string(name) +
                   "' (expected cartpole, acrobot or fermentation)");
}

}  // namespace vrer
