#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "vrer/policy.hpp"

namespace vrer {

struct EnvState {
  Eigen::VectorXd observation;
  bool done = false;       // episode over, for either reason below
  bool terminal = false;   // absorbing failure/goal state: no bootstrap
  bool truncated = false;  // time limit reached: bootstrap continues
  int t = 0;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

/// Episodic environment. Instances are single-threaded state machines.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int observation_dim() const = 0;
  virtual PolicyKind action_kind() const = 0;
  virtual int action_count() const { return 0; }
  virtual double action_low() const { return 0.0; }
  virtual double action_high() const { return 0.0; }
  virtual int max_steps() const = 0;
  /// Fixed input scaling applied by the agents' networks.
  virtual Eigen::VectorXd observation_scale() const;

  virtual EnvState reset(std::mt19937_64& rng) = 0;
  /// Throws EpisodeFinishedError once the episode is done.
  virtual StepResult step(const Action& action) = 0;

  const EnvState& state() const { return state_; }

 protected:
  EnvState state_;
};

/// Cart-pole balancing, classic dynamics with semi-implicit Euler updates.
class CartPole final : public Environment {
 public:
  static constexpr double gravity = 9.8;
  static constexpr double mass_cart = 1.0;
  static constexpr double mass_pole = 0.1;
  static constexpr double half_length = 0.5;
  static constexpr double force_mag = 10.0;
  static constexpr double tau = 0.02;
  static constexpr double x_threshold = 2.4;
  static constexpr double theta_threshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;

  std::string name() const override { return "cartpole"; }
  int observation_dim() const override { return 4; }
  PolicyKind action_kind() const override { return PolicyKind::categorical; }
  int action_count() const override { return 2; }
  int max_steps() const override { return 500; }

  EnvState reset(std::mt19937_64& rng) override;
  StepResult step(const Action& action) override;

  /// Overwrites the physical state (x, x_dot, theta, theta_dot).
  void set_physical_state(const std::array<double, 4>& s);

 private:
  std::array<double, 4> s_{};
};

/// Two-link underactuated pendulum, book dynamics with RK4 integration.
class Acrobot final : public Environment {
 public:
  static constexpr double dt = 0.2;
  static constexpr double link_length_1 = 1.0;
  static constexpr double link_mass_1 = 1.0;
  static constexpr double link_mass_2 = 1.0;
  static constexpr double link_com_1 = 0.5;
  static constexpr double link_com_2 = 0.5;
  static constexpr double link_moi = 1.0;
  static constexpr double max_vel_1 = 4.0 * 3.14159265358979323846;
  static constexpr double max_vel_2 = 9.0 * 3.14159265358979323846;

  std::string name() const override { return "acrobot"; }
  int observation_dim() const override { return 6; }
  PolicyKind action_kind() const override { return PolicyKind::categorical; }
  int action_count() const override { return 3; }
  int max_steps() const override { return 500; }
  Eigen::VectorXd observation_scale() const override;

  EnvState reset(std::mt19937_64& rng) override;
  StepResult step(const Action& action) override;

  void set_physical_state(const std::array<double, 4>& s);
  /// Time derivative of (theta1, theta2, dtheta1, dtheta2) under `torque`.
  static std::array<double, 4> derivatives(const std::array<double, 4>& s, double torque);

 private:
  Eigen::VectorXd observe() const;
  std::array<double, 4> s_{};
};

/// Kinetic constants of the fed-batch Monod model.
struct FermentationParams {
  double mu_max = 0.2;        // 1/h
  double k_s = 5.0;           // g/L
  double k_n = 0.1;           // g/L
  double yield = 0.5;         // g cells / g substrate
  double maintenance = 0.02;  // g substrate / g cells / h
  double n_yield = 0.05;      // g nitrogen / g cells
  double citrate_rate = 0.01; // g citrate / g cells / h
  double feed_substrate = 100.0;  // g/L in the feed
  double max_feed = 0.05;         // L/h
  double epoch_hours = 2.0;
  int inner_steps = 20;
  int horizon = 50;
  double setpoint = 20.0;  // g/L
  // Nominal initial condition.
  double x0 = 1.0, c0 = 0.0, s0 = 30.0, n0 = 1.5, v0 = 1.0;
  double reset_noise = 0.05;
};

/// Concentrations and volume of the bioreactor.
struct ReactorState {
  double cells = 0.0;      // lipid-free cell mass X_f, g/L
  double citrate = 0.0;    // C, g/L
  double substrate = 0.0;  // S, g/L
  double nitrogen = 0.0;   // N, g/L
  double volume = 0.0;     // V, L
};

/// Fed-batch substrate setpoint control. Observation order:
/// (X_f, C, S, N, V, t, dX_f, dC, dS) where the rates are the reaction
/// rates at the start of the decision epoch. The reward of a step is
/// -(S - setpoint)^2 evaluated at the state the step ends in.
class Fermentation final : public Environment {
 public:
  explicit Fermentation(FermentationParams params = {}) : p_(params) {}

  std::string name() const override { return "fermentation"; }
  int observation_dim() const override { return 9; }
  PolicyKind action_kind() const override { return PolicyKind::truncated_gaussian; }
  double action_low() const override { return 0.0; }
  double action_high() const override { return p_.max_feed; }
  int max_steps() const override { return p_.horizon; }
  Eigen::VectorXd observation_scale() const override;

  EnvState reset(std::mt19937_64& rng) override;
  StepResult step(const Action& action) override;

  const FermentationParams& params() const { return p_; }
  const ReactorState& reactor() const { return x_; }
  void set_reactor(const ReactorState& x, double hours);

  /// Full right-hand side of the model under feed rate `feed` (L/h).
  ReactorState derivatives(const ReactorState& x, double feed) const;
  double reward_for(double substrate) const;

 private:
  Eigen::VectorXd observe() const;
  FermentationParams p_;
  ReactorState x_;
  double hours_ = 0.0;
};

/// "cartpole" | "acrobot" | "fermentation"; anything else is a UsageError.
std::unique_ptr<Environment> make_env(std::string_view name);

}  // namespace vrer
