#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "poseprior/numeric.hpp"

namespace poseprior {

/// Per-step noise tables for t = 1..T. Index 0 of alphabar is the clean sample.
class DiffusionSchedule {
 public:
  DiffusionSchedule(std::vector<double> beta, double offset, std::string name);

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  double offset() const { return offset_; }
  const std::string& name() const { return name_; }

  double beta(int t) const { return beta_.at(checked(t, 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alphabar(int t) const { return alphabar_.at(checked(t, 0)); }

 private:
  int checked(int t, int lo) const;

  std::vector<double> beta_;      // beta_[0] unused
  std::vector<double> alphabar_;  // alphabar_[0] == 1
  double offset_;
  std::string name_;
};

inline constexpr double kMaxBeta = 0.999;

/// Cosine schedule: alphabar(t) = f(t)/f(0), f(t) = cos^2(((t/T + offset)/(1 + offset)) * pi/2).
DiffusionSchedule cosine_schedule(int T, double offset);

/// sqrt(alphabar_t) * x0 + sqrt(1 - alphabar_t) * eps
Eigen::VectorXd forward_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& sched);

/// Inverts forward_sample given a noise estimate.
Eigen::VectorXd estimate_x0(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_pred, int t,
                            const DiffusionSchedule& sched);

enum class RenoiseVariant {
  // x_{t-1} ~ q(x_{t-1} | x0'): sqrt(alphabar_{t-1}) x0' + sqrt(1 - alphabar_{t-1}) eps
  variance_preserving,
  // sqrt(alphabar_t) x0' + (1 - alphabar_t) eps, noise scaled linearly rather than by the square root
  linear_noise,
};

/// Draw x_{t_target} ~ q(. | x0). t_target == 0 returns x0 without consuming randomness.
Eigen::VectorXd renoise(const Eigen::VectorXd& x0, int t_target, Rng& rng, const DiffusionSchedule& sched);

/// One reverse-step renoise from step t to t-1 under the chosen variant.
Eigen::VectorXd renoise_step(const Eigen::VectorXd& x0, int t, Rng& rng, const DiffusionSchedule& sched,
                             RenoiseVariant variant);

}  // namespace poseprior
