#include "poseprior/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace poseprior {

DiffusionSchedule::DiffusionSchedule(std::vector<double> beta, double offset, std::string name)
    : beta_(std::move(beta)), offset_(offset), name_(std::move(name)) {
  if (beta_.size() < 2) throw ArgumentError("DiffusionSchedule: need at least one step");
  alphabar_.assign(beta_.size(), 1.0);
  for (std::size_t t = 1; t < beta_.size(); ++t) {
    if (!(beta_[t] > 0.0) || beta_[t] > kMaxBeta) {
      throw ArgumentError("DiffusionSchedule: beta out of (0, 0.999] at step " + std::to_string(t));
    }
    alphabar_[t] = alphabar_[t - 1] * (1.0 - beta_[t]);
  }
}

int DiffusionSchedule::checked(int t, int lo) const {
  if (t < lo || t > steps()) {
    throw ArgumentError("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(steps()) + "]");
  }
  return t;
}

DiffusionSchedule cosine_schedule(int T, double offset) {
  if (T < 1) throw ArgumentError("cosine_schedule: T must be >= 1");
  if (!(offset > 0.0 && offset < 1.0)) throw ArgumentError("cosine_schedule: offset must lie in (0, 1)");
  const auto f = [&](double t) {
    const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> beta(static_cast<std::size_t>(T) + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    const double ratio = (f(t) / f0) / (f(t - 1) / f0);
    beta[t] = std::min(1.0 - ratio, kMaxBeta);
  }
  return DiffusionSchedule(std::move(beta), offset, "cosine");
}

Eigen::VectorXd forward_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& sched) {
  if (t < 1) throw ArgumentError("forward_sample: t must be >= 1");
  if (eps.size() != x0.size()) throw ArgumentError("forward_sample: noise dimension mismatch");
  const double ab = sched.alphabar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd estimate_x0(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_pred, int t,
                            const DiffusionSchedule& sched) {
  if (t < 1) throw ArgumentError("estimate_x0: t must be >= 1");
  if (eps_pred.size() != x_t.size()) throw ArgumentError("estimate_x0: noise dimension mismatch");
  const double ab = sched.alphabar(t);
  if (!(ab > 0.0)) throw ArgumentError("estimate_x0: alphabar is zero at step " + std::to_string(t));
  return (x_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

Eigen::VectorXd renoise(const Eigen::VectorXd& x0, int t_target, Rng& rng, const DiffusionSchedule& sched) {
  const double ab = sched.alphabar(t_target);
  if (t_target == 0) return x0;
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * rng.normal_vector(x0.size());
}

Eigen::VectorXd renoise_step(const Eigen::VectorXd& x0, int t, Rng& rng, const DiffusionSchedule& sched,
                             RenoiseVariant variant) {
  switch (variant) {
    case RenoiseVariant::variance_preserving:
      return renoise(x0, t - 1, rng, sched);
    case RenoiseVariant::linear_noise: {
      const double ab = sched.alphabar(t);
      return std::sqrt(ab) * x0 + (1.0 - ab) * rng.normal_vector(x0.size());
    }
  }
  throw ArgumentError("renoise_step: unknown variant");
}

}  // namespace poseprior
