#include "kacsim/oracle.hpp"

namespace kacsim {

double m4_relaxation_rate(const CollisionKernel& kernel) {
  if (kernel.kind != KernelKind::CutoffMaxwell)
    throw std::invalid_argument(
        "m4_relaxation_rate: closed moment dynamics only available for the "
        "uniform-deflection Maxwell kernel");
  const double d = kernel.dimension;
  return (d - 1.0) / (2.0 * d);
}

double m4_reference(const CollisionKernel& kernel, double energy,
                    double m4_initial, double t) {
  const double rate = m4_relaxation_rate(kernel);
  const double m4_eq =
      (kernel.dimension + 2.0) / kernel.dimension * energy * energy;
  return m4_eq + (m4_initial - m4_eq) * std::exp(-rate * t);
}

MomentCurve m4_reference_curve(const CollisionKernel& kernel, double energy,
                               double m4_initial,
                               const std::vector<double>& times) {
  MomentCurve curve;
  curve.rate = m4_relaxation_rate(kernel);
  curve.times = times;
  curve.m4.reserve(times.size());
  for (double t : times)
    curve.m4.push_back(m4_reference(kernel, energy, m4_initial, t));
  return curve;
}

BkwProfile BkwProfile::standard(int dimension, double energy) {
  BkwProfile p;
  p.dimension = dimension;
  p.energy = energy;
  p.excitation = 2.0 / (dimension + 2.0);
  p.rate = (dimension - 1.0) / (4.0 * dimension);
  return p;
}

BkwProfile BkwProfile::matched(const CollisionKernel& kernel, double energy,
                               double m4_initial) {
  const double lambda4 = m4_relaxation_rate(kernel);
  const int d = kernel.dimension;
  const double m4_eq = (d + 2.0) / d * energy * energy;
  if (m4_initial > m4_eq)
    throw std::domain_error(
        "BkwProfile::matched: fourth moment above equilibrium is outside the "
        "family (requires m4(0) <= m4_eq)");
  BkwProfile p;
  p.dimension = d;
  p.energy = energy;
  p.excitation = std::sqrt((m4_eq - m4_initial) / m4_eq);
  p.rate = 0.5 * lambda4;
  return p;
}

double BkwProfile::min_valid_time() const {
  const double max_exc = 1.0 - min_shape();  // 2/(d+2)
  if (excitation <= max_exc) return 0.0;
  return std::log(excitation / max_exc) / rate;
}

double BkwProfile::shape_checked(double t) const {
  const double K = shape(t);
  if (K < min_shape() - 1e-12)
    throw std::domain_error(
        "BkwProfile: shape parameter below d/(d+2), density would be "
        "negative (t < min_valid_time)");
  return K;
}

double BkwProfile::density(double t,
                           const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const double K = shape_checked(t);
  const int d = dimension;
  const double sK = (energy / d) * K;
  const double a = ((d + 2.0) * K - d) / (2.0 * K);
  const double b = (1.0 - K) / (2.0 * K);
  const double q = v.squaredNorm() / sK;
  const double gauss =
      std::exp(-0.5 * q) / std::pow(2.0 * M_PI * sK, 0.5 * d);
  return gauss * (a + b * q);
}

double BkwProfile::fourth_moment(double t) const {
  const double K = shape_checked(t);
  const double m4_eq = (dimension + 2.0) / dimension * energy * energy;
  return m4_eq * K * (2.0 - K);
}

double bkw_profile(double energy, int dimension, double t,
                   const Eigen::Ref<const Eigen::VectorXd>& v) {
  return BkwProfile::standard(dimension, energy).density(t, v);
}

}  // namespace kacsim
