#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "kacsim/rng.hpp"

namespace kacsim {

enum class KernelKind { HardSpheres, TrueMaxwell, CutoffMaxwell };

// B(|u|, cos t) = Gamma(|u|) * b(cos t).
//   HardSpheres:   Gamma = hs_constant * |u|,  b uniform.
//   TrueMaxwell:   Gamma = 1, b(cos t) = tmm_constant * t^(-5/2) truncated to
//                  [tmm_cutoff, pi]; the pair jump rate is the truncated
//                  angular mass  int_eps^pi b(cos t) sin^(d-2) t dt.
//   CutoffMaxwell: Gamma = 1, b uniform (rate 1).
struct CollisionKernel {
  KernelKind kind = KernelKind::CutoffMaxwell;
  int dimension = 3;
  double hs_constant = 1.0;
  double tmm_cutoff = 0.1;
  double tmm_constant = 1.0;
  double angular_mass = 1.0;  // cached truncated mass (TrueMaxwell)

  static CollisionKernel hard_spheres(int dimension, double c = 1.0);
  static CollisionKernel cutoff_maxwell(int dimension);
  // tmm_constant <= 0 requests the default normalization: constant such that
  // the truncated angular mass at cutoff 0.1 equals 1 (fixes the time unit).
  static CollisionKernel true_maxwell(int dimension, double cutoff,
                                      double tmm_constant = 0.0);
};

// int_eps^pi c * t^(-5/2) * sin^(d-2) t dt, fixed-order composite quadrature.
double truncated_angular_mass(int dimension, double cutoff, double c);

// Jump intensity of one pair at the given relative speed.
inline double pair_rate(const CollisionKernel& k, double relative_speed) {
  if (relative_speed < 0.0)
    throw std::invalid_argument("pair_rate: negative relative speed");
  switch (k.kind) {
    case KernelKind::HardSpheres:
      return k.hs_constant * relative_speed;
    case KernelKind::TrueMaxwell:
      return k.angular_mass;
    case KernelKind::CutoffMaxwell:
      return 1.0;
  }
  return 0.0;
}

// Elastic collision, sigma parametrization:
//   vi' = (vi+vj)/2 + |vi-vj|/2 * sigma,  vj' = (vi+vj)/2 - |vi-vj|/2 * sigma.
// Momentum is conserved exactly as written; energy to rounding.
template <class V1, class V2, class V3>
std::pair<typename V1::PlainObject, typename V1::PlainObject> collide_pair(
    const Eigen::MatrixBase<V1>& vi, const Eigen::MatrixBase<V2>& vj,
    const Eigen::MatrixBase<V3>& sigma) {
  using Scalar = typename V1::Scalar;
  using Vec = typename V1::PlainObject;
  if (std::abs(sigma.norm() - Scalar(1)) > Scalar(1e-12))
    throw std::invalid_argument("collide_pair: sigma is not a unit vector");
  const Vec center = Scalar(0.5) * (vi + vj);
  const Scalar half_speed = Scalar(0.5) * (vi - vj).norm();
  Vec a = center + half_speed * sigma;
  Vec b = center - half_speed * sigma;
  return {std::move(a), std::move(b)};
}

// In-place variant for the event loop (operates on state columns).
inline void collide_pair_in_place(Eigen::Ref<Eigen::VectorXd> vi,
                                  Eigen::Ref<Eigen::VectorXd> vj,
                                  const Eigen::Ref<const Eigen::VectorXd>& sigma) {
  const Eigen::VectorXd center = 0.5 * (vi + vj);
  const double half_speed = 0.5 * (vi - vj).norm();
  vi = center + half_speed * sigma;
  vj = center - half_speed * sigma;
}

// 1D caricature: rotation of the pair (vi, vj) by angle theta. Conserves
// vi^2 + vj^2, not the sum.
template <class Scalar>
std::pair<Scalar, Scalar> kac_rotate(Scalar vi, Scalar vj, Scalar theta) {
  const Scalar c = std::cos(theta), s = std::sin(theta);
  return {vi * c + vj * s, -vi * s + vj * c};
}

// Uniform direction on S^(d-1).
template <class RngT>
Eigen::VectorXd uniform_direction(int dimension, RngT& rng) {
  Eigen::VectorXd z(dimension);
  double n2;
  do {
    for (int i = 0; i < dimension; ++i) z[i] = rng.normal();
    n2 = z.squaredNorm();
  } while (n2 < 1e-300);
  return z / std::sqrt(n2);
}

namespace detail {

// Uniform direction orthogonal to the unit vector axis.
template <class RngT>
Eigen::VectorXd orthogonal_direction(const Eigen::Ref<const Eigen::VectorXd>& axis,
                                     RngT& rng) {
  const int d = int(axis.size());
  Eigen::VectorXd w(d);
  double n2;
  do {
    w = uniform_direction(d, rng);
    w -= w.dot(axis) * axis;
    n2 = w.squaredNorm();
  } while (n2 < 1e-12);
  return w / std::sqrt(n2);
}

// Deflection angle ~ t^(-5/2) sin^(d-2) t on [eps, pi]: inverse CDF on the
// power-law majorant t^(d-9/2), rejection against (sin t / t)^(d-2).
template <class RngT>
double sample_tmm_angle(int dimension, double eps, RngT& rng) {
  const double p = double(dimension) - 4.5 + 1.0;  // exponent + 1, never 0
  const double ea = std::pow(eps, p), pa = std::pow(M_PI, p);
  for (;;) {
    const double u = rng.uniform_pos();
    const double theta = std::pow(ea + u * (pa - ea), 1.0 / p);
    const double accept = std::pow(std::sin(theta) / theta, dimension - 2);
    if (rng.uniform() < accept) return theta;
  }
}

}  // namespace detail

// Draw the direction parameter sigma for a collision with unit relative
// direction u_hat = (vi - vj)/|vi - vj|. Uniform on the sphere for
// HardSpheres / CutoffMaxwell; singular truncated law for TrueMaxwell.
template <class RngT>
Eigen::VectorXd sample_sigma(const CollisionKernel& kernel,
                             const Eigen::Ref<const Eigen::VectorXd>& relative_direction,
                             RngT& rng) {
  const double n = relative_direction.norm();
  if (!(std::abs(n - 1.0) <= 1e-8))
    throw std::invalid_argument("sample_sigma: relative_direction must be a unit vector");
  const int d = int(relative_direction.size());
  if (d < 2) throw std::invalid_argument("sample_sigma: requires d >= 2");
  if (kernel.kind != KernelKind::TrueMaxwell) return uniform_direction(d, rng);
  const double theta = detail::sample_tmm_angle(d, kernel.tmm_cutoff, rng);
  const Eigen::VectorXd w = detail::orthogonal_direction(relative_direction, rng);
  return std::cos(theta) * relative_direction + std::sin(theta) * w;
}

}  // namespace kacsim
