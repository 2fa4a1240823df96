#include "kacsim/model.hpp"

#include "kacsim/numeric.hpp"

namespace kacsim {

double truncated_angular_mass(int dimension, double cutoff, double c) {
  if (!(cutoff > 0.0 && cutoff < M_PI))
    throw std::invalid_argument("angular cutoff must lie in (0, pi)");
  const GaussLegendre gl(48);
  const auto density = [&](double t) {
    return c * std::pow(t, -2.5) * std::pow(std::sin(t), dimension - 2);
  };
  // Geometric subdivision resolves the t^(-5/2) end near the cutoff.
  double mass = 0.0;
  double a = cutoff;
  while (a < M_PI) {
    const double b = std::min(2.0 * a, M_PI);
    mass += gl.integrate(density, a, b, 4);
    a = b;
  }
  return mass;
}

CollisionKernel CollisionKernel::hard_spheres(int dimension, double c) {
  if (dimension < 2) throw std::invalid_argument("hard spheres: d >= 2");
  if (!(c > 0.0)) throw std::invalid_argument("hard spheres: constant must be > 0");
  CollisionKernel k;
  k.kind = KernelKind::HardSpheres;
  k.dimension = dimension;
  k.hs_constant = c;
  return k;
}

CollisionKernel CollisionKernel::cutoff_maxwell(int dimension) {
  CollisionKernel k;
  k.kind = KernelKind::CutoffMaxwell;
  k.dimension = dimension;
  return k;
}

CollisionKernel CollisionKernel::true_maxwell(int dimension, double cutoff,
                                              double tmm_constant) {
  if (dimension < 2) throw std::invalid_argument("true maxwell: d >= 2");
  if (!(cutoff > 0.0 && cutoff < M_PI))
    throw std::invalid_argument("true maxwell: cutoff must lie in (0, pi)");
  CollisionKernel k;
  k.kind = KernelKind::TrueMaxwell;
  k.dimension = dimension;
  k.tmm_cutoff = cutoff;
  k.tmm_constant = tmm_constant > 0.0
                       ? tmm_constant
                       : 1.0 / truncated_angular_mass(dimension, 0.1, 1.0);
  k.angular_mass = truncated_angular_mass(dimension, cutoff, k.tmm_constant);
  return k;
}

}  // namespace kacsim
