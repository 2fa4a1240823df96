#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kacsim/model.hpp"
#include "kacsim/rng.hpp"

namespace kacsim {

// Centered gaussian with total second moment `energy` (variance energy/d per
// coordinate): the fixed point the jump process relaxes to.
struct Equilibrium {
  int dimension = 3;
  double energy = 1.0;

  double variance() const { return energy / dimension; }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    const double s = variance();
    return -0.5 * v.squaredNorm() / s -
           0.5 * dimension * std::log(2.0 * M_PI * s);
  }

  double density(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return std::exp(log_density(v));
  }

  double fourth_moment() const {
    return (dimension + 2.0) / dimension * energy * energy;
  }

  template <class RngT>
  Eigen::VectorXd sample(RngT& rng) const {
    Eigen::VectorXd v(dimension);
    const double sd = std::sqrt(variance());
    for (int i = 0; i < dimension; ++i) v[i] = sd * rng.normal();
    return v;
  }
};

inline double equilibrium_density(const Equilibrium& eq,
                                  const Eigen::Ref<const Eigen::VectorXd>& v) {
  return eq.density(v);
}

// Relaxation rate of E|v|^4 under the unit-rate uniform-deflection kernel
// with mean-field pair intensity 1/N. Derived from the generator acting on
// |v|^4 for isotropic laws:
//   d/dt m4 = -((d-1)/(2d)) m4 + ((d+1)/(2d)) E^2 - E^2/d^2.
// Only the uniform-deflection kernel has this closed scalar form.
double m4_relaxation_rate(const CollisionKernel& kernel);

// m4(t) = m4_eq + (m4(0) - m4_eq) exp(-lambda4 t), isotropic initial data.
double m4_reference(const CollisionKernel& kernel, double energy,
                    double m4_initial, double t);

struct MomentCurve {
  std::vector<double> times;
  std::vector<double> m4;
  double rate = 0.0;
};

MomentCurve m4_reference_curve(const CollisionKernel& kernel, double energy,
                               double m4_initial,
                               const std::vector<double>& times);

// Exact self-similar relaxing solution for the uniform-deflection Maxwell
// kernel: a centered gaussian times a quadratic radial polynomial,
//
//   f_t(v) = M_{sK}(v) [ A(K) + B(K) |v|^2 / (sK) ],   s = energy/d,
//   A = ((d+2)K - d)/(2K),  B = (1-K)/(2K),  K(t) = 1 - excitation e^{-rate t},
//
// nonnegative iff K >= d/(d+2). rate = m4_relaxation_rate/2 so that the
// fourth moment m4(t) = m4_eq (1 - (1-K)^2) tracks m4_reference.
struct BkwProfile {
  int dimension = 3;
  double energy = 1.0;
  double excitation = 0.0;  // 1 - K(0)
  double rate = 0.0;

  // Maximal family member that is a valid density from t = 0 on.
  static BkwProfile standard(int dimension, double energy);
  // Member whose fourth moment matches m4_reference from the given m4(0).
  static BkwProfile matched(const CollisionKernel& kernel, double energy,
                            double m4_initial);

  double shape(double t) const { return 1.0 - excitation * std::exp(-rate * t); }
  double min_shape() const { return double(dimension) / (dimension + 2.0); }
  double min_valid_time() const;
  bool valid_at(double t) const { return shape(t) >= min_shape() - 1e-12; }

  double density(double t, const Eigen::Ref<const Eigen::VectorXd>& v) const;
  double fourth_moment(double t) const;
  double second_moment() const { return energy; }

  template <class RngT>
  Eigen::VectorXd sample(double t, RngT& rng) const {
    const double K = shape_checked(t);
    const double sK = (energy / dimension) * K;
    const double sd = std::sqrt(sK);
    const int d = dimension;
    Eigen::VectorXd v(d);
    const double weight_gauss = ((d + 2.0) * K - d) / (2.0 * K);
    if (rng.uniform() < weight_gauss) {
      for (int i = 0; i < d; ++i) v[i] = sd * rng.normal();
      return v;
    }
    // Radius^2 ~ sK * chi^2_{d+2}, direction uniform: the |v|^2-weighted
    // gaussian component.
    double r2 = 0.0;
    for (int i = 0; i < d + 2; ++i) {
      const double g = rng.normal();
      r2 += g * g;
    }
    return std::sqrt(sK * r2) * uniform_direction(d, rng);
  }

 private:
  double shape_checked(double t) const;
};

// Classical maximal family member (excitation 2/(d+2)).
double bkw_profile(double energy, int dimension, double t,
                   const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace kacsim
