#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "kacsim/oracle.hpp"
#include "kacsim/rng.hpp"

namespace kacsim {

enum class DatumKind { Gaussian, UniformBall, TwoBump, Bkw };

// Centered one-particle densities satisfying the usual hypotheses (bounded,
// compact support or all polynomial moments). `energy` is the total second
// moment int |v|^2 f dv; the sphere radius below is sqrt(N * energy).
//
// TwoBump is a mixture of two smooth compactly supported bumps
// rho |-> exp(-1/(1 - rho^2)) placed at c and -w/(1-w) c, so the mean is
// zero for any weight.
class OneParticleDensity {
 public:
  static OneParticleDensity gaussian(int dimension, double variance_per_coordinate);
  static OneParticleDensity uniform_ball(int dimension, double radius);
  static OneParticleDensity two_bump(int dimension,
                                     const Eigen::VectorXd& first_center,
                                     double first_weight, double bump_radius);
  // Centers +-(along e1) at the given separation, bump radius solved so the
  // total second moment equals `energy`.
  static OneParticleDensity two_bump_with_energy(int dimension,
                                                 double separation,
                                                 double first_weight,
                                                 double energy);
  // Member of the relaxing gaussian-times-quadratic family at its initial
  // shape; puts i.i.d. data exactly on the oracle curve.
  static OneParticleDensity bkw_datum(int dimension, double energy,
                                      double excitation);

  DatumKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  double energy() const { return energy_; }
  double fourth_moment() const { return fourth_moment_; }

  double density(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd sample(Rng& rng) const;
  // grad f / f; only for differentiable kinds.
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  bool differentiable() const { return kind_ != DatumKind::UniformBall; }

  // TwoBump accessors (throw for other kinds).
  const Eigen::VectorXd& bump_center(int which) const;
  double bump_weight(int which) const;
  double bump_radius() const;

 private:
  OneParticleDensity() = default;

  DatumKind kind_ = DatumKind::Gaussian;
  int dimension_ = 1;
  double energy_ = 1.0;
  double fourth_moment_ = 3.0;

  double gaussian_variance_ = 1.0;
  double ball_radius_ = 1.0;
  Eigen::VectorXd centers_[2];
  double weights_[2] = {0.5, 0.5};
  double bump_radius_ = 1.0;
  double bump_norm_ = 1.0;  // normalization of one bump in R^d
  BkwProfile bkw_{};
};

// State of the N-particle system: velocity columns plus engine-maintained
// conserved-quantity caches.
struct ParticleSystem {
  Eigen::MatrixXd velocities;  // d x N
  double time = 0.0;
  std::uint64_t collision_count = 0;

  bool sphere_constrained = false;
  bool momentum_constrained = false;  // part of the sphere constraint for d >= 2
  double constraint_energy = 0.0;     // per-particle energy on the sphere

  Eigen::VectorXd momentum_cache;
  double energy_cache = 0.0;

  int dim() const { return int(velocities.rows()); }
  int n() const { return int(velocities.cols()); }

  Eigen::VectorXd total_momentum() const { return velocities.rowwise().sum(); }
  double total_energy() const { return velocities.squaredNorm(); }

  void refresh_caches() {
    momentum_cache = total_momentum();
    energy_cache = total_energy();
  }

  // Relative disagreement between caches and recomputation.
  double cache_error() const;
  // Relative distance from the constraint manifold (0 when unconstrained).
  double sphere_violation() const;
};

// N independent draws from f0. Requires N >= 2.
ParticleSystem sample_iid(const OneParticleDensity& f0, int n, Rng& rng);

// Project onto the constraint manifold: subtract the mean velocity (unless
// center_momentum is false, as in the 1D caricature where only energy is
// conserved), then rescale so the total energy is exactly N * energy.
ParticleSystem condition_to_sphere(ParticleSystem system, double energy,
                                   bool center_momentum = true);

// Exact draw from the uniform probability measure on the sphere
// { sum |v_i|^2 = N energy } intersected with { sum v_i = 0 } when
// center_momentum is set: isotropy of the projected gaussian makes
// center-and-rescale exact here.
ParticleSystem sample_uniform_sphere(int n, int dimension, double energy,
                                     Rng& rng, bool center_momentum = true);

// int |grad f0|^2 / f0. Closed form for gaussians, quadrature for the smooth
// non-gaussian kinds, nullopt where the density is not differentiable.
std::optional<double> fisher_information(const OneParticleDensity& f0);

}  // namespace kacsim
