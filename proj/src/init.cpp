#include "kacsim/init.hpp"

#include <cmath>

#include "kacsim/numeric.hpp"

namespace kacsim {

namespace {

double sphere_area(int dimension) {  // |S^(d-1)|
  return 2.0 * std::pow(M_PI, 0.5 * dimension) / std::tgamma(0.5 * dimension);
}

double ball_volume(int dimension, double radius) {
  return std::pow(M_PI, 0.5 * dimension) / std::tgamma(0.5 * dimension + 1.0) *
         std::pow(radius, dimension);
}

// Mollifier profile exp(-1/(1-x^2)) on [0,1).
double mollifier(double x) {
  const double w = 1.0 - x * x;
  return w > 0.0 ? std::exp(-1.0 / w) : 0.0;
}

// mollifier'(x)/x, finite at 0.
double mollifier_slope_over_x(double x) {
  const double w = 1.0 - x * x;
  if (w <= 0.0) return 0.0;
  return -2.0 * std::exp(-1.0 / w) / (w * w);
}

double radial_moment(int dimension, int power) {  // int_0^1 phi(x) x^(d-1+power) dx
  return adaptive_simpson(
      [&](double x) { return mollifier(x) * std::pow(x, dimension - 1 + power); },
      0.0, 1.0, 1e-14);
}

}  // namespace

OneParticleDensity OneParticleDensity::gaussian(int dimension,
                                                double variance_per_coordinate) {
  if (dimension < 1) throw std::invalid_argument("gaussian: dimension >= 1");
  if (!(variance_per_coordinate > 0.0))
    throw std::invalid_argument("gaussian: variance must be positive");
  OneParticleDensity f;
  f.kind_ = DatumKind::Gaussian;
  f.dimension_ = dimension;
  f.gaussian_variance_ = variance_per_coordinate;
  f.energy_ = dimension * variance_per_coordinate;
  f.fourth_moment_ = dimension * (dimension + 2.0) * variance_per_coordinate *
                     variance_per_coordinate;
  return f;
}

OneParticleDensity OneParticleDensity::uniform_ball(int dimension, double radius) {
  if (dimension < 1) throw std::invalid_argument("uniform_ball: dimension >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("uniform_ball: radius must be positive");
  OneParticleDensity f;
  f.kind_ = DatumKind::UniformBall;
  f.dimension_ = dimension;
  f.ball_radius_ = radius;
  f.energy_ = radius * radius * dimension / (dimension + 2.0);
  f.fourth_moment_ = std::pow(radius, 4) * dimension / (dimension + 4.0);
  return f;
}

OneParticleDensity OneParticleDensity::two_bump(int dimension,
                                                const Eigen::VectorXd& first_center,
                                                double first_weight,
                                                double bump_radius) {
  if (dimension < 1) throw std::invalid_argument("two_bump: dimension >= 1");
  if (first_center.size() != dimension)
    throw std::invalid_argument("two_bump: center dimension mismatch");
  if (!(first_weight > 0.0 && first_weight < 1.0))
    throw std::invalid_argument("two_bump: weight must lie in (0,1)");
  if (!(bump_radius > 0.0))
    throw std::invalid_argument("two_bump: bump radius must be positive");
  OneParticleDensity f;
  f.kind_ = DatumKind::TwoBump;
  f.dimension_ = dimension;
  f.weights_[0] = first_weight;
  f.weights_[1] = 1.0 - first_weight;
  f.centers_[0] = first_center;
  // Second center placed so the mixture mean is exactly zero.
  f.centers_[1] = -(first_weight / (1.0 - first_weight)) * first_center;
  f.bump_radius_ = bump_radius;

  const double i0 = radial_moment(dimension, 0);
  const double i2 = radial_moment(dimension, 2);
  const double i4 = radial_moment(dimension, 4);
  f.bump_norm_ = 1.0 / (sphere_area(dimension) * i0);
  const double m2b = bump_radius * bump_radius * i2 / i0;
  const double m4b = std::pow(bump_radius, 4) * i4 / i0;

  double energy = m2b;
  double m4 = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double c2 = f.centers_[k].squaredNorm();
    energy += f.weights_[k] * c2;
    m4 += f.weights_[k] * (m4b + c2 * c2 + 2.0 * c2 * m2b +
                           4.0 * c2 * m2b / dimension);
  }
  f.energy_ = energy;
  f.fourth_moment_ = m4;
  return f;
}

OneParticleDensity OneParticleDensity::two_bump_with_energy(int dimension,
                                                            double separation,
                                                            double first_weight,
                                                            double energy) {
  if (!(separation > 0.0))
    throw std::invalid_argument("two_bump: separation must be positive");
  if (!(first_weight > 0.0 && first_weight < 1.0))
    throw std::invalid_argument("two_bump: weight must lie in (0,1)");
  const double w1 = first_weight, w2 = 1.0 - first_weight;
  const double bump_energy = energy - w1 * w2 * separation * separation;
  if (!(bump_energy > 0.0))
    throw std::invalid_argument(
        "two_bump: energy too small for the requested separation");
  const double kappa2 =
      radial_moment(dimension, 2) / radial_moment(dimension, 0);
  Eigen::VectorXd center = Eigen::VectorXd::Zero(dimension);
  center[0] = separation * w2;
  return two_bump(dimension, center, first_weight,
                  std::sqrt(bump_energy / kappa2));
}

OneParticleDensity OneParticleDensity::bkw_datum(int dimension, double energy,
                                                 double excitation) {
  if (dimension < 1) throw std::invalid_argument("bkw_datum: dimension >= 1");
  if (!(energy > 0.0)) throw std::invalid_argument("bkw_datum: energy must be positive");
  if (!(excitation >= 0.0 && excitation <= 2.0 / (dimension + 2.0)))
    throw std::invalid_argument(
        "bkw_datum: excitation must lie in [0, 2/(d+2)] for a valid density");
  OneParticleDensity f;
  f.kind_ = DatumKind::Bkw;
  f.dimension_ = dimension;
  f.energy_ = energy;
  f.bkw_ = BkwProfile::standard(dimension, energy);
  f.bkw_.excitation = excitation;
  f.fourth_moment_ = f.bkw_.fourth_moment(0.0);
  return f;
}

double OneParticleDensity::density(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  switch (kind_) {
    case DatumKind::Gaussian: {
      const double s = gaussian_variance_;
      return std::exp(-0.5 * v.squaredNorm() / s) /
             std::pow(2.0 * M_PI * s, 0.5 * dimension_);
    }
    case DatumKind::UniformBall:
      return v.norm() <= ball_radius_
                 ? 1.0 / ball_volume(dimension_, ball_radius_)
                 : 0.0;
    case DatumKind::TwoBump: {
      const double r = bump_radius_;
      const double scale = bump_norm_ / std::pow(r, dimension_);
      double f = 0.0;
      for (int k = 0; k < 2; ++k)
        f += weights_[k] * scale * mollifier((v - centers_[k]).norm() / r);
      return f;
    }
    case DatumKind::Bkw:
      return bkw_.density(0.0, v);
  }
  return 0.0;
}

Eigen::VectorXd OneParticleDensity::sample(Rng& rng) const {
  switch (kind_) {
    case DatumKind::Gaussian: {
      Eigen::VectorXd v(dimension_);
      const double sd = std::sqrt(gaussian_variance_);
      for (int i = 0; i < dimension_; ++i) v[i] = sd * rng.normal();
      return v;
    }
    case DatumKind::UniformBall: {
      const double x = std::pow(rng.uniform_pos(), 1.0 / dimension_);
      return ball_radius_ * x * uniform_direction(dimension_, rng);
    }
    case DatumKind::TwoBump: {
      const int k = rng.uniform() < weights_[0] ? 0 : 1;
      // Rejection inside the unit ball against the mollifier peak e^{-1}.
      for (;;) {
        const double x = std::pow(rng.uniform_pos(), 1.0 / dimension_);
        if (rng.uniform() < M_E * mollifier(x))
          return centers_[k] +
                 bump_radius_ * x * uniform_direction(dimension_, rng);
      }
    }
    case DatumKind::Bkw:
      return bkw_.sample(0.0, rng);
  }
  return Eigen::VectorXd::Zero(dimension_);
}

Eigen::VectorXd OneParticleDensity::score(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  switch (kind_) {
    case DatumKind::Gaussian:
      return -v / gaussian_variance_;
    case DatumKind::UniformBall:
      throw std::domain_error("score: uniform ball is not differentiable");
    case DatumKind::TwoBump: {
      const double r = bump_radius_;
      const double scale = bump_norm_ / std::pow(r, dimension_);
      double f = 0.0;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(dimension_);
      for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd u = v - centers_[k];
        const double x = u.norm() / r;
        f += weights_[k] * scale * mollifier(x);
        grad += weights_[k] * scale * mollifier_slope_over_x(x) / (r * r) * u;
      }
      if (f <= 0.0) return Eigen::VectorXd::Zero(dimension_);
      return grad / f;
    }
    case DatumKind::Bkw: {
      const double K = 1.0 - bkw_.excitation;
      const double sK = (energy_ / dimension_) * K;
      const double a = ((dimension_ + 2.0) * K - dimension_) / (2.0 * K);
      const double b = (1.0 - K) / (2.0 * K);
      const double q = v.squaredNorm() / sK;
      return v / sK * ((2.0 * b - (a + b * q)) / (a + b * q));
    }
  }
  return Eigen::VectorXd::Zero(dimension_);
}

const Eigen::VectorXd& OneParticleDensity::bump_center(int which) const {
  if (kind_ != DatumKind::TwoBump) throw std::logic_error("not a two-bump datum");
  return centers_[which];
}

double OneParticleDensity::bump_weight(int which) const {
  if (kind_ != DatumKind::TwoBump) throw std::logic_error("not a two-bump datum");
  return weights_[which];
}

double OneParticleDensity::bump_radius() const {
  if (kind_ != DatumKind::TwoBump) throw std::logic_error("not a two-bump datum");
  return bump_radius_;
}

double ParticleSystem::cache_error() const {
  const double e = total_energy();
  const double de = std::abs(energy_cache - e) / std::max(1.0, e);
  const double dp = (momentum_cache - total_momentum()).norm() /
                    std::max(1.0, std::sqrt(e));
  return std::max(de, dp);
}

double ParticleSystem::sphere_violation() const {
  if (!sphere_constrained) return 0.0;
  const double ne = n() * constraint_energy;
  double violation = std::abs(total_energy() - ne) / ne;
  if (momentum_constrained)
    violation = std::max(violation, total_momentum().norm() / std::sqrt(ne));
  return violation;
}

ParticleSystem sample_iid(const OneParticleDensity& f0, int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("sample_iid: need at least two particles");
  ParticleSystem sys;
  sys.velocities.resize(f0.dimension(), n);
  for (int i = 0; i < n; ++i) sys.velocities.col(i) = f0.sample(rng);
  sys.refresh_caches();
  return sys;
}

ParticleSystem condition_to_sphere(ParticleSystem system, double energy,
                                   bool center_momentum) {
  const int n = system.n();
  if (n < 2) throw std::invalid_argument("condition_to_sphere: need at least two particles");
  if (!(energy > 0.0))
    throw std::invalid_argument("condition_to_sphere: energy must be positive");
  if (center_momentum) {
    const Eigen::VectorXd mean = system.velocities.rowwise().mean();
    system.velocities.colwise() -= mean;
  }
  const double e = system.velocities.squaredNorm();
  if (e <= 1e-300)
    throw std::domain_error(
        "condition_to_sphere: zero energy after centering (all velocities equal)");
  system.velocities *= std::sqrt(n * energy / e);
  system.sphere_constrained = true;
  system.momentum_constrained = center_momentum;
  system.constraint_energy = energy;
  system.refresh_caches();
  return system;
}

ParticleSystem sample_uniform_sphere(int n, int dimension, double energy,
                                     Rng& rng, bool center_momentum) {
  if (n < 2) throw std::invalid_argument("sample_uniform_sphere: need at least two particles");
  ParticleSystem sys;
  sys.velocities.resize(dimension, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < dimension; ++i) sys.velocities(i, j) = rng.normal();
  return condition_to_sphere(std::move(sys), energy, center_momentum);
}

namespace {

// Fisher information of a two-bump mixture by quadrature. The mixture is
// rotation invariant about the center axis, so for d >= 2 reduce to the
// (axis, transverse radius) half-plane.
double two_bump_fisher(const OneParticleDensity& f0) {
  const int d = f0.dimension();
  const double r = f0.bump_radius();
  const double a0 = f0.bump_center(0).norm() > 0.0
                        ? f0.bump_center(0).norm()
                        : 0.0;
  const double s0 = f0.bump_center(0).norm() > 0.0 ? 1.0 : 0.0;
  // Axis coordinates of the two centers (second is opposite).
  const double axis[2] = {a0 * s0, -f0.bump_center(1).norm() * s0};
  const double w[2] = {f0.bump_weight(0), f0.bump_weight(1)};

  // One bump and its gradient in terms of m = |u| decomposed as (dz, rho).
  struct Bump {
    double scale, r;
    double value(double dist_over_r) const { return scale * mollifier(dist_over_r); }
    double slope_over_u(double dist_over_r) const {  // d b / d u_i = this * u_i
      return scale * mollifier_slope_over_x(dist_over_r) / (r * r);
    }
  };
  const double i0 = adaptive_simpson(
      [&](double x) { return mollifier(x) * std::pow(x, d - 1); }, 0.0, 1.0, 1e-14);
  const Bump bump{1.0 / (sphere_area(d) * i0 * std::pow(r, d)), r};

  if (d == 1) {
    const double lo = std::min(axis[0], axis[1]) - r;
    const double hi = std::max(axis[0], axis[1]) + r;
    return adaptive_simpson(
        [&](double z) {
          double f = 0.0, g = 0.0;
          for (int k = 0; k < 2; ++k) {
            const double u = z - axis[k];
            const double x = std::abs(u) / r;
            f += w[k] * bump.value(x);
            g += w[k] * bump.slope_over_u(x) * u;
          }
          return f > 1e-300 ? g * g / f : 0.0;
        },
        lo, hi, 1e-11);
  }

  const double zlo = std::min(axis[0], axis[1]) - r;
  const double zhi = std::max(axis[0], axis[1]) + r;
  const auto inner = [&](double z) {
    return adaptive_simpson(
        [&](double rho) {
          double f = 0.0, gz = 0.0, grho = 0.0;
          for (int k = 0; k < 2; ++k) {
            const double dz = z - axis[k];
            const double x = std::sqrt(dz * dz + rho * rho) / r;
            const double su = w[k] * bump.slope_over_u(x);
            f += w[k] * bump.value(x);
            gz += su * dz;
            grho += su * rho;
          }
          if (f <= 1e-300) return 0.0;
          return (gz * gz + grho * grho) / f * std::pow(rho, d - 2);
        },
        0.0, r, 1e-11);
  };
  return sphere_area(d - 1) * adaptive_simpson(inner, zlo, zhi, 1e-9);
}

double bkw_fisher(const OneParticleDensity& f0) {
  const int d = f0.dimension();
  const double energy = f0.energy();
  const double K = 1.0 - (std::sqrt(1.0 - f0.fourth_moment() /
                                              ((d + 2.0) / d * energy * energy)));
  const double sK = energy / d * K;
  const double a = ((d + 2.0) * K - d) / (2.0 * K);
  const double b = (1.0 - K) / (2.0 * K);
  const double norm = 1.0 / std::pow(2.0 * M_PI * sK, 0.5 * d);
  const auto f = [&](double rad) {
    const double q = rad * rad / sK;
    return norm * std::exp(-0.5 * q) * (a + b * q);
  };
  const auto df = [&](double rad) {
    const double q = rad * rad / sK;
    return norm * std::exp(-0.5 * q) * (rad / sK) * (2.0 * b - (a + b * q));
  };
  const double rmax = 12.0 * std::sqrt(sK);
  return sphere_area(d) *
         adaptive_simpson(
             [&](double rad) {
               const double fv = f(rad);
               if (fv <= 1e-300) return 0.0;
               const double g = df(rad);
               return g * g / fv * std::pow(rad, d - 1);
             },
             0.0, rmax, 1e-11);
}

}  // namespace

std::optional<double> fisher_information(const OneParticleDensity& f0) {
  switch (f0.kind()) {
    case DatumKind::Gaussian:
      return f0.dimension() / (f0.energy() / f0.dimension());
    case DatumKind::UniformBall:
      return std::nullopt;
    case DatumKind::TwoBump:
      return two_bump_fisher(f0);
    case DatumKind::Bkw:
      return bkw_fisher(f0);
  }
  return std::nullopt;
}

}  // namespace kacsim
