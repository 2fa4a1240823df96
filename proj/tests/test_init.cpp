#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kacsim/init.hpp"
#include "kacsim/metrics.hpp"
#include "kacsim/numeric.hpp"

using namespace kacsim;
using Eigen::Vector3d;
using Eigen::VectorXd;

TEST_SUITE("init") {

TEST_CASE("iid gaussian sampling hits the per-coordinate variance") {
  const auto f0 = OneParticleDensity::gaussian(3, 1.0);
  Rng rng(21);
  const ParticleSystem sys = sample_iid(f0, 100000, rng);
  for (int a = 0; a < 3; ++a) {
    const double var = sys.velocities.row(a).squaredNorm() / sys.n();
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
  }
  const double mean_norm = sys.velocities.rowwise().mean().norm();
  CHECK(mean_norm <= 0.02);
}

TEST_CASE("ball samples stay inside the ball") {
  const auto f0 = OneParticleDensity::uniform_ball(3, 1.7);
  Rng rng(22);
  const ParticleSystem sys = sample_iid(f0, 20000, rng);
  CHECK(sys.velocities.colwise().norm().maxCoeff() <= 1.7 + 1e-12);
  CHECK(f0.energy() == doctest::Approx(1.7 * 1.7 * 3.0 / 5.0));
  const double m2 = sys.velocities.squaredNorm() / sys.n();
  CHECK(m2 == doctest::Approx(f0.energy()).epsilon(0.02));
}

TEST_CASE("sampling needs at least a pair") {
  const auto f0 = OneParticleDensity::gaussian(3, 1.0);
  Rng rng(23);
  CHECK_THROWS_AS(sample_iid(f0, 1, rng), std::invalid_argument);
}

TEST_CASE("two-bump mixture splits mass between half-spaces as the density says") {
  // Asymmetric weights; the halfspace mass is computed by quadrature of the
  // mixture in cylindrical coordinates, independently of the sampler.
  const int d = 3;
  const auto f0 = OneParticleDensity::two_bump_with_energy(d, 2.0, 0.3, 3.0);
  CHECK(f0.energy() == doctest::Approx(3.0).epsilon(1e-10));
  // Mean is zero by construction.
  CHECK((0.3 * f0.bump_center(0) + 0.7 * f0.bump_center(1)).norm() <= 1e-12);

  const double r = f0.bump_radius();
  const double zlo = std::min(f0.bump_center(0)[0], f0.bump_center(1)[0]) - r;
  const double zhi = std::max(f0.bump_center(0)[0], f0.bump_center(1)[0]) + r;
  const auto slice = [&](double z) {
    return adaptive_simpson(
        [&](double rho) {
          Vector3d v(z, rho, 0.0);
          return f0.density(v) * 2.0 * M_PI * rho;
        },
        0.0, r + 1e-9, 1e-10);
  };
  const double total = adaptive_simpson(slice, zlo, zhi, 1e-8);
  const double upper = adaptive_simpson(slice, 0.0, zhi, 1e-8);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  Rng rng(24);
  const ParticleSystem sys = sample_iid(f0, 100000, rng);
  int in_upper = 0;
  for (int i = 0; i < sys.n(); ++i)
    if (sys.velocities(0, i) > 0.0) ++in_upper;
  CHECK(std::abs(double(in_upper) / sys.n() - upper) <= 0.01);

  const double m2 = sys.velocities.squaredNorm() / sys.n();
  CHECK(m2 == doctest::Approx(3.0).epsilon(0.02));
  // Empirical fourth moment validates the analytic mixture moments.
  double m4 = 0.0;
  for (int i = 0; i < sys.n(); ++i)
    m4 += std::pow(sys.velocities.col(i).squaredNorm(), 2);
  m4 /= sys.n();
  CHECK(m4 == doctest::Approx(f0.fourth_moment()).epsilon(0.03));
}

TEST_CASE("projection to the constraint sphere") {
  ParticleSystem sys;
  sys.velocities.resize(3, 2);
  sys.velocities << 1, 3, 0, 0, 0, 0;
  const ParticleSystem out = condition_to_sphere(sys, 1.0);
  CHECK(out.velocities(0, 0) == doctest::Approx(-1.0));
  CHECK(out.velocities(0, 1) == doctest::Approx(1.0));
  CHECK(out.sphere_constrained);
  CHECK(out.momentum_constrained);
  CHECK(out.sphere_violation() <= 1e-12);
}

TEST_CASE("projection is idempotent") {
  const auto f0 = OneParticleDensity::gaussian(3, 0.7);
  Rng rng(25);
  ParticleSystem sys = sample_iid(f0, 500, rng);
  const ParticleSystem once = condition_to_sphere(sys, 2.0);
  const ParticleSystem twice = condition_to_sphere(once, 2.0);
  CHECK((once.velocities - twice.velocities).norm() <= 1e-10);
}

TEST_CASE("projection rejects a degenerate state") {
  ParticleSystem sys;
  sys.velocities = Eigen::MatrixXd::Ones(3, 4);
  CHECK_THROWS_AS(condition_to_sphere(sys, 1.0), std::domain_error);
}

TEST_CASE("rescale factor concentrates at large N") {
  const auto f0 = OneParticleDensity::gaussian(3, 1.0);
  Rng rng(26);
  for (int rep = 0; rep < 5; ++rep) {
    const ParticleSystem sys = sample_iid(f0, 10000, rng);
    ParticleSystem centered = sys;
    const Eigen::VectorXd mean = centered.velocities.rowwise().mean();
    centered.velocities.colwise() -= mean;
    const double factor =
        std::sqrt(sys.n() * 3.0 / centered.velocities.squaredNorm());
    CHECK(std::abs(factor - 1.0) <= 0.03);
  }
}

TEST_CASE("uniform sphere samples sit exactly on the manifold") {
  Rng rng(27);
  const ParticleSystem sys = sample_uniform_sphere(1000, 3, 3.0, rng);
  CHECK(sys.total_momentum().norm() <= 1e-10 * std::sqrt(1000 * 3.0));
  CHECK(sys.total_energy() == doctest::Approx(3000.0).epsilon(1e-12));
  CHECK(sys.sphere_constrained);
}

TEST_CASE("energy-only sphere skips centering") {
  Rng rng(28);
  const ParticleSystem sys = sample_uniform_sphere(100, 1, 1.0, rng, false);
  CHECK(sys.total_energy() == doctest::Approx(100.0).epsilon(1e-12));
  CHECK_FALSE(sys.momentum_constrained);
  CHECK(std::abs(sys.total_momentum()[0]) > 1e-6);  // not centered
}

TEST_CASE("sphere coordinate marginal approaches the gaussian") {
  Rng rng(29);
  const int n_draws = 10000;
  std::vector<double> first, seventh;
  for (int i = 0; i < n_draws; ++i) {
    const ParticleSystem sys = sample_uniform_sphere(1000, 3, 3.0, rng);
    first.push_back(sys.velocities(0, 0));
    seventh.push_back(sys.velocities(0, 6));
  }
  // One-sample distance to the unit gaussian CDF.
  std::vector<double> sorted = first;
  std::sort(sorted.begin(), sorted.end());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = 0.5 * std::erfc(-sorted[i] / std::sqrt(2.0));
    d = std::max(d, std::abs(double(i + 1) / n_draws - f));
    d = std::max(d, std::abs(double(i) / n_draws - f));
  }
  CHECK(d <= 0.02);
  // Exchangeability: particle 1 and particle 7 share their law.
  CHECK(ks_two_sample(first, seventh).p_value > 0.01);
}

TEST_CASE("fisher information closed forms") {
  CHECK(*fisher_information(OneParticleDensity::gaussian(1, 1.0)) ==
        doctest::Approx(1.0));
  CHECK(*fisher_information(OneParticleDensity::gaussian(3, 0.5)) ==
        doctest::Approx(6.0));
  CHECK(*fisher_information(OneParticleDensity::gaussian(2, 4.0)) ==
        doctest::Approx(0.5));
  CHECK_FALSE(fisher_information(OneParticleDensity::uniform_ball(3, 1.0)));
}

TEST_CASE("relaxing-family datum fisher information matches monte carlo") {
  const auto f0 = OneParticleDensity::bkw_datum(3, 3.0, 0.3);
  const double quad = *fisher_information(f0);
  Rng rng(30);
  double mc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) mc += f0.score(f0.sample(rng)).squaredNorm();
  mc /= n;
  CHECK(quad == doctest::Approx(mc).epsilon(0.03));
  // Zero excitation reduces to the gaussian value d/s.
  CHECK(*fisher_information(OneParticleDensity::bkw_datum(3, 3.0, 0.0)) ==
        doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("two-bump fisher information: quadrature vs monte carlo") {
  const auto f0 = OneParticleDensity::two_bump_with_energy(3, 2.0, 0.5, 3.0);
  const double quad = *fisher_information(f0);
  CHECK(quad > 0.0);
  Rng rng(31);
  double mc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) mc += f0.score(f0.sample(rng)).squaredNorm();
  mc /= n;
  CHECK(quad == doctest::Approx(mc).epsilon(0.03));

  // 1d variant goes through the line quadrature path.
  const auto g0 = OneParticleDensity::two_bump_with_energy(1, 1.0, 0.5, 1.0);
  const double quad1 = *fisher_information(g0);
  Rng rng2(32);
  double mc1 = 0.0;
  for (int i = 0; i < n; ++i) mc1 += g0.score(g0.sample(rng2)).squaredNorm();
  mc1 /= n;
  CHECK(quad1 == doctest::Approx(mc1).epsilon(0.03));
}

TEST_CASE("bkw datum moments line up with the profile") {
  const auto f0 = OneParticleDensity::bkw_datum(3, 3.0, 0.25);
  Rng rng(33);
  const ParticleSystem sys = sample_iid(f0, 200000, rng);
  const double m2 = sys.velocities.squaredNorm() / sys.n();
  CHECK(m2 == doctest::Approx(3.0).epsilon(0.02));
  double m4 = 0.0;
  for (int i = 0; i < sys.n(); ++i)
    m4 += std::pow(sys.velocities.col(i).squaredNorm(), 2);
  m4 /= sys.n();
  CHECK(m4 == doctest::Approx(f0.fourth_moment()).epsilon(0.03));
  CHECK(f0.fourth_moment() < 15.0);  // below the equilibrium value (d+2)/d E^2
}

}  // TEST_SUITE
