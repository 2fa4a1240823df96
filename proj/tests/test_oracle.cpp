#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "kacsim/engine.hpp"
#include "kacsim/numeric.hpp"
#include "kacsim/oracle.hpp"

using namespace kacsim;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

// Tensor-product quadrature over [-L, L]^3.
double integrate3(const std::function<double(const Vector3d&)>& f, double L) {
  static const GaussLegendre gl(32);
  const int pieces = 2;
  const double h = 2.0 * L / pieces;
  double total = 0.0;
  std::vector<double> nodes, weights;
  for (int p = 0; p < pieces; ++p)
    for (std::size_t i = 0; i < gl.node.size(); ++i) {
      nodes.push_back(-L + h * (p + 0.5 * (1.0 + gl.node[i])));
      weights.push_back(0.5 * h * gl.weight[i]);
    }
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = 0; b < nodes.size(); ++b)
      for (std::size_t c = 0; c < nodes.size(); ++c)
        total += weights[a] * weights[b] * weights[c] *
                 f(Vector3d(nodes[a], nodes[b], nodes[c]));
  return total;
}

double radial_integral(const std::function<double(double)>& f, double r_max) {
  return adaptive_simpson(f, 0.0, r_max, 1e-11);
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("equilibrium density values and moments") {
  const Equilibrium g1{1, 1.0};
  VectorXd zero1 = VectorXd::Zero(1);
  CHECK(g1.density(zero1) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));

  const Equilibrium g3{3, 3.0};
  VectorXd zero3 = VectorXd::Zero(3);
  CHECK(g3.density(zero3) == doctest::Approx(std::pow(2.0 * M_PI, -1.5)));

  // Second moment by radial quadrature.
  const double sphere_area = 4.0 * M_PI;
  const double m2 = radial_integral(
      [&](double r) {
        VectorXd v = VectorXd::Zero(3);
        v[0] = r;
        return g3.density(v) * r * r * r * r * sphere_area;
      },
      14.0);
  CHECK(m2 == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(g3.fourth_moment() == doctest::Approx(15.0));
}

TEST_CASE("fourth-moment reference curve shape") {
  const auto gmm = CollisionKernel::cutoff_maxwell(3);
  const double m4_eq = 15.0;
  CHECK(m4_relaxation_rate(gmm) == doctest::Approx(1.0 / 3.0));
  CHECK(m4_relaxation_rate(CollisionKernel::cutoff_maxwell(2)) ==
        doctest::Approx(0.25));
  CHECK_THROWS_AS(m4_relaxation_rate(CollisionKernel::hard_spheres(3, 1.0)),
                  std::invalid_argument);

  // Equilibrium input is a fixed point; any input relaxes to it.
  for (double t : {0.0, 0.7, 3.0})
    CHECK(m4_reference(gmm, 3.0, m4_eq, t) == doctest::Approx(m4_eq));
  CHECK(m4_reference(gmm, 3.0, 12.0, 60.0) == doctest::Approx(m4_eq).epsilon(1e-8));
  CHECK(m4_reference(gmm, 3.0, 12.0, 0.0) == doctest::Approx(12.0));

  const MomentCurve curve = m4_reference_curve(gmm, 3.0, 12.0, {0.0, 1.0, 2.0});
  CHECK(curve.rate == doctest::Approx(1.0 / 3.0));
  CHECK(curve.m4.size() == 3);
  CHECK(curve.m4[1] < curve.m4[2]);  // monotone toward equilibrium
}

TEST_CASE("fourth-moment rate: particle fit against direct collision-integral monte carlo") {
  const auto gmm = CollisionKernel::cutoff_maxwell(3);
  const double energy = 3.0;
  const double m4_eq = 15.0;
  const double excitation = 0.3;

  BkwProfile f0 = BkwProfile::standard(3, energy);
  f0.excitation = excitation;
  const double m4_0 = f0.fourth_moment(0.0);

  // Route 1: direct Monte Carlo of the collision generator acting on |v|^4
  // at the non-equilibrium law f0.
  Rng rng(61);
  double sum = 0.0, sum2 = 0.0;
  const std::int64_t n_mc = 40000000;
  for (std::int64_t i = 0; i < n_mc; ++i) {
    const VectorXd v = f0.sample(0.0, rng);
    const VectorXd w = f0.sample(0.0, rng);
    const VectorXd sigma = uniform_direction(3, rng);
    const VectorXd center = 0.5 * (v + w);
    const VectorXd post = center + 0.5 * (v - w).norm() * sigma;
    const double delta = std::pow(post.squaredNorm(), 2) - std::pow(v.squaredNorm(), 2);
    sum += delta;
    sum2 += delta * delta;
  }
  const double ddt_m4 = sum / double(n_mc);
  const double se =
      std::sqrt((sum2 / n_mc - ddt_m4 * ddt_m4) / double(n_mc));
  const double lambda_mc = ddt_m4 / (m4_eq - m4_0);
  CHECK(se / ddt_m4 < 0.01);

  // Route 2: fit the relaxation rate from an N-particle simulation.
  const int n_particles = 10000;
  const int n_runs = 400;
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> m4_sum(grid.size(), 0.0);
  const auto make = [&](int, Rng& r) {
    ParticleSystem sys;
    sys.velocities.resize(3, n_particles);
    for (int i = 0; i < n_particles; ++i)
      sys.velocities.col(i) = f0.sample(0.0, r);
    sys.refresh_caches();
    return sys;
  };
  std::vector<std::vector<double>> m4_acc(grid.size());
  run_ensemble_stream(
      make, gmm, Schedule::at_times(grid), n_runs, 6161, 1,
      [&](int, int ti, const Snapshot& snap) {
        double m4 = 0.0;
        for (int i = 0; i < n_particles; ++i)
          m4 += std::pow(snap.velocities.col(i).squaredNorm(), 2);
        m4_acc[ti].push_back(m4 / n_particles);
      });
  std::vector<double> y(grid.size());
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double mean = 0.0;
    for (double m : m4_acc[t]) mean += m;
    mean /= m4_acc[t].size();
    y[t] = std::log(m4_eq - mean);
  }
  // Least-squares slope of log-deficit vs time.
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    st += grid[t];
    sy += y[t];
    stt += grid[t] * grid[t];
    sty += grid[t] * y[t];
  }
  const double n_pts = double(grid.size());
  const double lambda_fit =
      -(n_pts * sty - st * sy) / (n_pts * stt - st * st);

  // The two independent routes must agree, and both pin the closed form.
  CHECK(std::abs(lambda_fit - lambda_mc) <= 0.03 * lambda_mc);
  CHECK(lambda_mc == doctest::Approx(m4_relaxation_rate(gmm)).epsilon(0.02));
  CHECK(lambda_fit == doctest::Approx(m4_relaxation_rate(gmm)).epsilon(0.03));
}

TEST_CASE("relaxing profile: normalization, moments, equilibrium limit") {
  const BkwProfile p = BkwProfile::standard(3, 3.0);
  CHECK(p.excitation == doctest::Approx(0.4));
  CHECK(p.rate == doctest::Approx(1.0 / 6.0));
  CHECK(p.min_valid_time() == 0.0);

  const double sphere_area = 4.0 * M_PI;
  for (double t : {0.0, 0.5, 2.0}) {
    const double mass = radial_integral(
        [&](double r) {
          VectorXd v = VectorXd::Zero(3);
          v[0] = r;
          return p.density(t, v) * r * r * sphere_area;
        },
        16.0);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
    const double m2 = radial_integral(
        [&](double r) {
          VectorXd v = VectorXd::Zero(3);
          v[0] = r;
          return p.density(t, v) * r * r * r * r * sphere_area;
        },
        16.0);
    CHECK(m2 == doctest::Approx(3.0).epsilon(1e-8));
  }

  // Fourth moment tracks the moment reference built from its own m4(0).
  const auto gmm = CollisionKernel::cutoff_maxwell(3);
  const double m4_0 = p.fourth_moment(0.0);
  for (double t : {0.5, 1.0, 3.0})
    CHECK(p.fourth_moment(t) ==
          doctest::Approx(m4_reference(gmm, 3.0, m4_0, t)).epsilon(1e-9));

  // Late-time profile converges to the gaussian equilibrium pointwise.
  const double t_late = std::log(p.excitation / 1e-7) / p.rate;
  const Equilibrium gamma{3, 3.0};
  double sup = 0.0;
  for (double r = 0.0; r <= 6.0; r += 0.05) {
    VectorXd v = VectorXd::Zero(3);
    v[0] = r;
    sup = std::max(sup, std::abs(p.density(t_late, v) - gamma.density(v)));
  }
  CHECK(sup <= 1e-6);
}

TEST_CASE("profile density is rejected outside its validity window") {
  const auto gmm = CollisionKernel::cutoff_maxwell(3);
  // Strongly sub-equilibrium fourth moment: excitation above 2/(d+2).
  const BkwProfile p = BkwProfile::matched(gmm, 3.0, 10.0);
  CHECK(p.excitation > 0.4);
  CHECK(p.min_valid_time() > 0.0);
  VectorXd v = VectorXd::Zero(3);
  CHECK_THROWS_AS(p.density(0.0, v), std::domain_error);
  CHECK(p.density(p.min_valid_time() + 0.01, v) >= 0.0);
  CHECK_THROWS_AS(BkwProfile::matched(gmm, 3.0, 16.0), std::domain_error);
  CHECK(BkwProfile::matched(gmm, 3.0, 15.0).excitation ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("profile sampler agrees with the density") {
  BkwProfile p = BkwProfile::standard(3, 3.0);
  Rng rng(62);
  const double t = 0.8;
  double m2 = 0.0, m4 = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double q = p.sample(t, rng).squaredNorm();
    m2 += q;
    m4 += q * q;
  }
  CHECK(m2 / n == doctest::Approx(3.0).epsilon(0.01));
  CHECK(m4 / n == doctest::Approx(p.fourth_moment(t)).epsilon(0.02));
}

TEST_CASE("weak-form residual of the profile under the collision generator") {
  // Plugging the profile into the equation: for gaussian bump test functions
  // phi, d/dt int phi f_t must equal the Monte Carlo collision integral
  // E[phi(v') - phi(v)] within its statistical error.
  const BkwProfile p = BkwProfile::standard(3, 3.0);
  const double t_star = 0.5;
  const double w2 = 1.0;  // bump width^2

  Rng rng(63);
  for (const Vector3d& c : {Vector3d(0, 0, 0), Vector3d(1.2, -0.6, 0.3)}) {
    const auto phi = [&](const Vector3d& v) {
      return std::exp(-0.5 * (v - c).squaredNorm() / w2);
    };
    // d/dt of the exact integral via the shape parameter.
    const auto integral_at = [&](double K) {
      BkwProfile q = p;
      // Freeze the profile at shape K by shifting time 0.
      q.excitation = 1.0 - K;
      return integrate3(
          [&](const Vector3d& v) { return q.density(0.0, v) * phi(v); }, 9.0);
    };
    const double K_star = p.shape(t_star);
    const double dK = 1e-6;
    const double dF_dK = (integral_at(K_star + dK) - integral_at(K_star - dK)) /
                         (2.0 * dK);
    const double K_prime = p.rate * (1.0 - K_star);
    const double lhs = dF_dK * K_prime;

    double sum = 0.0, sum2 = 0.0;
    const std::int64_t n_mc = 20000000;
    for (std::int64_t i = 0; i < n_mc; ++i) {
      const VectorXd v = p.sample(t_star, rng);
      const VectorXd w = p.sample(t_star, rng);
      const VectorXd sigma = uniform_direction(3, rng);
      const VectorXd post = 0.5 * (v + w) + 0.5 * (v - w).norm() * sigma;
      const double delta = phi(post) - phi(v);
      sum += delta;
      sum2 += delta * delta;
    }
    const double rhs = sum / double(n_mc);
    const double se = std::sqrt(
        std::max(0.0, sum2 / n_mc - rhs * rhs) / double(n_mc));
    CHECK(std::abs(lhs - rhs) <= 5.0 * se + 1e-9);
    // The signal itself must be resolved, not buried in noise.
    CHECK(std::abs(lhs) > 20.0 * se);
  }
}

TEST_CASE("relative entropy of the profile is non-increasing") {
  const BkwProfile p = BkwProfile::standard(3, 3.0);
  const Equilibrium gamma{3, 3.0};
  const double sphere_area = 4.0 * M_PI;
  const auto entropy_at = [&](double t) {
    return radial_integral(
        [&](double r) {
          VectorXd v = VectorXd::Zero(3);
          v[0] = r;
          const double f = p.density(t, v);
          if (f <= 1e-300) return 0.0;
          return f * std::log(f / gamma.density(v)) * r * r * sphere_area;
        },
        16.0);
  };
  double prev = entropy_at(0.0);
  CHECK(prev > 0.0);
  for (int k = 1; k < 50; ++k) {
    const double h = entropy_at(0.12 * k);
    CHECK(h <= prev + 1e-10);
    prev = h;
  }
  CHECK(prev < 0.02 * entropy_at(0.0));
  CHECK(entropy_at(45.0) <= 1e-6);
}

TEST_CASE("family member free function uses the maximal valid excitation") {
  VectorXd v = VectorXd::Zero(3);
  v[0] = 1.0;
  const BkwProfile p = BkwProfile::standard(3, 3.0);
  CHECK(bkw_profile(3.0, 3, 0.7, v) == doctest::Approx(p.density(0.7, v)));
}

}  // TEST_SUITE
