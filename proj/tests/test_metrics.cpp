#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kacsim/kdtree.hpp"
#include "kacsim/metrics.hpp"
#include "kacsim/oracle.hpp"

using namespace kacsim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double brute_force_w1(const MatrixXd& xs, const MatrixXd& ys) {
  const int n = int(xs.cols());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += (xs.col(i) - ys.col(perm[i])).norm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

MatrixXd random_cloud(int dim, int n, Rng& rng, double shift = 0.0) {
  MatrixXd m(dim, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < dim; ++a) m(a, i) = rng.normal() + shift;
  return m;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = double(k);
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  const double mean = (n - 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  return cov / std::sqrt(va * vb);
}

EnsembleSnapshot gaussian_ensemble(int n_runs, int n, int d, Rng& rng) {
  EnsembleSnapshot ens;
  ens.time = 0.0;
  for (int r = 0; r < n_runs; ++r) {
    MatrixXd v(d, n);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) v(a, i) = rng.normal();
    ens.runs.push_back(std::move(v));
  }
  return ens;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("1d transport distance basics") {
  CHECK(w1_sorted_1d({1.0, 2.0, 3.0}, {3.0, 1.0, 2.0}) == 0.0);
  CHECK(w1_sorted_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  // Against the exhaustive coupling on a 2x2 instance.
  MatrixXd xs(1, 2), ys(1, 2);
  xs << 0.0, 2.0;
  ys << 1.0, 1.0;
  CHECK(w1_sorted_1d({0.0, 2.0}, {1.0, 1.0}) ==
        doctest::Approx(brute_force_w1(xs, ys)));
  CHECK(w1_sorted_1d({0.0, 2.0}, {1.0, 1.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(w1_sorted_1d({}, {1.0}), std::invalid_argument);
}

TEST_CASE("1d transport with unequal counts is the quantile distance") {
  // F puts mass 1/2 at {0, 1}; G mass 1 at 1/2: distance = 1/2.
  CHECK(w1_sorted_1d({0.0, 1.0}, {0.5}) == doctest::Approx(0.5));
  // Piecewise check against a fine equal-count resampling.
  Rng rng(71);
  std::vector<double> xs(300), ys(500);
  for (auto& x : xs) x = rng.normal();
  for (auto& y : ys) y = rng.normal() + 0.3;
  std::vector<double> xs_match, ys_match;
  for (int i = 0; i < 3000; ++i) {
    xs_match.push_back(xs[i % xs.size()]);
    ys_match.push_back(ys[i % ys.size()]);
  }
  CHECK(w1_sorted_1d(xs, ys) ==
        doctest::Approx(w1_sorted_1d(xs_match, ys_match)).epsilon(1e-12));
}

TEST_CASE("assignment distance: permutation, translation, brute force") {
  Rng rng(72);
  const MatrixXd xs = random_cloud(3, 12, rng);
  MatrixXd perm(3, 12);
  for (int i = 0; i < 12; ++i) perm.col(i) = xs.col((i * 5 + 3) % 12);
  CHECK(w1_assignment(xs, perm) == doctest::Approx(0.0).epsilon(1e-14));

  VectorXd c(3);
  c << 0.3, -0.4, 1.2;
  MatrixXd shifted = xs.colwise() + c;
  CHECK(w1_assignment(xs, shifted) == doctest::Approx(c.norm()).epsilon(1e-12));

  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + int(rng.below(6));  // up to 7
    const int m = 1 + int(rng.below(3));
    const MatrixXd a = random_cloud(m, n, rng);
    const MatrixXd b = random_cloud(m, n, rng, 0.5);
    CHECK(w1_assignment(a, b) ==
          doctest::Approx(brute_force_w1(a, b)).epsilon(1e-12));
  }

  MatrixXd big = random_cloud(2, kAssignmentCap + 1, rng);
  CHECK_THROWS_WITH_AS(w1_assignment(big, big),
                       doctest::Contains("w1_sliced"), std::invalid_argument);
}

TEST_CASE("assignment equals the sorted formula in one dimension") {
  Rng rng(73);
  const MatrixXd xs = random_cloud(1, 64, rng);
  const MatrixXd ys = random_cloud(1, 64, rng, 0.7);
  const double sorted = w1_sorted_1d(
      std::vector<double>(xs.data(), xs.data() + 64),
      std::vector<double>(ys.data(), ys.data() + 64));
  CHECK(w1_assignment(xs, ys) == doctest::Approx(sorted).epsilon(1e-12));
}

TEST_CASE("metric axioms on sample clouds") {
  Rng rng(74);
  const MatrixXd a = random_cloud(2, 32, rng);
  const MatrixXd b = random_cloud(2, 32, rng, 0.4);
  const MatrixXd c = random_cloud(2, 32, rng, -0.6);
  CHECK(w1_assignment(a, a) == 0.0);
  CHECK(w1_assignment(a, b) ==
        doctest::Approx(w1_assignment(b, a)).epsilon(1e-12));
  CHECK(w1_assignment(a, c) <=
        w1_assignment(a, b) + w1_assignment(b, c) + 1e-12);
}

TEST_CASE("sliced distance: degenerate cases and fidelity to the exact value") {
  Rng rng(75);
  const MatrixXd xs = random_cloud(3, 256, rng);
  Rng dir_rng(7575);
  const SlicedW1 self = w1_sliced(xs, xs, 16, dir_rng);
  CHECK(self.value == 0.0);

  // d = 1 reduces to the sorted estimator exactly.
  const MatrixXd a1 = random_cloud(1, 100, rng);
  const MatrixXd b1 = random_cloud(1, 100, rng, 0.2);
  Rng dir2(76);
  CHECK(w1_sliced(a1, b1, 8, dir2).value ==
        doctest::Approx(w1_assignment(a1, b1)).epsilon(1e-12));

  // Ranking of instance difficulty matches the exact assignment distance.
  std::vector<double> exact, sliced;
  for (int k = 0; k < 20; ++k) {
    const double shift = 0.05 * k;
    const MatrixXd a = random_cloud(3, 256, rng);
    const MatrixXd b = random_cloud(3, 256, rng, shift);
    exact.push_back(w1_assignment(a, b));
    Rng dirs(1000 + k);
    sliced.push_back(w1_sliced(a, b, 64, dirs).value);
  }
  CHECK(spearman(exact, sliced) >= 0.95);
}

TEST_CASE("kd-tree neighbor distances match brute force") {
  Rng rng(77);
  const MatrixXd pts = random_cloud(3, 500, rng);
  const KdTree tree(pts);
  for (int q = 0; q < 500; q += 17) {
    std::vector<double> d2;
    for (int i = 0; i < 500; ++i)
      if (i != q) d2.push_back((pts.col(i) - pts.col(q)).squaredNorm());
    std::sort(d2.begin(), d2.end());
    for (int k : {1, 4, 8})
      CHECK(tree.kth_neighbor_distance(q, k) ==
            doctest::Approx(std::sqrt(d2[k - 1])).epsilon(1e-12));
  }
}

TEST_CASE("entropy estimator hits gaussian closed forms") {
  Rng rng(78);
  const MatrixXd samples = random_cloud(1, 10000, rng);
  const EntropyEstimate h = differential_entropy_knn(samples, 4);
  CHECK(h.value == doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E)).epsilon(0.03 / 1.4189));
  CHECK_FALSE(h.jittered);
  CHECK_THROWS_AS(differential_entropy_knn(random_cloud(1, 3, rng), 4),
                  std::invalid_argument);
}

TEST_CASE("entropy estimator bias shrinks with sample size") {
  const double truth = 0.5 * std::log(2.0 * M_PI * M_E);
  Rng rng(79);
  std::vector<double> errs;
  for (int n : {1000, 10000, 100000}) {
    const MatrixXd samples = random_cloud(1, n, rng);
    errs.push_back(std::abs(differential_entropy_knn(samples, 4).value - truth));
  }
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
}

TEST_CASE("duplicate samples take the jitter path") {
  MatrixXd samples(1, 40);
  for (int i = 0; i < 40; ++i) samples(0, i) = double(i % 5);
  const EntropyEstimate h = differential_entropy_knn(samples, 4);
  CHECK(h.jittered);
  CHECK(std::isfinite(h.value));
}

TEST_CASE("relative entropy calibration against gaussian truths") {
  const Equilibrium gamma{1, 1.0};
  const auto log_ref = [&](const Eigen::Ref<const VectorXd>& v) {
    return gamma.log_density(v);
  };
  EntropyOptions opts;
  opts.seed = 80;

  EmpiricalMarginal emp;
  emp.order = 1;
  emp.dim = 1;
  emp.n_runs = 100;
  Rng rng(81);
  emp.samples = random_cloud(1, 10000, rng);
  emp.run_of.resize(10000);
  for (int i = 0; i < 10000; ++i) emp.run_of[i] = i / 100;

  const EntropyEstimate same = relative_entropy_knn(emp, log_ref, opts);
  CHECK(std::abs(same.value) <= 0.03);

  for (int i = 0; i < 10000; ++i) emp.samples(0, i) *= std::sqrt(2.0);
  const EntropyEstimate wide = relative_entropy_knn(emp, log_ref, opts);
  const double truth = 0.5 * (2.0 - 1.0 - std::log(2.0));
  CHECK(wide.value == doctest::Approx(truth).epsilon(0.03 / truth));
  CHECK(wide.se > 0.0);
}

TEST_CASE("marginal extraction: strict, pooled, caps, provenance") {
  Rng rng(82);
  EnsembleSnapshot ens = gaussian_ensemble(50, 8, 3, rng);
  ens.sphere_constrained = false;

  const EmpiricalMarginal strict = extract_marginal(ens, 8, MarginalMode::Strict);
  CHECK(strict.n() == 50);
  CHECK(strict.samples.rows() == 24);
  for (int a = 0; a < 8; ++a)
    CHECK(strict.samples.col(7).segment(3 * a, 3) == ens.runs[7].col(a));

  const EmpiricalMarginal pooled = extract_marginal(ens, 2, MarginalMode::Pooled);
  CHECK(pooled.n() == 50 * 4);
  CHECK(pooled.run_of.front() == 0);
  CHECK(pooled.run_of.back() == 49);

  const EmpiricalMarginal capped =
      extract_marginal(ens, 2, MarginalMode::Pooled, 3);
  CHECK(capped.n() == 150);

  CHECK_THROWS_AS(extract_marginal(ens, 9, MarginalMode::Strict),
                  std::invalid_argument);
}

TEST_CASE("first and second particle share their law (exchangeability)") {
  Rng rng(83);
  const EnsembleSnapshot ens = gaussian_ensemble(4000, 4, 2, rng);
  std::vector<double> first, second;
  for (const auto& v : ens.runs) {
    first.push_back(v(0, 0));
    second.push_back(v(0, 1));
  }
  CHECK(ks_two_sample(first, second).p_value > 0.01);
}

TEST_CASE("pooled and strict moment estimates agree within errors") {
  Rng rng(84);
  const EnsembleSnapshot ens = gaussian_ensemble(400, 64, 3, rng);
  const auto strict = extract_marginal(ens, 1, MarginalMode::Strict);
  const auto pooled = extract_marginal(ens, 1, MarginalMode::Pooled);
  const MetricEstimate ms = moment_with_error(strict, 2, 200, 85);
  const MetricEstimate mp = moment_with_error(pooled, 2, 200, 86);
  CHECK(std::abs(ms.value - mp.value) <= 2.0 * (ms.se + mp.se));
  CHECK(mp.se < ms.se);  // pooling shrinks the error bar here
}

TEST_CASE("two-sample ks test separates laws and accepts equals") {
  Rng rng(87);
  std::vector<double> xs(3000), ys(3000), zs(3000);
  for (auto& x : xs) x = rng.normal();
  for (auto& y : ys) y = rng.normal();
  for (auto& z : zs) z = rng.normal() + 0.25;
  CHECK(ks_two_sample(xs, ys).p_value > 0.01);
  CHECK(ks_two_sample(xs, zs).p_value < 1e-4);
}

TEST_CASE("w1 with bootstrap errors is deterministic given its seed") {
  Rng rng(88);
  const EnsembleSnapshot ens = gaussian_ensemble(60, 16, 3, rng);
  const auto emp = extract_marginal(ens, 1, MarginalMode::Pooled);
  const MatrixXd ref = random_cloud(3, emp.n(), rng);
  W1Options opt;
  opt.projections = 32;
  opt.bootstrap_projections = 8;
  opt.seed = 89;
  const MetricEstimate a = w1_with_error(emp, ref, opt);
  const MetricEstimate b = w1_with_error(emp, ref, opt);
  CHECK(a.value == b.value);
  CHECK(a.se == b.se);
  CHECK(a.se > 0.0);
}

TEST_CASE("chaoticity distance vanishes on self-reference") {
  Rng rng(90);
  std::vector<EmpiricalMarginal> per_time;
  std::vector<MatrixXd> refs;
  for (int t = 0; t < 3; ++t) {
    EnsembleSnapshot ens = gaussian_ensemble(40, 8, 2, rng);
    ens.time = t;
    per_time.push_back(extract_marginal(ens, 2, MarginalMode::Pooled));
    refs.push_back(per_time.back().samples);
  }
  W1Options opt;
  opt.projections = 16;
  opt.seed = 91;
  const AlphaEstimate est = chaoticity_alpha(per_time, refs, opt);
  CHECK(est.alpha == 0.0);
}

TEST_CASE("relaxation distance refuses free-mode ensembles") {
  Rng rng(92);
  EnsembleSnapshot ens = gaussian_ensemble(20, 8, 3, rng);
  ens.sphere_constrained = false;
  std::vector<EmpiricalMarginal> per_time{
      extract_marginal(ens, 1, MarginalMode::Pooled)};
  const MatrixXd ref = random_cloud(3, per_time[0].n(), rng);
  W1Options opt;
  CHECK_THROWS_AS(relaxation_beta(per_time, ref, opt), std::invalid_argument);

  // At time zero the distance equals a direct estimator call by definition.
  ens.sphere_constrained = true;
  per_time[0] = extract_marginal(ens, 1, MarginalMode::Pooled);
  opt.projections = 16;
  opt.seed = 93;
  const auto beta = relaxation_beta(per_time, ref, opt);
  W1Options direct = opt;
  direct.seed = opt.seed ^ (0x9E3779B97F4A7C15ULL * 1);
  const MetricEstimate d = w1_with_error(per_time[0], ref, direct);
  CHECK(beta[0].w1.value == doctest::Approx(d.value).epsilon(1e-15));
}

}  // TEST_SUITE
