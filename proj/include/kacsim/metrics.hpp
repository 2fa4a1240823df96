#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kacsim/engine.hpp"
#include "kacsim/rng.hpp"

namespace kacsim {

enum class MarginalMode { Strict, Pooled };

// Samples of an order-ell marginal gathered across an ensemble of replicas.
// Strict mode keeps one tuple per run (independent samples); pooled mode takes
// disjoint tuples within each run as well (more samples, weakly correlated,
// flagged through `pooled` and handled by cluster bootstrap over runs).
struct EmpiricalMarginal {
  int order = 1;
  int dim = 1;
  double time = 0.0;
  bool pooled = false;
  bool sphere_constrained = false;
  double constraint_energy = 0.0;
  int n_runs = 0;
  Eigen::MatrixXd samples;            // (dim*order) x n
  std::vector<std::int32_t> run_of;   // provenance, size n

  int n() const { return int(samples.cols()); }
};

EmpiricalMarginal extract_marginal(const EnsembleSnapshot& ensemble, int ell,
                                   MarginalMode mode, int per_run_cap = 0);

// Exact empirical W1 between scalar sample sets (quantile-function distance;
// reduces to the mean sorted difference for equal counts).
double w1_sorted_1d(std::vector<double> xs, std::vector<double> ys);

// Exact W1 between equal-count point clouds via minimum-cost assignment.
// O(n^3): callers with n above the cap should use w1_sliced.
inline constexpr int kAssignmentCap = 512;
double w1_assignment(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys);

// Minimum total cost of a perfect assignment (square matrix).
double assignment_cost(const Eigen::MatrixXd& cost);

struct SlicedW1 {
  double value = 0.0;
  double direction_se = 0.0;  // Monte Carlo error over directions
  int projections = 0;
};

// Mean over random unit directions of the exact 1D projected W1.
SlicedW1 w1_sliced(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                   int projections, Rng& rng);

enum class W1Estimator { Auto, Sorted1d, Assignment, Sliced };

struct W1Options {
  W1Estimator estimator = W1Estimator::Auto;
  int projections = 128;
  int bootstrap_projections = 24;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 1;
};

struct MetricEstimate {
  double value = 0.0;
  double se = 0.0;
  std::string estimator;
};

// W1 between marginal samples and fixed reference samples, with a cluster
// bootstrap over runs for the error bar.
MetricEstimate w1_with_error(const EmpiricalMarginal& emp,
                             const Eigen::MatrixXd& reference,
                             const W1Options& options);

struct EntropyOptions {
  int k = 4;
  int batches = 20;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 1;
};

struct EntropyEstimate {
  double value = 0.0;
  double se = 0.0;
  bool jittered = false;
  int k = 4;
};

// Kozachenko-Leonenko differential entropy (nats).
EntropyEstimate differential_entropy_knn(const Eigen::MatrixXd& samples, int k);

// Relative entropy H(f|ref) = -h(f) - E_f[log ref], estimated from samples;
// error bar from a bootstrap over run batches.
EntropyEstimate relative_entropy_knn(
    const EmpiricalMarginal& emp,
    const std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>& log_ref,
    const EntropyOptions& options);

// Mean of |v|^power with cluster-bootstrap error.
MetricEstimate moment_with_error(const EmpiricalMarginal& emp, int power,
                                 int resamples, std::uint64_t seed);

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

KsResult ks_two_sample(std::vector<double> xs, std::vector<double> ys);

// sup over the output grid of W1(marginal_t, reference_t)/ell.
struct AlphaEstimate {
  double alpha = 0.0;
  double se = 0.0;
  double argmax_time = 0.0;
};

AlphaEstimate chaoticity_alpha(const std::vector<EmpiricalMarginal>& per_time,
                               const std::vector<Eigen::MatrixXd>& reference_per_time,
                               const W1Options& options);

// W1(marginal_t, stationary reference)/ell per output time. Requires
// sphere-constrained provenance: the stationary reference is the uniform
// measure on the constraint sphere.
struct BetaPoint {
  double time = 0.0;
  MetricEstimate w1;
};

std::vector<BetaPoint> relaxation_beta(const std::vector<EmpiricalMarginal>& per_time,
                                       const Eigen::MatrixXd& reference,
                                       const W1Options& options);

// Estimator metadata attached to every emitted value.
struct MetricReport {
  std::string metric;
  double time = 0.0;
  int ell = 0;
  double value = 0.0;
  double stderr_value = 0.0;
  std::int64_t n_samples = 0;
  std::string params;
  std::uint64_t seed = 0;
};

}  // namespace kacsim
