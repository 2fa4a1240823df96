#include "kacsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kacsim/kdtree.hpp"

namespace kacsim {

namespace {

constexpr double kEulerMascheroni = 0.57721566490153286060651209;

double digamma_integer(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("digamma: positive integer required");
  if (n <= 64) {
    double s = -kEulerMascheroni;
    for (std::int64_t i = 1; i < n; ++i) s += 1.0 / double(i);
    return s;
  }
  const double x = double(n);
  return std::log(x) - 0.5 / x - 1.0 / (12.0 * x * x) +
         1.0 / (120.0 * x * x * x * x);
}

double unit_ball_volume(int m) {
  return std::pow(M_PI, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

// Exact W1 between two weighted empirical measures on the line. Values must
// be sorted ascending; null weight pointers mean uniform weights.
double w1_walk(const double* xv, std::size_t nx, const double* xw, double x_total,
               const double* yv, std::size_t ny, const double* yw, double y_total) {
  if (nx == 0 || ny == 0) throw std::invalid_argument("w1: empty sample set");
  const double ux = 1.0 / (xw ? x_total : double(nx));
  const double uy = 1.0 / (yw ? y_total : double(ny));
  double dist = 0.0, fx = 0.0, fy = 0.0;
  double prev = std::min(xv[0], yv[0]);
  std::size_t i = 0, j = 0;
  while (i < nx || j < ny) {
    double t;
    if (i < nx && (j >= ny || xv[i] <= yv[j]))
      t = xv[i];
    else
      t = yv[j];
    dist += std::abs(fx - fy) * (t - prev);
    while (i < nx && xv[i] == t) fx += (xw ? xw[i] : 1.0) * ux, ++i;
    while (j < ny && yv[j] == t) fy += (yw ? yw[j] : 1.0) * uy, ++j;
    prev = t;
  }
  return dist;
}

struct SortedProjection {
  std::vector<double> values;
  std::vector<std::int32_t> run;  // empty when provenance is not needed
};

SortedProjection project_sorted(const Eigen::MatrixXd& samples,
                                const Eigen::VectorXd& direction,
                                const std::vector<std::int32_t>* run_of) {
  const int n = int(samples.cols());
  Eigen::VectorXd proj = samples.transpose() * direction;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return proj[a] < proj[b]; });
  SortedProjection out;
  out.values.resize(n);
  for (int i = 0; i < n; ++i) out.values[i] = proj[order[i]];
  if (run_of) {
    out.run.resize(n);
    for (int i = 0; i < n; ++i) out.run[i] = (*run_of)[order[i]];
  }
  return out;
}

// Multiplicity of each run under one bootstrap resample.
std::vector<std::int32_t> resample_runs(int n_runs, Rng& rng) {
  std::vector<std::int32_t> mult(n_runs, 0);
  for (int r = 0; r < n_runs; ++r) mult[rng.below(std::uint64_t(n_runs))] += 1;
  return mult;
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (xs.size() - 1.0));
}

}  // namespace

EmpiricalMarginal extract_marginal(const EnsembleSnapshot& ensemble, int ell,
                                   MarginalMode mode, int per_run_cap) {
  if (ensemble.runs.empty())
    throw std::invalid_argument("extract_marginal: empty ensemble");
  const int d = int(ensemble.runs[0].rows());
  const int n_particles = int(ensemble.runs[0].cols());
  if (ell < 1 || ell > n_particles)
    throw std::invalid_argument("extract_marginal: order must satisfy 1 <= ell <= N");

  int tuples = mode == MarginalMode::Strict ? 1 : n_particles / ell;
  if (per_run_cap > 0) tuples = std::min(tuples, per_run_cap);

  const int n_runs = int(ensemble.runs.size());
  EmpiricalMarginal out;
  out.order = ell;
  out.dim = d;
  out.time = ensemble.time;
  out.pooled = mode == MarginalMode::Pooled;
  out.sphere_constrained = ensemble.sphere_constrained;
  out.constraint_energy = ensemble.constraint_energy;
  out.n_runs = n_runs;
  out.samples.resize(d * ell, std::int64_t(tuples) * n_runs);
  out.run_of.resize(std::size_t(tuples) * n_runs);

  std::int64_t col = 0;
  for (int r = 0; r < n_runs; ++r) {
    const Eigen::MatrixXd& v = ensemble.runs[r];
    for (int k = 0; k < tuples; ++k, ++col) {
      for (int a = 0; a < ell; ++a)
        out.samples.col(col).segment(a * d, d) = v.col(k * ell + a);
      out.run_of[col] = r;
    }
  }
  return out;
}

double w1_sorted_1d(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty())
    throw std::invalid_argument("w1_sorted_1d: empty sample set");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  if (xs.size() == ys.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += std::abs(xs[i] - ys[i]);
    return s / double(xs.size());
  }
  return w1_walk(xs.data(), xs.size(), nullptr, 0.0, ys.data(), ys.size(),
                 nullptr, 0.0);
}

double assignment_cost(const Eigen::MatrixXd& cost) {
  const int n = int(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("assignment_cost: square matrix required");
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path (Jonker-Volgenant style), 1-based potentials.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    if (match[j]) total += cost(match[j] - 1, j - 1);
  return total;
}

double w1_assignment(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) {
  if (xs.rows() != ys.rows() || xs.cols() != ys.cols())
    throw std::invalid_argument("w1_assignment: sample sets must have equal shape");
  const int n = int(xs.cols());
  if (n == 0) throw std::invalid_argument("w1_assignment: empty sample set");
  if (n > kAssignmentCap)
    throw std::invalid_argument(
        "w1_assignment: sample count above cap; use w1_sliced");
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (xs.col(i) - ys.col(j)).norm();
  return assignment_cost(cost) / n;
}

SlicedW1 w1_sliced(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                   int projections, Rng& rng) {
  if (xs.rows() != ys.rows())
    throw std::invalid_argument("w1_sliced: dimension mismatch");
  const int m = int(xs.rows());
  SlicedW1 out;
  if (m == 1) {
    out.value = w1_sorted_1d(
        std::vector<double>(xs.data(), xs.data() + xs.cols()),
        std::vector<double>(ys.data(), ys.data() + ys.cols()));
    out.projections = 1;
    return out;
  }
  std::vector<double> per_dir(projections);
  for (int p = 0; p < projections; ++p) {
    const Eigen::VectorXd dir = uniform_direction(m, rng);
    const auto px = project_sorted(xs, dir, nullptr);
    const auto py = project_sorted(ys, dir, nullptr);
    per_dir[p] = w1_walk(px.values.data(), px.values.size(), nullptr, 0.0,
                         py.values.data(), py.values.size(), nullptr, 0.0);
  }
  out.value = std::accumulate(per_dir.begin(), per_dir.end(), 0.0) / projections;
  out.direction_se = sample_std(per_dir) / std::sqrt(double(projections));
  out.projections = projections;
  return out;
}

namespace {

MetricEstimate w1_sliced_with_bootstrap(const EmpiricalMarginal& emp,
                                        const Eigen::MatrixXd& reference,
                                        const W1Options& opt) {
  const int m = int(emp.samples.rows());
  Rng rng(opt.seed);
  const int n_dirs = m == 1 ? 1 : opt.projections;
  const int n_boot_dirs = m == 1 ? 1 : std::min(opt.bootstrap_projections, n_dirs);

  Eigen::MatrixXd dirs(m, n_dirs);
  if (m == 1)
    dirs(0, 0) = 1.0;
  else
    for (int p = 0; p < n_dirs; ++p) dirs.col(p) = uniform_direction(m, rng);

  // Shared run resamples across directions: cluster bootstrap of the whole
  // statistic.
  const int B = opt.bootstrap_resamples;
  std::vector<std::vector<std::int32_t>> mult(B);
  std::vector<double> totals(B, 0.0);
  std::vector<std::int64_t> run_sizes(emp.n_runs, 0);
  for (auto r : emp.run_of) run_sizes[r] += 1;
  for (int b = 0; b < B; ++b) {
    mult[b] = resample_runs(emp.n_runs, rng);
    double tot = 0.0;
    for (int r = 0; r < emp.n_runs; ++r) tot += double(mult[b][r]) * run_sizes[r];
    totals[b] = tot;
  }

  double point = 0.0;
  std::vector<double> boot(B, 0.0);
  std::vector<double> weights;
  for (int p = 0; p < n_dirs; ++p) {
    const auto px = project_sorted(emp.samples, dirs.col(p), &emp.run_of);
    const auto pr = project_sorted(reference, dirs.col(p), nullptr);
    point += w1_walk(px.values.data(), px.values.size(), nullptr, 0.0,
                     pr.values.data(), pr.values.size(), nullptr, 0.0);
    if (p < n_boot_dirs && emp.n_runs > 1) {
      weights.resize(px.values.size());
      for (int b = 0; b < B; ++b) {
        if (totals[b] <= 0.0) continue;  // degenerate resample
        const auto& mb = mult[b];
        for (std::size_t i = 0; i < weights.size(); ++i)
          weights[i] = double(mb[px.run[i]]);
        boot[b] += w1_walk(px.values.data(), px.values.size(), weights.data(),
                           totals[b], pr.values.data(), pr.values.size(),
                           nullptr, 0.0);
      }
    }
  }
  MetricEstimate est;
  est.value = point / n_dirs;
  if (emp.n_runs > 1) {
    for (int b = 0; b < B; ++b) boot[b] /= n_boot_dirs;
    est.se = sample_std(boot);
  }
  est.se = std::max(est.se, 1e-15);
  est.estimator = m == 1 ? "sorted1d"
                         : "sliced(P=" + std::to_string(n_dirs) +
                               ";Pb=" + std::to_string(n_boot_dirs) +
                               ";B=" + std::to_string(B) + ")";
  return est;
}

MetricEstimate w1_assignment_with_bootstrap(const EmpiricalMarginal& emp,
                                            const Eigen::MatrixXd& reference,
                                            const W1Options& opt) {
  if (emp.samples.cols() != reference.cols())
    throw std::invalid_argument("w1 assignment estimator needs matched counts");
  MetricEstimate est;
  est.value = w1_assignment(emp.samples, reference);
  const int n = int(emp.samples.cols());
  const int B = n <= 128 ? opt.bootstrap_resamples
                         : std::min(opt.bootstrap_resamples, 50);
  Rng rng(opt.seed);
  std::vector<double> boot(B);
  Eigen::MatrixXd res(emp.samples.rows(), n);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < n; ++i)
      res.col(i) = emp.samples.col(int(rng.below(std::uint64_t(n))));
    boot[b] = w1_assignment(res, reference);
  }
  est.se = std::max(sample_std(boot), 1e-15);
  est.estimator = "assignment(B=" + std::to_string(B) + ")";
  return est;
}

}  // namespace

MetricEstimate w1_with_error(const EmpiricalMarginal& emp,
                             const Eigen::MatrixXd& reference,
                             const W1Options& options) {
  if (emp.samples.rows() != reference.rows())
    throw std::invalid_argument("w1_with_error: dimension mismatch");
  W1Estimator kind = options.estimator;
  if (kind == W1Estimator::Auto)
    kind = emp.samples.rows() == 1 ? W1Estimator::Sorted1d : W1Estimator::Sliced;
  switch (kind) {
    case W1Estimator::Sorted1d:
    case W1Estimator::Sliced:
      return w1_sliced_with_bootstrap(emp, reference, options);
    case W1Estimator::Assignment:
      return w1_assignment_with_bootstrap(emp, reference, options);
    case W1Estimator::Auto:
      break;
  }
  throw std::logic_error("w1_with_error: unreachable");
}

EntropyEstimate differential_entropy_knn(const Eigen::MatrixXd& samples, int k) {
  const int n = int(samples.cols());
  const int m = int(samples.rows());
  if (n <= k || k < 1)
    throw std::invalid_argument("differential_entropy_knn: need n > k >= 1");
  EntropyEstimate out;
  out.k = k;

  Eigen::MatrixXd pts = samples;
  for (int attempt = 0; attempt < 2; ++attempt) {
    KdTree tree(pts);
    double sum_log = 0.0;
    bool degenerate = false;
    for (int i = 0; i < n && !degenerate; ++i) {
      const double r = tree.kth_neighbor_distance(i, k);
      if (r <= 0.0)
        degenerate = true;
      else
        sum_log += std::log(r);
    }
    if (!degenerate) {
      out.value = digamma_integer(n) - digamma_integer(k) +
                  std::log(unit_ball_volume(m)) + double(m) / n * sum_log;
      return out;
    }
    // Duplicate points: deduplicate by a deterministic relative jitter.
    out.jittered = true;
    Rng jitter_rng(0x6A177E5ULL);
    const double scale =
        1e-10 * std::max(1e-300, std::sqrt(pts.squaredNorm() / n));
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a) pts(a, i) += scale * jitter_rng.normal();
  }
  throw std::runtime_error("differential_entropy_knn: degenerate sample set");
}

EntropyEstimate relative_entropy_knn(
    const EmpiricalMarginal& emp,
    const std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>& log_ref,
    const EntropyOptions& options) {
  const int n = emp.n();
  EntropyEstimate point = differential_entropy_knn(emp.samples, options.k);
  double cross = 0.0;
  for (int i = 0; i < n; ++i) cross += log_ref(emp.samples.col(i));
  cross /= n;

  EntropyEstimate out;
  out.k = options.k;
  out.jittered = point.jittered;
  out.value = -point.value - cross;

  // Error bar: split runs into batches, one relative-entropy estimate per
  // batch, bootstrap the batch means. The batch estimates carry a larger
  // small-sample bias but the same sampling variability per sample.
  const int groups = std::max(2, std::min(options.batches, emp.n_runs));
  std::vector<std::vector<int>> members(groups);
  for (int i = 0; i < n; ++i) {
    const int g = int(std::int64_t(emp.run_of[i]) * groups / emp.n_runs);
    members[g].push_back(i);
  }
  std::vector<double> batch_values;
  for (const auto& cols : members) {
    if (int(cols.size()) <= options.k + 1) continue;
    Eigen::MatrixXd sub(emp.samples.rows(), cols.size());
    double sub_cross = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      sub.col(i) = emp.samples.col(cols[i]);
      sub_cross += log_ref(sub.col(i));
    }
    const EntropyEstimate h = differential_entropy_knn(sub, options.k);
    batch_values.push_back(-h.value - sub_cross / double(cols.size()));
    out.jittered = out.jittered || h.jittered;
  }
  if (batch_values.size() >= 2) {
    Rng rng(options.seed);
    const int g = int(batch_values.size());
    std::vector<double> boot(options.bootstrap_resamples);
    for (int b = 0; b < options.bootstrap_resamples; ++b) {
      double mean = 0.0;
      for (int i = 0; i < g; ++i) mean += batch_values[rng.below(g)];
      boot[b] = mean / g;
    }
    out.se = sample_std(boot);
  }
  out.se = std::max(out.se, 1e-15);
  return out;
}

MetricEstimate moment_with_error(const EmpiricalMarginal& emp, int power,
                                 int resamples, std::uint64_t seed) {
  const int n = emp.n();
  std::vector<double> run_sum(emp.n_runs, 0.0);
  std::vector<std::int64_t> run_n(emp.n_runs, 0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::pow(emp.samples.col(i).norm(), power);
    run_sum[emp.run_of[i]] += v;
    run_n[emp.run_of[i]] += 1;
    total += v;
  }
  MetricEstimate est;
  est.value = total / n;
  est.estimator = "moment(p=" + std::to_string(power) + ")";
  if (emp.n_runs > 1) {
    Rng rng(seed);
    std::vector<double> boot(resamples);
    for (int b = 0; b < resamples; ++b) {
      const auto mult = resample_runs(emp.n_runs, rng);
      double s = 0.0, cnt = 0.0;
      for (int r = 0; r < emp.n_runs; ++r) {
        s += mult[r] * run_sum[r];
        cnt += double(mult[r]) * run_n[r];
      }
      boot[b] = cnt > 0.0 ? s / cnt : est.value;
    }
    est.se = sample_std(boot);
  }
  est.se = std::max(est.se, 1e-15);
  return est;
}

KsResult ks_two_sample(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty())
    throw std::invalid_argument("ks_two_sample: empty sample set");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double nx = double(xs.size()), ny = double(ys.size());
  double d = 0.0, fx = 0.0, fy = 0.0;
  std::size_t i = 0, j = 0;
  while (i < xs.size() && j < ys.size()) {
    const double t = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == t) fx = double(++i) / nx;
    while (j < ys.size() && ys[j] == t) fy = double(++j) / ny;
    d = std::max(d, std::abs(fx - fy));
  }
  d = std::max(d, 1.0 - std::min(fx, fy));

  const double ne = nx * ny / (nx + ny);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * (k % 2 == 1 ? 1.0 : -1.0) *
                        std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

AlphaEstimate chaoticity_alpha(const std::vector<EmpiricalMarginal>& per_time,
                               const std::vector<Eigen::MatrixXd>& reference_per_time,
                               const W1Options& options) {
  if (per_time.empty() || per_time.size() != reference_per_time.size())
    throw std::invalid_argument("chaoticity_alpha: time grids do not match");
  AlphaEstimate out;
  for (std::size_t t = 0; t < per_time.size(); ++t) {
    W1Options opt = options;
    opt.seed = options.seed ^ (0x9E3779B97F4A7C15ULL * (t + 1));
    const MetricEstimate est =
        w1_with_error(per_time[t], reference_per_time[t], opt);
    const double ell = per_time[t].order;
    if (est.value / ell >= out.alpha) {
      out.alpha = est.value / ell;
      out.se = est.se / ell;
      out.argmax_time = per_time[t].time;
    }
  }
  return out;
}

std::vector<BetaPoint> relaxation_beta(const std::vector<EmpiricalMarginal>& per_time,
                                       const Eigen::MatrixXd& reference,
                                       const W1Options& options) {
  std::vector<BetaPoint> out;
  out.reserve(per_time.size());
  for (std::size_t t = 0; t < per_time.size(); ++t) {
    const auto& emp = per_time[t];
    if (!emp.sphere_constrained)
      throw std::invalid_argument(
          "relaxation_beta: free-mode ensembles are refused; the stationary "
          "reference is defined on the constraint sphere");
    W1Options opt = options;
    opt.seed = options.seed ^ (0x9E3779B97F4A7C15ULL * (t + 1));
    MetricEstimate est = w1_with_error(emp, reference, opt);
    est.value /= emp.order;
    est.se /= emp.order;
    out.push_back({emp.time, est});
  }
  return out;
}

}  // namespace kacsim
