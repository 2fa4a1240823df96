#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kacsim/config.hpp"
#include "kacsim/engine.hpp"
#include "kacsim/init.hpp"
#include "kacsim/metrics.hpp"
#include "kacsim/oracle.hpp"

namespace kacsim {

OneParticleDensity make_datum(const SimConfig& config);
CollisionKernel make_kernel(const SimConfig& config);
Schedule make_schedule(const SimConfig& config);
std::function<ParticleSystem(int, Rng&)> make_initial(const SimConfig& config);

// Oracle curve the run is compared against when the reference kind is Bkw:
// exact for gaussian/bkw initial data, fourth-moment matched for two_bump.
BkwProfile bkw_reference_profile(const SimConfig& config);

struct ExperimentTelemetry {
  double wall_seconds = 0.0;
  std::uint64_t accepted = 0;
  std::uint64_t candidates = 0;
  double max_cache_error = 0.0;
  double max_sphere_violation = 0.0;
};

// Marginal samples per (order, output time) collected across the ensemble.
struct MarginalStore {
  std::vector<double> times;
  std::vector<int> orders;
  std::vector<std::vector<EmpiricalMarginal>> marginals;  // [order][time]
  std::vector<EnsembleSnapshot> dumped;                   // only when dumping

  const EmpiricalMarginal& at(int order, int time_index) const;
};

MarginalStore collect_marginals(const SimConfig& config, int workers,
                                ExperimentTelemetry* telemetry = nullptr,
                                bool keep_velocities = false);

// Reference sample cloud matched in shape to `emp`.
Eigen::MatrixXd reference_samples(const SimConfig& config, ReferenceKind kind,
                                  const EmpiricalMarginal& emp,
                                  std::uint64_t seed);

struct ExperimentResult {
  SimConfig config;
  std::vector<MetricReport> reports;
  ExperimentTelemetry telemetry;
  std::string out_path;
  std::vector<std::pair<std::string, std::string>> file_hashes;
};

// run_ensemble + metrics per the config; writes metrics.csv and
// manifest.json under <out_dir>/<name> unless write_outputs is false.
ExperimentResult run_experiment(const SimConfig& config, int workers,
                                bool write_outputs = true);

struct AlphaRow {
  int n_particles = 0;
  int ell = 0;
  double alpha = 0.0;
  double se = 0.0;
  double argmax_time = 0.0;
};

struct SweepResult {
  std::vector<AlphaRow> rows;
  std::string out_path;
};

// Chaoticity sweep: one experiment per N (cached per-N and restartable),
// then alpha(N) = sup over the grid of W1(marginal, reference)/ell.
SweepResult sweep_n(const SimConfig& base, const std::vector<int>& n_list,
                    int workers);

struct BetaRow {
  double time = 0.0;
  std::vector<double> beta, beta_se;  // per configured order
  double entropy = 0.0, entropy_se = 0.0;
  double m2 = 0.0, m4 = 0.0;
};

struct RelaxationResult {
  std::vector<BetaRow> rows;
  std::string out_path;
};

RelaxationResult relaxation_study(const SimConfig& config, int workers);

struct CutoffRow {
  double epsilon = 0.0;
  std::uint64_t accepted = 0;
  double m2 = 0.0, m2_se = 0.0;
  double m4 = 0.0, m4_se = 0.0;
  double beta1 = 0.0, beta1_se = 0.0;  // order-1 relaxation distance at t ~ 1
};

struct CutoffResult {
  std::vector<CutoffRow> rows;
  std::string out_path;
  double probe_time = 1.0;
};

CutoffResult cutoff_study(const SimConfig& base,
                          const std::vector<double>& eps_list, int workers);

// Re-run the manifest's embedded config and compare output hashes.
bool replay_manifest(const std::string& manifest_path,
                     const std::string& work_dir, int workers,
                     std::string* detail);

}  // namespace kacsim
