#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kacsim/init.hpp"
#include "kacsim/model.hpp"
#include "kacsim/rng.hpp"

namespace kacsim {

struct Schedule {
  std::vector<double> output_times;  // strictly increasing, starts at 0
  double t_end = 0.0;

  static Schedule at_times(std::vector<double> times);
  // {0} followed by `points - 1` geometrically spaced times in [t_first, t_end].
  static Schedule geometric(double t_first, double t_end, int points);
};

struct EngineOptions {
  std::uint64_t reproject_every = 0;  // re-project to the sphere every K accepted events (0 = never)
  int majorant_refresh_factor = 4;    // exact majorant recompute every factor*N accepted events
  double drift_tolerance = 1e-8;      // relative sphere drift treated as failure
  bool track_conservation = false;    // record per-event pair momentum/energy deltas
};

// Running upper bound on max_i |v_i| backing the null-collision majorant for
// the speed-dependent hard-sphere rate. Monotone updates on the two changed
// particles keep it valid between exact recomputations.
struct MajorantState {
  double max_speed = 0.0;
  std::uint64_t refresh_interval = 0;
  std::uint64_t accepted_since_refresh = 0;

  static MajorantState for_system(const ParticleSystem& system,
                                  int refresh_factor);

  // Bound on every pair rate.
  double pair_rate_bound(const CollisionKernel& kernel) const {
    return kernel.kind == KernelKind::HardSpheres
               ? 2.0 * kernel.hs_constant * max_speed
               : pair_rate(kernel, 0.0);
  }
};

struct StepOutcome {
  double elapsed = 0.0;
  bool accepted = false;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::uint64_t event_index,
                  int run_index = -1)
      : std::runtime_error(what), event_index(event_index), run_index(run_index) {}
  std::uint64_t event_index;
  int run_index;
};

// One candidate event of the uniformized chain: exponential waiting time at
// the majorant total rate (N-1)/2 * rate_bound, a uniformly chosen pair,
// thinning at the true pair rate, and on acceptance a deflection draw plus
// the exact pair collision (rotation in the 1D model).
StepOutcome step(ParticleSystem& system, const CollisionKernel& kernel,
                 MajorantState& majorant, Rng& rng,
                 const EngineOptions& options = {});

struct Snapshot {
  double time = 0.0;
  std::uint64_t collisions = 0;
  Eigen::MatrixXd velocities;
};

struct RunTelemetry {
  std::uint64_t accepted = 0;
  std::uint64_t candidates = 0;
  double max_cache_error = 0.0;
  double max_sphere_violation = 0.0;
  // Per-event conservation deltas, filled when track_conservation is set.
  double max_pair_momentum_delta = 0.0;
  double max_pair_energy_delta = 0.0;
};

// Simulate to t_end, returning the state at each requested output time.
// Snapshots are exact: the state is piecewise constant between events.
std::vector<Snapshot> run(ParticleSystem system, const CollisionKernel& kernel,
                          const Schedule& schedule, Rng& rng,
                          const EngineOptions& options = {},
                          RunTelemetry* telemetry = nullptr);

// Velocities of independent replicas at one common output time.
struct EnsembleSnapshot {
  double time = 0.0;
  bool sphere_constrained = false;
  double constraint_energy = 0.0;
  std::vector<Eigen::MatrixXd> runs;
};

// Called from worker threads; distinct (run, time) pairs only, so a sink
// writing to preallocated per-run slots needs no locking.
using SnapshotSink =
    std::function<void(int run_index, int time_index, const Snapshot&)>;

// R independent replicas with per-run streams derived from master_seed by run
// index. Results depend only on (inputs, master_seed), not on worker count.
void run_ensemble_stream(
    const std::function<ParticleSystem(int run_index, Rng& rng)>& make_initial,
    const CollisionKernel& kernel, const Schedule& schedule, int n_runs,
    std::uint64_t master_seed, int workers, const SnapshotSink& sink,
    const EngineOptions& options = {},
    std::vector<RunTelemetry>* telemetry = nullptr);

std::vector<EnsembleSnapshot> run_ensemble(
    const std::function<ParticleSystem(int run_index, Rng& rng)>& make_initial,
    const CollisionKernel& kernel, const Schedule& schedule, int n_runs,
    std::uint64_t master_seed, int workers = 1,
    const EngineOptions& options = {});

}  // namespace kacsim
