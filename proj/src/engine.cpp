#include "kacsim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace kacsim {

Schedule Schedule::at_times(std::vector<double> times) {
  if (times.empty()) throw std::invalid_argument("schedule: no output times");
  if (times.front() != 0.0)
    throw std::invalid_argument("schedule: first output time must be 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("schedule: output times must be strictly increasing");
  Schedule s;
  s.t_end = times.back();
  s.output_times = std::move(times);
  return s;
}

Schedule Schedule::geometric(double t_first, double t_end, int points) {
  if (points < 2 || !(t_first > 0.0) || !(t_end > t_first))
    throw std::invalid_argument("schedule: bad geometric grid parameters");
  std::vector<double> times{0.0};
  const double ratio = std::pow(t_end / t_first, 1.0 / (points - 2));
  for (int k = 0; k < points - 1; ++k)
    times.push_back(t_first * std::pow(ratio, k));
  times.back() = t_end;  // exact endpoint
  return at_times(std::move(times));
}

MajorantState MajorantState::for_system(const ParticleSystem& system,
                                        int refresh_factor) {
  MajorantState m;
  m.max_speed = system.velocities.colwise().norm().maxCoeff();
  m.refresh_interval = std::uint64_t(refresh_factor) * std::uint64_t(system.n());
  return m;
}

namespace {

double draw_wait(const ParticleSystem& system, const CollisionKernel& kernel,
                 const MajorantState& majorant, Rng& rng) {
  const double n = system.n();
  const double total_bound = 0.5 * (n - 1.0) * majorant.pair_rate_bound(kernel);
  if (!(total_bound > 0.0)) return std::numeric_limits<double>::infinity();
  return rng.exponential(total_bound);
}

// Pair pick + thinning + collision. Returns acceptance.
bool apply_candidate(ParticleSystem& system, const CollisionKernel& kernel,
                     MajorantState& majorant, Rng& rng,
                     const EngineOptions& options,
                     RunTelemetry* telemetry = nullptr) {
  const int n = system.n();
  int i = int(rng.below(n));
  int j = int(rng.below(n - 1));
  if (j >= i) ++j;

  auto vi = system.velocities.col(i);
  auto vj = system.velocities.col(j);
  const double bound = majorant.pair_rate_bound(kernel);

  if (kernel.kind == KernelKind::HardSpheres) {
    const double rate = kernel.hs_constant * (vi - vj).norm();
    if (rate < bound && rng.uniform() * bound >= rate) return false;
  }
  // Constant-rate kernels: the thinning probability is exactly 1.

  Eigen::VectorXd pair_momentum;
  double pair_energy = 0.0;
  const bool track = telemetry && options.track_conservation;
  if (track) {
    pair_momentum = vi + vj;
    pair_energy = vi.squaredNorm() + vj.squaredNorm();
  }

  if (system.dim() == 1) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const auto [a, b] = kac_rotate(vi(0), vj(0), theta);
    vi(0) = a;
    vj(0) = b;
  } else {
    const Eigen::VectorXd u = vi - vj;
    const double un = u.norm();
    if (un > 0.0) {
      const Eigen::VectorXd sigma = sample_sigma(kernel, u / un, rng);
      collide_pair_in_place(vi, vj, sigma);
      if (kernel.kind == KernelKind::HardSpheres)
        majorant.max_speed =
            std::max({majorant.max_speed, vi.norm(), vj.norm()});
    }
    // Coincident velocities under a constant-rate kernel: the collision is
    // applied as written and is the identity.
  }

  if (track) {
    telemetry->max_pair_momentum_delta =
        std::max(telemetry->max_pair_momentum_delta,
                 (vi + vj - pair_momentum).norm());
    telemetry->max_pair_energy_delta = std::max(
        telemetry->max_pair_energy_delta,
        std::abs(vi.squaredNorm() + vj.squaredNorm() - pair_energy));
  }

  system.collision_count += 1;
  majorant.accepted_since_refresh += 1;

  if (majorant.accepted_since_refresh >= majorant.refresh_interval) {
    if (!system.velocities.allFinite())
      throw SimulationError("non-finite velocity detected",
                            system.collision_count);
    majorant.max_speed = system.velocities.colwise().norm().maxCoeff();
    majorant.accepted_since_refresh = 0;
  }

  if (options.reproject_every > 0 && system.sphere_constrained &&
      system.collision_count % options.reproject_every == 0) {
    system = condition_to_sphere(std::move(system), system.constraint_energy,
                                 system.momentum_constrained);
    // The projection rescales every speed; restore the bound exactly.
    majorant.max_speed = system.velocities.colwise().norm().maxCoeff();
  }
  return true;
}

}  // namespace

StepOutcome step(ParticleSystem& system, const CollisionKernel& kernel,
                 MajorantState& majorant, Rng& rng,
                 const EngineOptions& options) {
  if (system.n() < 2)
    throw std::invalid_argument("step: need at least two particles");
  StepOutcome out;
  out.elapsed = draw_wait(system, kernel, majorant, rng);
  if (!std::isfinite(out.elapsed)) return out;  // absorbing state, no event
  system.time += out.elapsed;
  out.accepted = apply_candidate(system, kernel, majorant, rng, options);
  return out;
}

std::vector<Snapshot> run(ParticleSystem system, const CollisionKernel& kernel,
                          const Schedule& schedule, Rng& rng,
                          const EngineOptions& options,
                          RunTelemetry* telemetry) {
  if (system.n() < 2)
    throw std::invalid_argument("run: need at least two particles");
  if (schedule.output_times.empty())
    throw std::invalid_argument("run: empty schedule");

  RunTelemetry local;
  MajorantState majorant =
      MajorantState::for_system(system, options.majorant_refresh_factor);

  std::vector<Snapshot> snapshots;
  snapshots.reserve(schedule.output_times.size());
  std::size_t next = 0;

  const auto emit = [&](double at) {
    if (!system.velocities.allFinite())
      throw SimulationError("non-finite velocity at output time",
                            system.collision_count);
    local.max_cache_error = std::max(local.max_cache_error, system.cache_error());
    const double violation = system.sphere_violation();
    local.max_sphere_violation = std::max(local.max_sphere_violation, violation);
    if (violation > options.drift_tolerance)
      throw SimulationError("constraint drift beyond tolerance",
                            system.collision_count);
    snapshots.push_back({at, system.collision_count, system.velocities});
  };

  while (next < schedule.output_times.size()) {
    const double wait = draw_wait(system, kernel, majorant, rng);
    const double t_next = system.time + wait;
    while (next < schedule.output_times.size() &&
           schedule.output_times[next] < t_next) {
      emit(schedule.output_times[next]);
      ++next;
    }
    if (next >= schedule.output_times.size()) break;
    system.time = t_next;
    local.candidates += 1;
    if (apply_candidate(system, kernel, majorant, rng, options, &local))
      local.accepted += 1;
  }

  if (telemetry) *telemetry = local;
  return snapshots;
}

void run_ensemble_stream(
    const std::function<ParticleSystem(int, Rng&)>& make_initial,
    const CollisionKernel& kernel, const Schedule& schedule, int n_runs,
    std::uint64_t master_seed, int workers, const SnapshotSink& sink,
    const EngineOptions& options, std::vector<RunTelemetry>* telemetry) {
  if (n_runs < 1) throw std::invalid_argument("run_ensemble: need at least one run");
  if (telemetry) telemetry->assign(n_runs, {});

  std::atomic<int> next_run{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  int first_error_run = std::numeric_limits<int>::max();
  std::mutex error_mutex;

  const auto worker = [&]() {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const int r = next_run.fetch_add(1, std::memory_order_relaxed);
      if (r >= n_runs) return;
      try {
        Rng rng = Rng::for_run(master_seed, std::uint64_t(r));
        ParticleSystem system = make_initial(r, rng);
        RunTelemetry tel;
        const auto snaps = run(system, kernel, schedule, rng, options, &tel);
        for (std::size_t ti = 0; ti < snaps.size(); ++ti)
          sink(r, int(ti), snaps[ti]);
        if (telemetry) (*telemetry)[r] = tel;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (r < first_error_run) {
          first_error_run = r;
          try {
            throw;
          } catch (const SimulationError& e) {
            first_error = std::make_exception_ptr(
                SimulationError(std::string(e.what()) + " (run " +
                                    std::to_string(r) + ")",
                                e.event_index, r));
          } catch (...) {
            first_error = std::current_exception();
          }
        }
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };

  const int pool = std::max(1, std::min(workers, n_runs));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (int k = 0; k < pool; ++k) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<EnsembleSnapshot> run_ensemble(
    const std::function<ParticleSystem(int, Rng&)>& make_initial,
    const CollisionKernel& kernel, const Schedule& schedule, int n_runs,
    std::uint64_t master_seed, int workers, const EngineOptions& options) {
  std::vector<EnsembleSnapshot> ensemble(schedule.output_times.size());
  for (std::size_t ti = 0; ti < ensemble.size(); ++ti) {
    ensemble[ti].time = schedule.output_times[ti];
    ensemble[ti].runs.resize(n_runs);
  }
  std::atomic<bool> flagged{false};
  bool sphere = false;
  double e0 = 0.0;
  std::mutex flag_mutex;
  run_ensemble_stream(
      [&](int r, Rng& rng) {
        ParticleSystem s = make_initial(r, rng);
        if (!flagged.exchange(true)) {
          std::lock_guard<std::mutex> lock(flag_mutex);
          sphere = s.sphere_constrained;
          e0 = s.constraint_energy;
        }
        return s;
      },
      kernel, schedule, n_runs, master_seed, workers,
      [&](int r, int ti, const Snapshot& snap) {
        ensemble[ti].runs[r] = snap.velocities;
      },
      options);
  for (auto& e : ensemble) {
    e.sphere_constrained = sphere;
    e.constraint_energy = e0;
  }
  return ensemble;
}

}  // namespace kacsim
