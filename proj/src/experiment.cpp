#include "kacsim/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kacsim/report.hpp"

namespace kacsim {

namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t master, const char* tag, int a = 0,
                          int b = 0) {
  return fnv1a64(tag) ^ master ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(a + 1)) ^
         (0xC2B2AE3D27D4EB4FULL * std::uint64_t(b + 1));
}

W1Options w1_options(const SimConfig& config, std::uint64_t seed) {
  W1Options opt;
  switch (config.w1) {
    case W1Choice::Auto: opt.estimator = W1Estimator::Auto; break;
    case W1Choice::Sorted: opt.estimator = W1Estimator::Sorted1d; break;
    case W1Choice::Assignment: opt.estimator = W1Estimator::Assignment; break;
    case W1Choice::Sliced: opt.estimator = W1Estimator::Sliced; break;
  }
  opt.projections = config.projections;
  opt.bootstrap_projections = config.bootstrap_projections;
  opt.bootstrap_resamples = config.bootstrap;
  opt.seed = seed;
  return opt;
}

const char* reference_name(ReferenceKind kind) {
  switch (kind) {
    case ReferenceKind::Equilibrium: return "equilibrium";
    case ReferenceKind::Bkw: return "bkw";
    case ReferenceKind::GammaN: return "gamma_n";
    default: return "none";
  }
}

}  // namespace

OneParticleDensity make_datum(const SimConfig& c) {
  switch (c.initial) {
    case InitialKind::Gaussian:
      return OneParticleDensity::gaussian(c.dimension, c.energy / c.dimension);
    case InitialKind::UniformBall:
      return OneParticleDensity::uniform_ball(
          c.dimension, std::sqrt(c.energy * (c.dimension + 2.0) / c.dimension));
    case InitialKind::TwoBump:
      return OneParticleDensity::two_bump_with_energy(
          c.dimension, c.two_bump_separation, c.two_bump_weight, c.energy);
    case InitialKind::Bkw:
      return OneParticleDensity::bkw_datum(c.dimension, c.energy,
                                           c.bkw_excitation);
  }
  throw std::logic_error("make_datum: unreachable");
}

CollisionKernel make_kernel(const SimConfig& c) {
  switch (c.kernel) {
    case KernelChoice::Gmm:
      return CollisionKernel::cutoff_maxwell(c.dimension);
    case KernelChoice::Hs:
      return CollisionKernel::hard_spheres(c.dimension, c.hs_constant);
    case KernelChoice::Tmm:
      return CollisionKernel::true_maxwell(c.dimension, c.tmm_cutoff,
                                           c.tmm_constant);
  }
  throw std::logic_error("make_kernel: unreachable");
}

Schedule make_schedule(const SimConfig& c) {
  if (!c.geometric_grid) return Schedule::at_times(c.explicit_times);
  if (c.t_end <= 0.0) return Schedule::at_times({0.0});
  return Schedule::geometric(c.t_first, c.t_end, c.grid_points);
}

std::function<ParticleSystem(int, Rng&)> make_initial(const SimConfig& c) {
  const OneParticleDensity datum = make_datum(c);
  const bool sphere = c.conditioning == Conditioning::Sphere;
  const bool center = c.momentum_conserving();
  const double energy = c.energy;
  const int n = c.n_particles;
  return [datum, sphere, center, energy, n](int /*run*/, Rng& rng) {
    ParticleSystem sys = sample_iid(datum, n, rng);
    if (sphere) sys = condition_to_sphere(std::move(sys), energy, center);
    return sys;
  };
}

BkwProfile bkw_reference_profile(const SimConfig& c) {
  if (c.variant != ModelVariant::Boltzmann || c.kernel != KernelChoice::Gmm)
    throw std::invalid_argument(
        "bkw reference requires the boltzmann variant with the gmm kernel");
  const CollisionKernel kernel = CollisionKernel::cutoff_maxwell(c.dimension);
  switch (c.initial) {
    case InitialKind::Bkw: {
      BkwProfile p = BkwProfile::standard(c.dimension, c.energy);
      p.excitation = c.bkw_excitation;
      return p;
    }
    case InitialKind::Gaussian:
      return BkwProfile::matched(kernel, c.energy,
                                 make_datum(c).fourth_moment());
    case InitialKind::TwoBump:
    case InitialKind::UniformBall:
      // Fourth-moment matched member; exact in the isotropic modes, the
      // remaining discrepancy decays along the flow.
      return BkwProfile::matched(kernel, c.energy,
                                 make_datum(c).fourth_moment());
  }
  throw std::logic_error("bkw_reference_profile: unreachable");
}

const EmpiricalMarginal& MarginalStore::at(int order, int time_index) const {
  for (std::size_t oi = 0; oi < orders.size(); ++oi)
    if (orders[oi] == order) return marginals[oi][time_index];
  throw std::out_of_range("MarginalStore: order not collected");
}

MarginalStore collect_marginals(const SimConfig& config, int workers,
                                ExperimentTelemetry* telemetry,
                                bool keep_velocities) {
  const auto t_start = std::chrono::steady_clock::now();
  const CollisionKernel kernel = make_kernel(config);
  const Schedule schedule = make_schedule(config);
  const int n = config.n_particles;
  const int d = config.dimension;
  const int n_runs = config.n_runs;
  const bool sphere = config.conditioning == Conditioning::Sphere;

  MarginalStore store;
  store.times = schedule.output_times;
  store.orders = config.orders;
  store.marginals.resize(config.orders.size());

  std::vector<int> tuples(config.orders.size());
  for (std::size_t oi = 0; oi < config.orders.size(); ++oi) {
    const int ell = config.orders[oi];
    int t = config.mode == MarginalMode::Strict ? 1 : n / ell;
    if (config.per_run_cap > 0) t = std::min(t, config.per_run_cap);
    tuples[oi] = t;
    store.marginals[oi].resize(store.times.size());
    for (std::size_t ti = 0; ti < store.times.size(); ++ti) {
      EmpiricalMarginal& m = store.marginals[oi][ti];
      m.order = ell;
      m.dim = d;
      m.time = store.times[ti];
      m.pooled = config.mode == MarginalMode::Pooled;
      m.sphere_constrained = sphere;
      m.constraint_energy = config.energy;
      m.n_runs = n_runs;
      m.samples.resize(d * ell, std::int64_t(t) * n_runs);
      m.run_of.resize(std::size_t(t) * n_runs);
      for (int r = 0; r < n_runs; ++r)
        for (int k = 0; k < t; ++k) m.run_of[std::size_t(r) * t + k] = r;
    }
  }
  if (keep_velocities) {
    store.dumped.resize(store.times.size());
    for (std::size_t ti = 0; ti < store.times.size(); ++ti) {
      store.dumped[ti].time = store.times[ti];
      store.dumped[ti].sphere_constrained = sphere;
      store.dumped[ti].constraint_energy = config.energy;
      store.dumped[ti].runs.resize(n_runs);
    }
  }

  EngineOptions options;
  options.reproject_every = config.reproject_every;

  std::vector<RunTelemetry> run_tel;
  run_ensemble_stream(
      make_initial(config), kernel, schedule, n_runs, config.master_seed,
      workers,
      [&](int r, int ti, const Snapshot& snap) {
        for (std::size_t oi = 0; oi < store.orders.size(); ++oi) {
          const int ell = store.orders[oi];
          EmpiricalMarginal& m = store.marginals[oi][ti];
          for (int k = 0; k < tuples[oi]; ++k) {
            const std::int64_t col = std::int64_t(r) * tuples[oi] + k;
            for (int a = 0; a < ell; ++a)
              m.samples.col(col).segment(std::int64_t(a) * d, d) =
                  snap.velocities.col(k * ell + a);
          }
        }
        if (keep_velocities) store.dumped[ti].runs[r] = snap.velocities;
      },
      options, &run_tel);

  if (telemetry) {
    for (const auto& t : run_tel) {
      telemetry->accepted += t.accepted;
      telemetry->candidates += t.candidates;
      telemetry->max_cache_error =
          std::max(telemetry->max_cache_error, t.max_cache_error);
      telemetry->max_sphere_violation =
          std::max(telemetry->max_sphere_violation, t.max_sphere_violation);
    }
    telemetry->wall_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
  }
  return store;
}

Eigen::MatrixXd reference_samples(const SimConfig& config, ReferenceKind kind,
                                  const EmpiricalMarginal& emp,
                                  std::uint64_t seed) {
  const int d = config.dimension;
  const int ell = emp.order;
  const std::int64_t n = emp.n();
  Eigen::MatrixXd out(std::int64_t(d) * ell, n);
  Rng rng(seed);
  switch (kind) {
    case ReferenceKind::Equilibrium: {
      const Equilibrium gamma{d, config.energy};
      for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < ell; ++a)
          out.col(i).segment(std::int64_t(a) * d, d) = gamma.sample(rng);
      return out;
    }
    case ReferenceKind::Bkw: {
      const BkwProfile profile = bkw_reference_profile(config);
      for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < ell; ++a)
          out.col(i).segment(std::int64_t(a) * d, d) =
              profile.sample(emp.time, rng);
      return out;
    }
    case ReferenceKind::GammaN: {
      // Mirror the empirical per-run tuple structure with fresh draws of the
      // uniform sphere law.
      const int tuples = int(n / emp.n_runs);
      std::int64_t col = 0;
      for (int r = 0; r < emp.n_runs; ++r) {
        const ParticleSystem sys =
            sample_uniform_sphere(config.n_particles, d, config.energy, rng,
                                  config.momentum_conserving());
        for (int k = 0; k < tuples && col < n; ++k, ++col)
          for (int a = 0; a < ell; ++a)
            out.col(col).segment(std::int64_t(a) * d, d) =
                sys.velocities.col(k * ell + a);
      }
      return out;
    }
    default:
      throw std::logic_error("reference_samples: no reference kind");
  }
}

namespace {

// First line of every emitted file: enough to match it back to its manifest.
std::string provenance_line(const SimConfig& config, const char* open = "#",
                            const char* close = "") {
  return std::string(open) + " config_hash=" +
         hex64(fnv1a64(identity_text(config))) +
         " master_seed=" + std::to_string(config.master_seed) + " " + close +
         "\n";
}

std::string metrics_csv(const SimConfig& config,
                        const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out << provenance_line(config);
  out << "time,metric,ell,value,stderr,n_samples,params,seed\n";
  for (const auto& r : reports)
    out << format_double(r.time) << "," << r.metric << "," << r.ell << ","
        << format_double(r.value) << "," << format_double(r.stderr_value) << ","
        << r.n_samples << "," << r.params << "," << r.seed << "\n";
  return out.str();
}

std::vector<MetricReport> parse_metrics_csv(const std::string& text) {
  const auto as_double = [](const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw std::runtime_error("malformed number in metrics.csv: " + s);
    return v;
  };
  std::vector<MetricReport> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
  }
  // `line` now holds the header
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string field;
    MetricReport r;
    auto next = [&]() {
      if (!std::getline(ls, field, ','))
        throw std::runtime_error("malformed metrics.csv row: " + line);
      return field;
    };
    r.time = as_double(next());
    r.metric = next();
    r.ell = int(as_double(next()));
    r.value = as_double(next());
    r.stderr_value = as_double(next());
    r.n_samples = std::int64_t(as_double(next()));
    r.params = next();
    r.seed = std::stoull(next());
    out.push_back(std::move(r));
  }
  return out;
}

void sort_reports(std::vector<MetricReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const MetricReport& a, const MetricReport& b) {
                     if (a.time != b.time) return a.time < b.time;
                     if (a.metric != b.metric) return a.metric < b.metric;
                     return a.ell < b.ell;
                   });
}

std::string velocities_csv(const SimConfig& config, const MarginalStore& store) {
  std::ostringstream out;
  out << provenance_line(config);
  out << "run,time,particle";
  const int d = store.dumped.empty() || store.dumped[0].runs.empty()
                    ? 0
                    : int(store.dumped[0].runs[0].rows());
  for (int a = 0; a < d; ++a) out << ",v" << a;
  out << "\n";
  for (std::size_t ti = 0; ti < store.dumped.size(); ++ti) {
    const auto& ens = store.dumped[ti];
    for (std::size_t r = 0; r < ens.runs.size(); ++r)
      for (int p = 0; p < ens.runs[r].cols(); ++p) {
        out << r << "," << format_double(ens.time) << "," << p;
        for (int a = 0; a < d; ++a)
          out << "," << format_double(ens.runs[r](a, p));
        out << "\n";
      }
  }
  return out.str();
}

struct WrittenOutputs {
  std::vector<std::pair<std::string, std::string>> hashes;  // relpath -> hex
};

void write_output_file(const std::string& dir, const std::string& rel,
                       const std::string& bytes, WrittenOutputs& outputs) {
  write_file(dir + "/" + rel, bytes);
  outputs.hashes.emplace_back(rel, hex64(fnv1a64(bytes)));
}

void write_manifest(const std::string& dir, const std::string& kind,
                    const SimConfig& config, const WrittenOutputs& outputs,
                    const ExperimentTelemetry& telemetry, const json& args) {
  json m;
  m["schema"] = "kacsim-manifest-1";
  m["kind"] = kind;
  m["name"] = config.name;
  m["config"] = canonical_text(config);
  m["config_hash"] = hex64(fnv1a64(identity_text(config)));
  m["master_seed"] = config.master_seed;
  if (!args.is_null()) m["args"] = args;
  json files = json::object();
  for (const auto& [rel, hash] : outputs.hashes) files[rel] = hash;
  m["outputs"] = files;
  m["telemetry"] = {{"wall_seconds", telemetry.wall_seconds},
                    {"accepted_events", telemetry.accepted},
                    {"candidate_events", telemetry.candidates},
                    {"max_cache_error", telemetry.max_cache_error},
                    {"max_sphere_violation", telemetry.max_sphere_violation}};
  write_file(dir + "/manifest.json", m.dump(2) + "\n");
}

// Cached result of a previous identical run, if any.
std::optional<std::pair<std::vector<MetricReport>, ExperimentTelemetry>>
load_cached(const std::string& dir, const SimConfig& config) {
  const std::string manifest_path = dir + "/manifest.json";
  const std::string metrics_path = dir + "/metrics.csv";
  if (!file_exists(manifest_path) || !file_exists(metrics_path))
    return std::nullopt;
  try {
    const json m = json::parse(read_file(manifest_path));
    const SimConfig cached =
        parse_config(m.value("config", ""), manifest_path);
    if (identity_text(cached) != identity_text(config)) return std::nullopt;
    const std::string bytes = read_file(metrics_path);
    if (m["outputs"].value("metrics.csv", "") != hex64(fnv1a64(bytes)))
      return std::nullopt;
    ExperimentTelemetry tel;
    tel.wall_seconds = m["telemetry"].value("wall_seconds", 0.0);
    tel.accepted = m["telemetry"].value("accepted_events", std::uint64_t(0));
    tel.candidates = m["telemetry"].value("candidate_events", std::uint64_t(0));
    return std::make_pair(parse_metrics_csv(bytes), tel);
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

ExperimentResult run_experiment(const SimConfig& config, int workers,
                                bool write_outputs) {
  validate_config(config);
  ExperimentResult result;
  result.config = config;
  const auto t_start = std::chrono::steady_clock::now();

  MarginalStore store = collect_marginals(config, workers, &result.telemetry,
                                          config.dump_velocities);
  const ReferenceKind ref_kind = config.resolved_reference();
  const Equilibrium gamma{config.dimension, config.energy};

  for (std::size_t ti = 0; ti < store.times.size(); ++ti) {
    for (std::size_t oi = 0; oi < store.orders.size(); ++oi) {
      const int ell = store.orders[oi];
      const EmpiricalMarginal& emp = store.marginals[oi][ti];
      const std::string mode_params =
          std::string(emp.pooled ? "pooled" : "strict") +
          ";cap=" + std::to_string(config.per_run_cap);

      if (ell == 1) {
        for (int power : {2, 4}) {
          const std::uint64_t seed =
              derive_seed(config.master_seed, "moment", power, int(ti));
          const MetricEstimate est =
              moment_with_error(emp, power, config.bootstrap, seed);
          result.reports.push_back({"m" + std::to_string(power), emp.time, ell,
                                    est.value, est.se, emp.n(),
                                    est.estimator + ";" + mode_params, seed});
        }
      }

      if (ref_kind != ReferenceKind::None) {
        // A fourth-moment-matched oracle profile may only be a valid density
        // from some positive time on; reference rows before that are skipped.
        const bool ref_valid =
            ref_kind != ReferenceKind::Bkw ||
            bkw_reference_profile(config).valid_at(emp.time);
        if (ref_valid) {
          const std::uint64_t ref_seed =
              derive_seed(config.master_seed, "reference", ell, int(ti));
          const Eigen::MatrixXd ref =
              reference_samples(config, ref_kind, emp, ref_seed);
          // Time-independent estimator seed: common projection directions
          // and common bootstrap resamples across the grid, so consecutive
          // points share their estimator noise and curve shapes stay clean.
          const std::uint64_t seed = derive_seed(config.master_seed, "w1", ell);
          const MetricEstimate est =
              w1_with_error(emp, ref, w1_options(config, seed));
          result.reports.push_back(
              {std::string("w1_vs_") + reference_name(ref_kind), emp.time, ell,
               est.value, est.se, emp.n(), est.estimator + ";" + mode_params,
               seed});
        }
      }

      if (config.entropy && ell == 1) {
        EntropyOptions opts;
        opts.k = config.entropy_k;
        opts.bootstrap_resamples = config.bootstrap;
        opts.seed = derive_seed(config.master_seed, "entropy", ell, int(ti));
        const EntropyEstimate est = relative_entropy_knn(
            emp,
            [&](const Eigen::Ref<const Eigen::VectorXd>& v) {
              return gamma.log_density(v);
            },
            opts);
        result.reports.push_back(
            {"rel_entropy_vs_gamma", emp.time, ell, est.value, est.se, emp.n(),
             "knn_k=" + std::to_string(est.k) +
                 (est.jittered ? ";jittered" : "") + ";" + mode_params,
             opts.seed});
      }

      if (config.noise_floor && ti == 0 && ref_kind != ReferenceKind::None) {
        // Self-distance of two fresh reference draws at matched counts: the
        // resolution limit of the W1 estimator at these sample sizes.
        EmpiricalMarginal fake = emp;
        fake.samples = reference_samples(
            config, ref_kind, emp,
            derive_seed(config.master_seed, "floor_a", ell, int(ti)));
        const Eigen::MatrixXd other = reference_samples(
            config, ref_kind, emp,
            derive_seed(config.master_seed, "floor_b", ell, int(ti)));
        const std::uint64_t seed =
            derive_seed(config.master_seed, "w1_floor", ell, int(ti));
        const MetricEstimate est =
            w1_with_error(fake, other, w1_options(config, seed));
        result.reports.push_back({"w1_noise_floor", emp.time, ell, est.value,
                                  est.se, emp.n(),
                                  est.estimator + ";" + mode_params, seed});
      }
    }
  }
  sort_reports(result.reports);
  result.telemetry.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  if (write_outputs) {
    const std::string dir = config.out_dir + "/" + config.name;
    ensure_directory(dir);
    WrittenOutputs outputs;
    write_output_file(dir, "metrics.csv", metrics_csv(config, result.reports),
                      outputs);
    if (config.dump_velocities)
      write_output_file(dir, "velocities.csv", velocities_csv(config, store),
                        outputs);
    write_manifest(dir, "run", config, outputs, result.telemetry, json());
    result.out_path = dir;
    result.file_hashes = outputs.hashes;
  }
  return result;
}

namespace {

// Runs one sub-experiment or loads its cached identical result.
ExperimentResult run_or_load(const SimConfig& config, int workers) {
  const std::string dir = config.out_dir + "/" + config.name;
  if (auto cached = load_cached(dir, config)) {
    ExperimentResult result;
    result.config = config;
    result.reports = std::move(cached->first);
    result.telemetry = cached->second;
    result.out_path = dir;
    return result;
  }
  return run_experiment(config, workers, true);
}

const MetricReport& find_report(const std::vector<MetricReport>& reports,
                                const std::string& metric, int ell,
                                double time) {
  for (const auto& r : reports)
    if (r.metric == metric && r.ell == ell &&
        std::abs(r.time - time) <= 1e-12 * std::max(1.0, std::abs(time)))
      return r;
  throw std::runtime_error("missing metric row: " + metric + " ell=" +
                           std::to_string(ell) + " t=" + std::to_string(time));
}

}  // namespace

SweepResult sweep_n(const SimConfig& base, const std::vector<int>& n_list,
                    int workers) {
  if (n_list.empty()) throw ConfigError("sweep", 0, "empty N list");
  validate_config(base);

  SimConfig root = base;
  const std::string sweep_dir = base.out_dir + "/" + base.name;
  ensure_directory(sweep_dir);

  // Self-referenced sweeps compare against a run 8x larger than the sweep max.
  std::vector<std::vector<Eigen::MatrixXd>> self_ref;  // [order][time]
  SimConfig ref_config = base;
  if (base.sweep_reference == SweepReference::SelfRef) {
    ref_config.n_particles = 8 * *std::max_element(n_list.begin(), n_list.end());
    ref_config.out_dir = sweep_dir;
    ref_config.name = "n_ref_" + std::to_string(ref_config.n_particles);
    MarginalStore ref_store = collect_marginals(ref_config, workers);
    self_ref.resize(ref_store.orders.size());
    for (std::size_t oi = 0; oi < ref_store.orders.size(); ++oi)
      for (std::size_t ti = 0; ti < ref_store.times.size(); ++ti)
        self_ref[oi].push_back(ref_store.marginals[oi][ti].samples);
  } else if (base.resolved_reference() != ReferenceKind::Bkw) {
    if (base.kernel != KernelChoice::Gmm || base.variant != ModelVariant::Boltzmann)
      throw ConfigError("sweep", 0,
                        "oracle-referenced sweep requires the gmm kernel; use "
                        "sweep_reference = self");
  }

  SweepResult result;
  result.out_path = sweep_dir;
  WrittenOutputs outputs;
  ExperimentTelemetry total_tel;

  for (int n : n_list) {
    SimConfig sub = base;
    sub.n_particles = n;
    sub.out_dir = sweep_dir;
    sub.name = "n_" + std::to_string(n);
    if (base.sweep_reference == SweepReference::Oracle)
      sub.reference = ReferenceKind::Bkw;
    else
      sub.reference = ReferenceKind::None;
    validate_config(sub);

    if (base.sweep_reference == SweepReference::Oracle) {
      const ExperimentResult res = run_or_load(sub, workers);
      total_tel.accepted += res.telemetry.accepted;
      for (int ell : sub.orders) {
        AlphaRow row{n, ell, 0.0, 0.0, 0.0};
        bool any = false;
        for (const MetricReport& r : res.reports) {
          if (r.metric != "w1_vs_bkw" || r.ell != ell) continue;
          any = true;
          if (r.value / ell >= row.alpha) {
            row.alpha = r.value / ell;
            row.se = r.stderr_value / ell;
            row.argmax_time = r.time;
          }
        }
        if (!any)
          throw std::runtime_error(
              "sweep: no oracle-reference rows for order " + std::to_string(ell));
        result.rows.push_back(row);
      }
      const std::string rel = sub.name + "/metrics.csv";
      outputs.hashes.emplace_back(
          rel, hex64(fnv1a64(read_file(sweep_dir + "/" + rel))));
    } else {
      MarginalStore store = collect_marginals(sub, workers, &total_tel);
      for (std::size_t oi = 0; oi < store.orders.size(); ++oi) {
        const int ell = store.orders[oi];
        std::vector<Eigen::MatrixXd> refs;
        for (std::size_t ti = 0; ti < store.times.size(); ++ti) {
          const std::int64_t want = store.marginals[oi][ti].samples.cols();
          if (self_ref[oi][ti].cols() < want)
            throw std::runtime_error(
                "self reference has fewer samples than the sweep member");
          refs.push_back(self_ref[oi][ti].leftCols(want));
        }
        const AlphaEstimate est = chaoticity_alpha(
            store.marginals[oi], refs,
            w1_options(base, derive_seed(base.master_seed, "alpha", ell)));
        result.rows.push_back({n, ell, est.alpha, est.se, est.argmax_time});
      }
    }
  }

  std::ostringstream alpha_csv;
  alpha_csv << provenance_line(root);
  alpha_csv << "n,ell,alpha,stderr,argmax_time\n";
  for (const auto& row : result.rows)
    alpha_csv << row.n_particles << "," << row.ell << ","
              << format_double(row.alpha) << "," << format_double(row.se) << ","
              << format_double(row.argmax_time) << "\n";
  write_output_file(sweep_dir, "alpha.csv", alpha_csv.str(), outputs);

  if (base.emit_svg) {
    std::vector<SvgSeries> series;
    for (int ell : base.orders) {
      SvgSeries s;
      s.label = "order " + std::to_string(ell);
      for (const auto& row : result.rows)
        if (row.ell == ell)
          s.points.emplace_back(double(row.n_particles), std::max(row.alpha, 1e-12));
      series.push_back(std::move(s));
    }
    SvgOptions svg;
    svg.title = "Chaoticity distance vs particle count";
    svg.x_label = "N";
    svg.y_label = "sup_t W1 / order";
    svg.log_x = true;
    svg.log_y = true;
    write_output_file(sweep_dir, "alpha.svg",
                      provenance_line(root, "<!--", "-->") +
                          svg_line_chart(series, svg),
                      outputs);
  }

  json args;
  args["n_list"] = n_list;
  write_manifest(sweep_dir, "sweep-n", root, outputs, total_tel, args);
  return result;
}

RelaxationResult relaxation_study(const SimConfig& config, int workers) {
  if (config.conditioning != Conditioning::Sphere)
    throw ConfigError("relaxation", 0,
                      "relaxation study requires sphere conditioning (the "
                      "stationary reference lives on the sphere)");
  SimConfig c = config;
  if (c.reference == ReferenceKind::Auto) c.reference = ReferenceKind::GammaN;
  if (c.reference != ReferenceKind::GammaN)
    throw ConfigError("relaxation", 0,
                      "relaxation study uses the gamma_n reference");

  const ExperimentResult res = run_experiment(c, workers, false);
  RelaxationResult out;
  const std::string dir = c.out_dir + "/" + c.name;
  ensure_directory(dir);
  out.out_path = dir;

  for (double t : make_schedule(c).output_times) {
    BetaRow row;
    row.time = t;
    for (int ell : c.orders) {
      const MetricReport& r = find_report(res.reports, "w1_vs_gamma_n", ell, t);
      row.beta.push_back(r.value / ell);
      row.beta_se.push_back(r.stderr_value / ell);
    }
    if (c.entropy) {
      const MetricReport& h =
          find_report(res.reports, "rel_entropy_vs_gamma", 1, t);
      row.entropy = h.value;
      row.entropy_se = h.stderr_value;
    }
    row.m2 = find_report(res.reports, "m2", 1, t).value;
    row.m4 = find_report(res.reports, "m4", 1, t).value;
    out.rows.push_back(std::move(row));
  }

  WrittenOutputs outputs;
  write_output_file(dir, "metrics.csv", metrics_csv(c, res.reports), outputs);
  std::ostringstream csv;
  csv << provenance_line(c);
  csv << "time";
  for (int ell : c.orders) csv << ",beta_l" << ell << ",beta_l" << ell << "_se";
  csv << ",rel_entropy,rel_entropy_se,m2,m4\n";
  for (const auto& row : out.rows) {
    csv << format_double(row.time);
    for (std::size_t i = 0; i < row.beta.size(); ++i)
      csv << "," << format_double(row.beta[i]) << ","
          << format_double(row.beta_se[i]);
    csv << "," << format_double(row.entropy) << ","
        << format_double(row.entropy_se) << "," << format_double(row.m2) << ","
        << format_double(row.m4) << "\n";
  }
  write_output_file(dir, "relaxation.csv", csv.str(), outputs);

  if (c.emit_svg) {
    std::vector<SvgSeries> series;
    for (std::size_t i = 0; i < c.orders.size(); ++i) {
      SvgSeries s;
      s.label = "order " + std::to_string(c.orders[i]);
      for (const auto& row : out.rows)
        if (row.time > 0.0)
          s.points.emplace_back(row.time, std::max(row.beta[i], 1e-12));
      series.push_back(std::move(s));
    }
    SvgOptions svg;
    svg.title = "Distance to the sphere equilibrium vs time";
    svg.x_label = "t";
    svg.y_label = "W1 / order";
    svg.log_y = true;
    write_output_file(dir, "beta.svg",
                      provenance_line(c, "<!--", "-->") +
                          svg_line_chart(series, svg),
                      outputs);
  }
  write_manifest(dir, "relaxation", c, outputs, res.telemetry, json());
  return out;
}

CutoffResult cutoff_study(const SimConfig& base,
                          const std::vector<double>& eps_list, int workers) {
  if (base.kernel != KernelChoice::Tmm)
    throw ConfigError("cutoff", 0, "cutoff study requires the tmm kernel");
  if (base.conditioning != Conditioning::Sphere)
    throw ConfigError("cutoff", 0,
                      "cutoff study requires sphere conditioning for the "
                      "relaxation observable");
  if (eps_list.empty()) throw ConfigError("cutoff", 0, "empty cutoff list");

  const std::string dir = base.out_dir + "/" + base.name;
  ensure_directory(dir);
  CutoffResult result;
  result.out_path = dir;

  // Probe observables at the grid time nearest 1 (or t_end if shorter).
  const Schedule schedule = make_schedule(base);
  double probe = schedule.output_times.back();
  for (double t : schedule.output_times)
    if (std::abs(t - 1.0) < std::abs(probe - 1.0)) probe = t;
  result.probe_time = probe;

  WrittenOutputs outputs;
  ExperimentTelemetry total_tel;
  for (double eps : eps_list) {
    SimConfig sub = base;
    sub.tmm_cutoff = eps;
    sub.out_dir = dir;
    sub.name = "eps_" + format_double(eps);
    sub.reference = ReferenceKind::GammaN;
    validate_config(sub);
    const ExperimentResult res = run_or_load(sub, workers);
    total_tel.accepted += res.telemetry.accepted;

    CutoffRow row;
    row.epsilon = eps;
    row.accepted = res.telemetry.accepted;
    const MetricReport& m2 = find_report(res.reports, "m2", 1, probe);
    const MetricReport& m4 = find_report(res.reports, "m4", 1, probe);
    const MetricReport& b1 = find_report(res.reports, "w1_vs_gamma_n", 1, probe);
    row.m2 = m2.value;
    row.m2_se = m2.stderr_value;
    row.m4 = m4.value;
    row.m4_se = m4.stderr_value;
    row.beta1 = b1.value;
    row.beta1_se = b1.stderr_value;
    result.rows.push_back(row);
    const std::string rel = sub.name + "/metrics.csv";
    outputs.hashes.emplace_back(rel,
                                hex64(fnv1a64(read_file(dir + "/" + rel))));
  }

  std::ostringstream csv;
  csv << provenance_line(base);
  csv << "epsilon,accepted_events,m2,m2_se,m4,m4_se,beta1,beta1_se\n";
  for (const auto& row : result.rows)
    csv << format_double(row.epsilon) << "," << row.accepted << ","
        << format_double(row.m2) << "," << format_double(row.m2_se) << ","
        << format_double(row.m4) << "," << format_double(row.m4_se) << ","
        << format_double(row.beta1) << "," << format_double(row.beta1_se)
        << "\n";
  write_output_file(dir, "cutoff.csv", csv.str(), outputs);

  // Cauchy-style convergence indicator between successive cutoffs.
  std::ostringstream conv;
  conv << provenance_line(base);
  conv << "eps_coarse,eps_fine,metric,diff,two_sigma,converged\n";
  for (std::size_t i = 0; i + 1 < result.rows.size(); ++i) {
    const auto& a = result.rows[i];
    const auto& b = result.rows[i + 1];
    const auto emit = [&](const char* name, double va, double sa, double vb,
                          double sb) {
      const double diff = std::abs(va - vb);
      const double bar = 2.0 * (sa + sb);
      conv << format_double(a.epsilon) << "," << format_double(b.epsilon) << ","
           << name << "," << format_double(diff) << "," << format_double(bar)
           << "," << (diff <= bar ? 1 : 0) << "\n";
    };
    emit("m2", a.m2, a.m2_se, b.m2, b.m2_se);
    emit("m4", a.m4, a.m4_se, b.m4, b.m4_se);
    emit("beta1", a.beta1, a.beta1_se, b.beta1, b.beta1_se);
  }
  write_output_file(dir, "cutoff_convergence.csv", conv.str(), outputs);

  json args;
  args["eps_list"] = eps_list;
  write_manifest(dir, "cutoff-study", base, outputs, total_tel, args);
  return result;
}

bool replay_manifest(const std::string& manifest_path,
                     const std::string& work_dir, int workers,
                     std::string* detail) {
  const json m = json::parse(read_file(manifest_path));
  SimConfig config =
      parse_config(m.at("config").get<std::string>(), manifest_path);
  config.out_dir = work_dir;
  const std::string kind = m.value("kind", "run");

  if (kind == "run") {
    run_experiment(config, workers, true);
  } else if (kind == "relaxation") {
    relaxation_study(config, workers);
  } else if (kind == "sweep-n") {
    sweep_n(config, m.at("args").at("n_list").get<std::vector<int>>(), workers);
  } else if (kind == "cutoff-study") {
    cutoff_study(config, m.at("args").at("eps_list").get<std::vector<double>>(),
                 workers);
  } else {
    throw std::runtime_error("replay: unknown manifest kind " + kind);
  }

  const std::string base = work_dir + "/" + config.name;
  bool ok = true;
  std::string report;
  for (const auto& [rel, hash] : m.at("outputs").items()) {
    const std::string path = base + "/" + rel;
    if (!file_exists(path)) {
      ok = false;
      report += "missing " + rel + "\n";
      continue;
    }
    const std::string have = hex64(fnv1a64(read_file(path)));
    if (have != hash.get<std::string>()) {
      ok = false;
      report += "hash mismatch " + rel + " (expected " +
                hash.get<std::string>() + ", got " + have + ")\n";
    } else {
      report += "ok " + rel + "\n";
    }
  }
  if (detail) *detail = report;
  return ok;
}

}  // namespace kacsim
