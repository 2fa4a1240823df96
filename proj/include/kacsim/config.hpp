#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kacsim/metrics.hpp"

namespace kacsim {

enum class ModelVariant { Boltzmann, Kac1d };
enum class KernelChoice { Gmm, Hs, Tmm };
enum class InitialKind { Gaussian, UniformBall, TwoBump, Bkw };
enum class Conditioning { Free, Sphere };
enum class ReferenceKind { Auto, None, Equilibrium, Bkw, GammaN };
enum class W1Choice { Auto, Sorted, Assignment, Sliced };
enum class SweepReference { Oracle, SelfRef };

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) +
                                          ": " + what
                                    : source + ": " + what) {}
};

// Full experiment description; the user surface of every CLI subcommand.
// Parsed from a sectioned key = value text file (see README for the schema),
// serialized verbatim into every output for provenance.
struct SimConfig {
  // [model]
  ModelVariant variant = ModelVariant::Boltzmann;
  int dimension = 3;
  KernelChoice kernel = KernelChoice::Gmm;
  double hs_constant = 1.0;
  double tmm_cutoff = 0.1;
  double tmm_constant = 0.0;  // 0 = normalize truncated mass at cutoff 0.1 to 1

  // [initial]
  InitialKind initial = InitialKind::Gaussian;
  double energy = 3.0;  // total second moment of f0
  Conditioning conditioning = Conditioning::Free;
  double two_bump_separation = 2.0;
  double two_bump_weight = 0.5;
  double bkw_excitation = 0.3;

  // [run]
  int n_particles = 100;
  int n_runs = 100;
  double t_end = 10.0;
  bool geometric_grid = true;
  double t_first = 0.1;
  int grid_points = 12;
  std::vector<double> explicit_times;
  std::uint64_t master_seed = 1;
  std::uint64_t reproject_every = 0;

  // [metrics]
  std::vector<int> orders = {1, 2};
  MarginalMode mode = MarginalMode::Pooled;
  int per_run_cap = 256;
  W1Choice w1 = W1Choice::Auto;
  int projections = 128;
  int bootstrap_projections = 24;
  int bootstrap = 200;
  int entropy_k = 4;
  bool entropy = true;
  ReferenceKind reference = ReferenceKind::Auto;
  bool noise_floor = false;
  SweepReference sweep_reference = SweepReference::Oracle;

  // [output]
  std::string out_dir = "out";
  bool dump_velocities = false;
  bool emit_svg = false;

  std::string name = "experiment";

  // Reference kind after resolving Auto against the rest of the config.
  ReferenceKind resolved_reference() const;
  bool momentum_conserving() const { return variant == ModelVariant::Boltzmann; }
};

SimConfig parse_config(const std::string& text, const std::string& source_name);
SimConfig load_config_file(const std::string& path);
void validate_config(const SimConfig& config, const std::string& source = "config");

// Normalized round-trippable serialization; hashed for provenance.
std::string canonical_text(const SimConfig& config);
// The experiment identity: canonical form without the [output] section, so
// the same run replayed into a scratch directory hashes identically.
std::string identity_text(const SimConfig& config);

}  // namespace kacsim
