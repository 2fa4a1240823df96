#include "kacsim/config.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace kacsim {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using KeyTable = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

KeyTable tokenize(const std::string& text, const std::string& source) {
  KeyTable table;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(source, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(source, line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line_no, "empty key");
    if (section.empty())
      throw ConfigError(source, line_no, "key outside any [section]");
    const std::string full = section + "." + key;
    if (table.count(full))
      throw ConfigError(source, line_no, "duplicate key " + full);
    table[full] = {value, line_no, false};
  }
  return table;
}

class Reader {
 public:
  Reader(KeyTable& table, const std::string& source)
      : table_(table), source_(source) {}

  bool has(const std::string& key) const { return table_.count(key) > 0; }

  template <class F>
  void with(const std::string& key, const F& f) {
    auto it = table_.find(key);
    if (it == table_.end()) return;
    it->second.used = true;
    try {
      f(it->second.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(source_, it->second.line,
                        key + ": " + std::string(e.what()));
    }
  }

  void string_value(const std::string& key, std::string& out) {
    with(key, [&](const std::string& v) { out = v; });
  }

  void double_value(const std::string& key, double& out) {
    with(key, [&](const std::string& v) { out = parse_double(v); });
  }

  void int_value(const std::string& key, int& out) {
    with(key, [&](const std::string& v) { out = int(parse_i64(v)); });
  }

  void u64_value(const std::string& key, std::uint64_t& out) {
    with(key, [&](const std::string& v) { out = parse_u64(v); });
  }

  void bool_value(const std::string& key, bool& out) {
    with(key, [&](const std::string& v) {
      if (v == "true" || v == "on" || v == "1") out = true;
      else if (v == "false" || v == "off" || v == "0") out = false;
      else throw std::runtime_error("expected true/false");
    });
  }

  template <class T>
  void enum_value(const std::string& key, T& out,
                  std::initializer_list<std::pair<const char*, T>> mapping) {
    with(key, [&](const std::string& v) {
      for (const auto& [name, val] : mapping)
        if (v == name) {
          out = val;
          return;
        }
      std::string expect;
      for (const auto& [name, val] : mapping)
        expect += std::string(expect.empty() ? "" : "|") + name;
      throw std::runtime_error("unrecognized value '" + v + "' (expected " +
                               expect + ")");
    });
  }

  void double_list(const std::string& key, std::vector<double>& out) {
    with(key, [&](const std::string& v) {
      out.clear();
      std::istringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ','))
        out.push_back(parse_double(trim(item)));
    });
  }

  void int_list(const std::string& key, std::vector<int>& out) {
    with(key, [&](const std::string& v) {
      out.clear();
      std::istringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ','))
        out.push_back(int(parse_i64(trim(item))));
    });
  }

  void fail(const std::string& key, const std::string& what) const {
    const auto it = table_.find(key);
    throw ConfigError(source_, it == table_.end() ? 0 : it->second.line, what);
  }

  void reject_unused() const {
    for (const auto& [key, entry] : table_)
      if (!entry.used)
        throw ConfigError(source_, entry.line, "unknown key " + key);
  }

  static double parse_double(const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::runtime_error("expected a number, got '" + v + "'");
    return out;
  }

  static std::int64_t parse_i64(const std::string& v) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::runtime_error("expected an integer, got '" + v + "'");
    return out;
  }

  static std::uint64_t parse_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::runtime_error("expected an unsigned integer, got '" + v + "'");
    return out;
  }

 private:
  KeyTable& table_;
  std::string source_;
};

}  // namespace

ReferenceKind SimConfig::resolved_reference() const {
  if (reference != ReferenceKind::Auto) return reference;
  if (conditioning == Conditioning::Sphere) return ReferenceKind::GammaN;
  if (variant == ModelVariant::Boltzmann && kernel == KernelChoice::Gmm &&
      (initial == InitialKind::Bkw || initial == InitialKind::Gaussian ||
       initial == InitialKind::TwoBump))
    return ReferenceKind::Bkw;
  return ReferenceKind::None;
}

SimConfig parse_config(const std::string& text, const std::string& source) {
  KeyTable table = tokenize(text, source);
  Reader reader(table, source);
  SimConfig c;

  reader.enum_value("model.variant", c.variant,
                    {{"boltzmann", ModelVariant::Boltzmann},
                     {"kac1d", ModelVariant::Kac1d}});
  if (c.variant == ModelVariant::Kac1d) c.dimension = 1;
  reader.int_value("model.dimension", c.dimension);
  reader.enum_value("model.kernel", c.kernel,
                    {{"gmm", KernelChoice::Gmm},
                     {"hs", KernelChoice::Hs},
                     {"tmm", KernelChoice::Tmm}});
  reader.double_value("model.hs_constant", c.hs_constant);
  reader.double_value("model.tmm_cutoff", c.tmm_cutoff);
  reader.double_value("model.tmm_constant", c.tmm_constant);

  reader.enum_value("initial.kind", c.initial,
                    {{"gaussian", InitialKind::Gaussian},
                     {"uniform_ball", InitialKind::UniformBall},
                     {"two_bump", InitialKind::TwoBump},
                     {"bkw", InitialKind::Bkw}});
  c.energy = double(c.dimension);  // unit variance per coordinate by default
  reader.double_value("initial.energy", c.energy);
  reader.enum_value("initial.conditioning", c.conditioning,
                    {{"free", Conditioning::Free},
                     {"sphere", Conditioning::Sphere}});
  reader.double_value("initial.two_bump_separation", c.two_bump_separation);
  reader.double_value("initial.two_bump_weight", c.two_bump_weight);
  reader.double_value("initial.bkw_excitation", c.bkw_excitation);

  reader.int_value("run.n_particles", c.n_particles);
  reader.int_value("run.n_runs", c.n_runs);
  reader.double_value("run.t_end", c.t_end);
  reader.with("run.time_grid", [&](const std::string& v) {
    if (v == "geometric") {
      c.geometric_grid = true;
    } else {
      c.geometric_grid = false;
      c.explicit_times.clear();
      std::istringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ','))
        c.explicit_times.push_back(Reader::parse_double(trim(item)));
    }
  });
  reader.double_value("run.t_first", c.t_first);
  reader.int_value("run.grid_points", c.grid_points);
  reader.u64_value("run.master_seed", c.master_seed);
  reader.u64_value("run.reproject_every", c.reproject_every);

  reader.int_list("metrics.orders", c.orders);
  reader.enum_value("metrics.mode", c.mode,
                    {{"strict", MarginalMode::Strict},
                     {"pooled", MarginalMode::Pooled}});
  reader.int_value("metrics.per_run_cap", c.per_run_cap);
  reader.enum_value("metrics.w1", c.w1,
                    {{"auto", W1Choice::Auto},
                     {"sorted", W1Choice::Sorted},
                     {"assignment", W1Choice::Assignment},
                     {"sliced", W1Choice::Sliced}});
  reader.int_value("metrics.projections", c.projections);
  reader.int_value("metrics.bootstrap_projections", c.bootstrap_projections);
  reader.int_value("metrics.bootstrap", c.bootstrap);
  reader.int_value("metrics.entropy_k", c.entropy_k);
  reader.bool_value("metrics.entropy", c.entropy);
  reader.enum_value("metrics.reference", c.reference,
                    {{"auto", ReferenceKind::Auto},
                     {"none", ReferenceKind::None},
                     {"equilibrium", ReferenceKind::Equilibrium},
                     {"bkw", ReferenceKind::Bkw},
                     {"gamma_n", ReferenceKind::GammaN}});
  reader.bool_value("metrics.noise_floor", c.noise_floor);
  reader.enum_value("metrics.sweep_reference", c.sweep_reference,
                    {{"oracle", SweepReference::Oracle},
                     {"self", SweepReference::SelfRef}});

  reader.string_value("output.directory", c.out_dir);
  reader.bool_value("output.dump_velocities", c.dump_velocities);
  reader.bool_value("output.svg", c.emit_svg);
  reader.string_value("output.name", c.name);

  reader.reject_unused();
  validate_config(c, source);
  return c;
}

SimConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  SimConfig c = parse_config(buffer.str(), path);
  if (c.name == "experiment") {
    // Default the experiment name to the file stem.
    auto stem = path;
    const auto slash = stem.find_last_of("/\\");
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
    if (!stem.empty()) c.name = stem;
  }
  return c;
}

void validate_config(const SimConfig& c, const std::string& source) {
  const auto fail = [&](const std::string& what) {
    throw ConfigError(source, 0, what);
  };
  if (c.variant == ModelVariant::Kac1d) {
    if (c.dimension != 1) fail("kac1d variant requires dimension = 1");
    if (c.kernel != KernelChoice::Gmm)
      fail("kac1d variant uses the unit-rate kernel (kernel = gmm)");
  } else if (c.dimension < 2) {
    fail("boltzmann variant requires dimension >= 2");
  }
  if (!(c.hs_constant > 0.0)) fail("hs_constant must be positive");
  if (!(c.tmm_cutoff > 0.0 && c.tmm_cutoff < M_PI))
    fail("tmm_cutoff must lie in (0, pi)");
  if (c.tmm_constant < 0.0) fail("tmm_constant must be >= 0");
  if (!(c.energy > 0.0)) fail("energy must be positive");
  if (c.n_particles < 2) fail("n_particles must be at least 2");
  if (c.n_runs < 1) fail("n_runs must be at least 1");
  if (c.t_end < 0.0) fail("t_end must be nonnegative");
  if (c.t_end > 0.0 && c.geometric_grid) {
    if (!(c.t_first > 0.0 && c.t_first < c.t_end))
      fail("t_first must lie in (0, t_end)");
    if (c.grid_points < 2) fail("grid_points must be at least 2");
  }
  if (!c.geometric_grid) {
    if (c.explicit_times.empty() || c.explicit_times.front() != 0.0)
      fail("explicit time grid must start at 0");
    for (std::size_t i = 1; i < c.explicit_times.size(); ++i)
      if (!(c.explicit_times[i] > c.explicit_times[i - 1]))
        fail("explicit time grid must be strictly increasing");
  }
  if (c.orders.empty()) fail("metrics.orders must not be empty");
  for (int ell : c.orders) {
    if (ell < 1) fail("marginal order must be >= 1");
    if (ell > c.n_particles)
      fail("marginal order " + std::to_string(ell) +
           " exceeds n_particles = " + std::to_string(c.n_particles));
  }
  if (c.per_run_cap < 0) fail("per_run_cap must be >= 0");
  if (c.projections < 1) fail("projections must be >= 1");
  if (c.bootstrap_projections < 1) fail("bootstrap_projections must be >= 1");
  if (c.bootstrap < 2) fail("bootstrap must be >= 2");
  if (c.entropy_k < 1) fail("entropy_k must be >= 1");
  if (c.initial == InitialKind::TwoBump) {
    if (!(c.two_bump_separation > 0.0)) fail("two_bump_separation must be positive");
    if (!(c.two_bump_weight > 0.0 && c.two_bump_weight < 1.0))
      fail("two_bump_weight must lie in (0, 1)");
    const double w1 = c.two_bump_weight, w2 = 1.0 - w1;
    const double center_energy =
        w1 * w2 * c.two_bump_separation * c.two_bump_separation;
    if (!(c.energy > center_energy))
      fail("energy too small for the requested bump separation (needs > " +
           std::to_string(center_energy) + ")");
  }
  if (c.initial == InitialKind::Bkw) {
    if (c.variant != ModelVariant::Boltzmann)
      fail("bkw initial datum requires the boltzmann variant");
    const double max_exc = 2.0 / (c.dimension + 2.0);
    if (!(c.bkw_excitation >= 0.0 && c.bkw_excitation <= max_exc))
      fail("bkw_excitation must lie in [0, 2/(d+2)]");
  }
  if (c.reference == ReferenceKind::Bkw) {
    if (c.kernel != KernelChoice::Gmm || c.variant != ModelVariant::Boltzmann)
      fail("bkw reference requires the boltzmann variant with the gmm kernel");
  }
  if (c.reference == ReferenceKind::GammaN &&
      c.conditioning != Conditioning::Sphere)
    fail("gamma_n reference requires sphere conditioning");
  if (c.out_dir.empty()) fail("output.directory must not be empty");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

const char* name_of(ModelVariant v) {
  return v == ModelVariant::Boltzmann ? "boltzmann" : "kac1d";
}
const char* name_of(KernelChoice k) {
  switch (k) {
    case KernelChoice::Gmm: return "gmm";
    case KernelChoice::Hs: return "hs";
    case KernelChoice::Tmm: return "tmm";
  }
  return "?";
}
const char* name_of(InitialKind k) {
  switch (k) {
    case InitialKind::Gaussian: return "gaussian";
    case InitialKind::UniformBall: return "uniform_ball";
    case InitialKind::TwoBump: return "two_bump";
    case InitialKind::Bkw: return "bkw";
  }
  return "?";
}
const char* name_of(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::Auto: return "auto";
    case ReferenceKind::None: return "none";
    case ReferenceKind::Equilibrium: return "equilibrium";
    case ReferenceKind::Bkw: return "bkw";
    case ReferenceKind::GammaN: return "gamma_n";
  }
  return "?";
}
const char* name_of(W1Choice k) {
  switch (k) {
    case W1Choice::Auto: return "auto";
    case W1Choice::Sorted: return "sorted";
    case W1Choice::Assignment: return "assignment";
    case W1Choice::Sliced: return "sliced";
  }
  return "?";
}

}  // namespace

namespace {

void emit_identity(const SimConfig& c, std::ostringstream& out) {
  out << "[model]\n";
  out << "variant = " << name_of(c.variant) << "\n";
  out << "dimension = " << c.dimension << "\n";
  out << "kernel = " << name_of(c.kernel) << "\n";
  out << "hs_constant = " << fmt(c.hs_constant) << "\n";
  out << "tmm_cutoff = " << fmt(c.tmm_cutoff) << "\n";
  out << "tmm_constant = " << fmt(c.tmm_constant) << "\n";
  out << "\n[initial]\n";
  out << "kind = " << name_of(c.initial) << "\n";
  out << "energy = " << fmt(c.energy) << "\n";
  out << "conditioning = "
      << (c.conditioning == Conditioning::Sphere ? "sphere" : "free") << "\n";
  if (c.initial == InitialKind::TwoBump) {
    out << "two_bump_separation = " << fmt(c.two_bump_separation) << "\n";
    out << "two_bump_weight = " << fmt(c.two_bump_weight) << "\n";
  }
  if (c.initial == InitialKind::Bkw)
    out << "bkw_excitation = " << fmt(c.bkw_excitation) << "\n";
  out << "\n[run]\n";
  out << "n_particles = " << c.n_particles << "\n";
  out << "n_runs = " << c.n_runs << "\n";
  out << "t_end = " << fmt(c.t_end) << "\n";
  if (c.geometric_grid) {
    out << "time_grid = geometric\n";
    out << "t_first = " << fmt(c.t_first) << "\n";
    out << "grid_points = " << c.grid_points << "\n";
  } else {
    out << "time_grid = ";
    for (std::size_t i = 0; i < c.explicit_times.size(); ++i)
      out << (i ? "," : "") << fmt(c.explicit_times[i]);
    out << "\n";
  }
  out << "master_seed = " << c.master_seed << "\n";
  out << "reproject_every = " << c.reproject_every << "\n";
  out << "\n[metrics]\n";
  out << "orders = ";
  for (std::size_t i = 0; i < c.orders.size(); ++i)
    out << (i ? "," : "") << c.orders[i];
  out << "\n";
  out << "mode = " << (c.mode == MarginalMode::Pooled ? "pooled" : "strict")
      << "\n";
  out << "per_run_cap = " << c.per_run_cap << "\n";
  out << "w1 = " << name_of(c.w1) << "\n";
  out << "projections = " << c.projections << "\n";
  out << "bootstrap_projections = " << c.bootstrap_projections << "\n";
  out << "bootstrap = " << c.bootstrap << "\n";
  out << "entropy_k = " << c.entropy_k << "\n";
  out << "entropy = " << (c.entropy ? "on" : "off") << "\n";
  out << "reference = " << name_of(c.reference) << "\n";
  out << "noise_floor = " << (c.noise_floor ? "on" : "off") << "\n";
  out << "sweep_reference = "
      << (c.sweep_reference == SweepReference::Oracle ? "oracle" : "self")
      << "\n";
}

}  // namespace

std::string identity_text(const SimConfig& c) {
  std::ostringstream out;
  emit_identity(c, out);
  return out.str();
}

std::string canonical_text(const SimConfig& c) {
  std::ostringstream out;
  emit_identity(c, out);
  out << "\n[output]\n";
  out << "directory = " << c.out_dir << "\n";
  out << "dump_velocities = " << (c.dump_velocities ? "true" : "false") << "\n";
  out << "svg = " << (c.emit_svg ? "true" : "false") << "\n";
  out << "name = " << c.name << "\n";
  return out.str();
}

}  // namespace kacsim
