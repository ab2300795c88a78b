#include "halbach/config.hpp"

#include "halbach/textio.hpp"

#include <fmt/format.h>
#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace halbach {

namespace {

/// Reads typed keys from one TOML table and remembers which were consumed.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string path, const std::string& source)
      : table_(table), path_(std::move(path)), source_(source) {}

  void real(const char* key, double& out) {
    if (const auto* node = find(key)) {
      const auto v = node->value<double>();
      if (!v || !(node->is_floating_point() || node->is_integer())) fail(key, "expected a number");
      if (!std::isfinite(*v)) fail(key, "must be finite");
      out = *v;
    }
  }

  void optional_real(const char* key, std::optional<double>& out) {
    if (find(key)) {
      double v = 0.0;
      real(key, v);
      out = v;
    }
  }

  void integer(const char* key, int& out) {
    if (const auto* node = find(key)) {
      if (!node->is_integer()) fail(key, "expected an integer");
      const auto v = node->value<std::int64_t>().value();
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail(key, "out of range");
      out = static_cast<int>(v);
    }
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const auto* node = find(key)) {
      if (!node->is_integer() || node->value<std::int64_t>().value() < 0) fail(key, "expected a non-negative integer");
      out = static_cast<std::uint64_t>(node->value<std::int64_t>().value());
    }
  }

  void boolean(const char* key, bool& out) {
    if (const auto* node = find(key)) {
      if (!node->is_boolean()) fail(key, "expected true or false");
      out = node->value<bool>().value();
    }
  }

  void string(const char* key, std::string& out) {
    if (const auto* node = find(key)) {
      if (!node->is_string()) fail(key, "expected a string");
      out = node->value<std::string>().value();
    }
  }

  template <class E>
  void choice(const char* key, E& out, const std::map<std::string, E>& options) {
    std::string s;
    if (!find(key)) return;
    string(key, s);
    const auto it = options.find(s);
    if (it == options.end()) {
      std::string allowed;
      for (const auto& [name, value] : options) allowed += (allowed.empty() ? "" : ", ") + name;
      fail(key, fmt::format("'{}' is not one of {}", s, allowed));
    }
    out = it->second;
  }

  /// Sub-table names that this reader accepts without reading them as keys.
  void child(const char* key) { used_.insert(key); }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, node] : *table_) {
      const std::string k(key.str());
      if (!used_.count(k)) {
        throw ConfigError(fmt::format("{}: unknown key '{}'", source_, path_.empty() ? k : path_ + "." + k));
      }
    }
  }

 private:
  const toml::node* find(const char* key) {
    used_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw ConfigError(fmt::format("{}: {}.{}: {}", source_, path_, key, why));
  }

  const toml::table* table_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& parent, const char* key, const std::string& path,
                            const std::string& source) {
  const auto* node = parent.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError(fmt::format("{}: '{}' must be a table", source, path));
  return node->as_table();
}

const std::map<std::string, InferenceMode> kModes{{"linear", InferenceMode::linear}, {"pcn", InferenceMode::pcn}};
const std::map<std::string, ForwardKind> kForwards{{"linear", ForwardKind::linear}, {"fem", ForwardKind::fem}};
const std::map<std::string, ObservableChoice> kObservables{{"field", ObservableChoice::field},
                                                           {"fourier", ObservableChoice::fourier}};
const std::map<std::string, NoiseProfileKind> kProfiles{{"uniform", NoiseProfileKind::uniform},
                                                        {"fringe", NoiseProfileKind::fringe}};
const std::map<std::string, FourierConvention> kConventions{{"cos_in_B", FourierConvention::cos_in_B},
                                                            {"cos_in_A", FourierConvention::cos_in_A}};

template <class E>
std::string name_of(E value, const std::map<std::string, E>& options) {
  for (const auto& [name, v] : options) {
    if (v == value) return name;
  }
  return "?";
}

std::string toml_real(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::string to_string(InferenceMode mode) { return name_of(mode, kModes); }
std::string to_string(ObservableChoice observable) { return name_of(observable, kObservables); }

RunConfig parse_run_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    throw ConfigError(fmt::format("{}:{}:{}: {}", source, where.line, where.column, e.description()));
  }

  RunConfig c;
  auto& v = c.validation;
  TableReader top(&root, "", source);

  TableReader geometry(subtable(root, "geometry", "geometry", source), "geometry", source);
  top.child("geometry");
  geometry.real("inner_radius", v.array.inner_radius);
  geometry.real("outer_radius", v.array.outer_radius);
  geometry.real("ring_length", v.array.ring_length);
  geometry.real("ring_gap", v.array.ring_gap);
  geometry.integer("n_rings", v.array.n_rings);
  geometry.real("nominal_moment", v.array.nominal_moment);
  geometry.real("mu_r", v.array.mu_r);
  geometry.optional_real("iron_inner", v.array.iron_inner);
  geometry.optional_real("iron_outer", v.array.iron_outer);
  geometry.finish();

  TableReader model(subtable(root, "model", "model", source), "model", source);
  top.child("model");
  model.integer("dimension", c.model_dimension);
  model.finish();

  const auto* obs_table = subtable(root, "observable", "observable", source);
  TableReader observable(obs_table, "observable", source);
  top.child("observable");
  observable.choice("kind", c.observable, kObservables);
  observable.child("field");
  observable.child("fourier");
  observable.finish();
  if (obs_table) {
    TableReader field(subtable(*obs_table, "field", "observable.field", source), "observable.field", source);
    field.integer("n_points", v.field.n_points);
    field.real("radius_factor", v.field.radius_factor);
    field.integer("z_per_ring", v.field.z_per_ring);
    field.real("sigma", v.field.sigma);
    field.finish();
    TableReader fourier(subtable(*obs_table, "fourier", "observable.fourier", source), "observable.fourier", source);
    fourier.real("r0", v.fourier.r0);
    fourier.integer("harmonics", v.fourier.harmonics);
    fourier.integer("n_theta", v.fourier.n_theta);
    fourier.integer("z_per_ring", v.fourier.z_per_ring);
    fourier.real("sigma", v.fourier.sigma);
    fourier.choice("convention", v.fourier.convention, kConventions);
    fourier.finish();
  }

  const auto* prior_table = subtable(root, "prior", "prior", source);
  TableReader prior(prior_table, "prior", source);
  top.child("prior");
  prior.string("csv", c.prior_csv);
  prior.boolean("pooled_types", v.prior_options.pooled_types);
  prior.child("synthetic");
  prior.finish();
  if (prior_table) {
    TableReader synth(subtable(*prior_table, "synthetic", "prior.synthetic", source), "prior.synthetic", source);
    synth.real("sigma", v.prior.sigma);
    synth.real("sigma_z", v.prior.sigma_z);
    synth.real("offset_sigma", v.prior.offset_sigma);
    synth.unsigned_integer("seed", v.prior.seed);
    synth.finish();
  }

  TableReader inference(subtable(root, "inference", "inference", source), "inference", source);
  top.child("inference");
  inference.choice("mode", c.mode, kModes);
  inference.choice("forward", v.pcn.forward, kForwards);
  inference.real("step_size", v.pcn.step_size);
  inference.integer("n_steps", v.pcn.n_steps);
  inference.real("burn_in", v.pcn.burn_in);
  inference.boolean("strict", v.pcn.strict);
  inference.integer("chains", c.n_chains);
  inference.finish();

  TableReader noise(subtable(root, "noise", "noise", source), "noise", source);
  top.child("noise");
  noise.choice("profile", c.noise_profile, kProfiles);
  noise.real("sigma_homogeneous", v.application.sigma_homogeneous);
  noise.real("sigma_fringe", v.application.sigma_fringe);
  noise.real("margin", v.application.margin);
  noise.finish();

  TableReader fem(subtable(root, "fem", "fem", source), "fem", source);
  top.child("fem");
  fem.real("h_divisor", v.fem.h_divisor);
  fem.real("iron_inner", v.fem.iron_inner);
  fem.real("iron_outer", v.fem.iron_outer);
  fem.real("magnet_mu_r", v.fem.materials.magnet_mu_r);
  fem.string("iron_curve", c.iron_curve);
  fem.real("iron_mu_r", c.iron_mu_r);
  fem.real("tolerance", v.fem.solver.tolerance);
  fem.integer("max_iterations", v.fem.solver.max_iterations);
  fem.real("relaxation", v.fem.solver.relaxation);
  fem.finish();

  TableReader application(subtable(root, "application", "application", source), "application", source);
  top.child("application");
  application.integer("n_z", v.application.n_z);
  application.real("z_extent", v.application.z_extent);
  application.real("mean_shift", v.application.mean_shift);
  application.real("floor", v.application.floor);
  application.finish();

  TableReader report(subtable(root, "report", "report", source), "report", source);
  top.child("report");
  report.integer("ring", v.report_ring);
  report.finish();

  top.finish();

  try {
    validate_run_config(c);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", source, e.what()));
  }
  v.fem.materials.iron = iron_curve(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void validate_run_config(const RunConfig& c) {
  const auto& v = c.validation;
  const auto array = HalbachArray::build(v.array);
  require(c.model_dimension == 2 || c.model_dimension == 3, "model.dimension must be 2 or 3");
  require(v.field.n_points >= 1, "observable.field.n_points must be at least 1");
  require(v.field.radius_factor > 0.0 && v.field.radius_factor < 1.0,
          "observable.field.radius_factor must lie in (0, 1)");
  require(v.field.z_per_ring >= 1, "observable.field.z_per_ring must be at least 1");
  require(v.field.sigma > 0.0, "observable.field.sigma must be positive");
  require(v.fourier.r0 > 0.0 && v.fourier.r0 < array.inner_radius(),
          "observable.fourier.r0 must lie inside the bore");
  require(v.fourier.harmonics >= 1, "observable.fourier.harmonics must be at least 1");
  require(v.fourier.n_theta >= 2 * v.fourier.harmonics + 1,
          "observable.fourier.n_theta must be at least 2·harmonics + 1");
  require(v.fourier.z_per_ring >= 1, "observable.fourier.z_per_ring must be at least 1");
  require(v.fourier.sigma > 0.0, "observable.fourier.sigma must be positive");
  require(v.prior.sigma >= 0.0 && v.prior.sigma_z >= 0.0 && v.prior.offset_sigma >= 0.0,
          "prior.synthetic standard deviations must be non-negative");
  require(v.pcn.step_size > 0.0 && v.pcn.step_size <= 1.0, "inference.step_size must lie in (0, 1]");
  require(v.pcn.n_steps >= 1, "inference.n_steps must be at least 1");
  require(v.pcn.burn_in >= 0.0 && v.pcn.burn_in < 1.0, "inference.burn_in must lie in [0, 1)");
  require(c.n_chains >= 1, "inference.chains must be at least 1");
  require(!(c.mode == InferenceMode::linear && v.pcn.forward == ForwardKind::fem),
          "inference.forward = \"fem\" needs mode = \"pcn\"");
  require(!(v.pcn.forward == ForwardKind::fem && c.model_dimension != 2),
          "inference.forward = \"fem\" needs model.dimension = 2");
  require(v.application.sigma_homogeneous > 0.0 && v.application.sigma_fringe > 0.0,
          "noise standard deviations must be positive");
  require(v.application.margin >= 0.0, "noise.margin must be non-negative");
  require(v.fem.h_divisor >= 1.0, "fem.h_divisor must be at least 1");
  require(v.fem.iron_inner > array.outer_radius() && v.fem.iron_outer > v.fem.iron_inner,
          "fem iron radii must satisfy outer radius < iron_inner < iron_outer");
  require(v.fem.materials.magnet_mu_r > 0.0, "fem.magnet_mu_r must be positive");
  require(c.iron_mu_r > 0.0, "fem.iron_mu_r must be positive");
  require(v.fem.solver.tolerance > 0.0 && v.fem.solver.max_iterations >= 1 && v.fem.solver.relaxation > 0.0 &&
              v.fem.solver.relaxation <= 1.0,
          "fem solver settings out of range");
  require(v.application.n_z >= 2, "application.n_z must be at least 2");
  require(v.application.z_extent >= 0.0, "application.z_extent must be non-negative");
  require(v.application.floor > 0.0, "application.floor must be positive");
  require(v.report_ring >= 1 && v.report_ring <= array.n_rings(), "report.ring must name a ring of the array");
}

fem::HBCurve iron_curve(const RunConfig& config) {
  if (config.iron_curve == "brauer") return fem::HBCurve::brauer();
  if (config.iron_curve == "linear") return fem::HBCurve::linear(config.iron_mu_r);
  try {
    return fem::HBCurve::from_csv(config.iron_curve);
  } catch (const Error& e) {
    throw ConfigError(fmt::format("fem.iron_curve: {}", e.what()));
  }
}

std::string run_config_to_toml(const RunConfig& c) {
  const auto& v = c.validation;
  std::string out;
  const auto line = [&out](const char* key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  const auto real = [&](const char* key, double x) { line(key, toml_real(x)); };
  const auto integer = [&](const char* key, long long x) { line(key, std::to_string(x)); };

  out += "[geometry]\n";
  real("inner_radius", v.array.inner_radius);
  real("outer_radius", v.array.outer_radius);
  real("ring_length", v.array.ring_length);
  real("ring_gap", v.array.ring_gap);
  integer("n_rings", v.array.n_rings);
  real("nominal_moment", v.array.nominal_moment);
  real("mu_r", v.array.mu_r);
  if (v.array.iron_inner) real("iron_inner", *v.array.iron_inner);
  if (v.array.iron_outer) real("iron_outer", *v.array.iron_outer);

  out += "\n[model]\n";
  integer("dimension", c.model_dimension);

  out += "\n[observable]\n";
  line("kind", toml_string(to_string(c.observable)));
  out += "\n[observable.field]\n";
  integer("n_points", v.field.n_points);
  real("radius_factor", v.field.radius_factor);
  integer("z_per_ring", v.field.z_per_ring);
  real("sigma", v.field.sigma);
  out += "\n[observable.fourier]\n";
  real("r0", v.fourier.r0);
  integer("harmonics", v.fourier.harmonics);
  integer("n_theta", v.fourier.n_theta);
  integer("z_per_ring", v.fourier.z_per_ring);
  real("sigma", v.fourier.sigma);
  line("convention", toml_string(name_of(v.fourier.convention, kConventions)));

  out += "\n[prior]\n";
  line("csv", toml_string(c.prior_csv));
  line("pooled_types", c.validation.prior_options.pooled_types ? "true" : "false");
  out += "\n[prior.synthetic]\n";
  real("sigma", v.prior.sigma);
  real("sigma_z", v.prior.sigma_z);
  real("offset_sigma", v.prior.offset_sigma);
  line("seed", std::to_string(v.prior.seed));

  out += "\n[inference]\n";
  line("mode", toml_string(to_string(c.mode)));
  line("forward", toml_string(name_of(v.pcn.forward, kForwards)));
  real("step_size", v.pcn.step_size);
  integer("n_steps", v.pcn.n_steps);
  real("burn_in", v.pcn.burn_in);
  line("strict", v.pcn.strict ? "true" : "false");
  integer("chains", c.n_chains);

  out += "\n[noise]\n";
  line("profile", toml_string(name_of(c.noise_profile, kProfiles)));
  real("sigma_homogeneous", v.application.sigma_homogeneous);
  real("sigma_fringe", v.application.sigma_fringe);
  real("margin", v.application.margin);

  out += "\n[fem]\n";
  real("h_divisor", v.fem.h_divisor);
  real("iron_inner", v.fem.iron_inner);
  real("iron_outer", v.fem.iron_outer);
  real("magnet_mu_r", v.fem.materials.magnet_mu_r);
  line("iron_curve", toml_string(c.iron_curve));
  real("iron_mu_r", c.iron_mu_r);
  real("tolerance", v.fem.solver.tolerance);
  integer("max_iterations", v.fem.solver.max_iterations);
  real("relaxation", v.fem.solver.relaxation);

  out += "\n[application]\n";
  integer("n_z", v.application.n_z);
  real("z_extent", v.application.z_extent);
  real("mean_shift", v.application.mean_shift);
  real("floor", v.application.floor);

  out += "\n[report]\n";
  integer("ring", v.report_ring);
  return out;
}

}  // namespace halbach
