#include "halbach/harness.hpp"

#include "halbach/fem/mesh.hpp"
#include "halbach/textio.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace halbach {

namespace {

constexpr std::uint64_t kTruthStream = 0x7472;
constexpr std::uint64_t kNoiseStream = 0x6e6f;
constexpr std::uint64_t kFourierSeedStream = 0x6671;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  if (ec) throw DomainError(fmt::format("cannot create directory '{}': {}", parent.string(), ec.message()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError(fmt::format("cannot write '{}'", path));
  return out;
}

}  // namespace

Eigen::VectorXd SigmaProfile::row_sigma(const ObservableSpec& spec) const {
  const Eigen::VectorXd rz = spec.row_z();
  Eigen::VectorXd out(rz.size());
  for (Eigen::Index r = 0; r < rz.size(); ++r) {
    Eigen::Index k = 0;
    (z.array() - rz(r)).abs().minCoeff(&k);
    if (std::abs(z(k) - rz(r)) > 1e-12) {
      throw DomainError(fmt::format("observable position z = {} is not in the noise profile", rz(r)));
    }
    out(r) = sigma(k);
  }
  return out;
}

SigmaProfile build_sigma_profile(const std::vector<double>& z_positions, double magnet_half_length, double margin,
                                 double sigma_homogeneous, double sigma_fringe) {
  if (!(margin >= 0.0)) throw DomainError("fringe margin must be non-negative");
  if (!(sigma_homogeneous >= 0.0) || !(sigma_fringe >= 0.0)) throw DomainError("noise levels must be non-negative");
  SigmaProfile p;
  p.sigma_homogeneous = sigma_homogeneous;
  p.sigma_fringe = sigma_fringe;
  const auto n = static_cast<Eigen::Index>(z_positions.size());
  p.z.resize(n);
  p.sigma.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double z = z_positions[static_cast<std::size_t>(k)];
    const bool fringe = std::abs(z) > magnet_half_length - margin;
    p.z(k) = z;
    p.sigma(k) = fringe ? sigma_fringe : sigma_homogeneous;
    p.fringe.push_back(fringe ? 1 : 0);
  }
  return p;
}

Reduction reduction_metric(const Eigen::VectorXd& prior_mean, const Eigen::VectorXd& posterior_mean,
                           const Eigen::VectorXd& truth, const ParameterLayout& layout) {
  if (prior_mean.size() != truth.size() || posterior_mean.size() != truth.size() ||
      truth.size() != layout.dimension()) {
    throw DomainError("reduction metric needs vectors of the layout dimension");
  }
  const auto reduce = [&](const std::vector<Eigen::Index>& idx) {
    double d0 = 0.0;
    double d1 = 0.0;
    for (auto k : idx) {
      d0 = std::max(d0, std::abs(prior_mean(k) - truth(k)));
      d1 = std::max(d1, std::abs(posterior_mean(k) - truth(k)));
    }
    if (!(d0 > 0.0)) throw DomainError("prior mean equals the truth; the reduction is undefined");
    return 100.0 * (1.0 - d1 / d0);
  };
  Reduction r;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(truth.size()));
  for (Eigen::Index k = 0; k < truth.size(); ++k) all[static_cast<std::size_t>(k)] = k;
  r.overall = reduce(all);
  for (int j = 1; j <= layout.n_rings(); ++j) r.per_ring.push_back(reduce(layout.ring_indices(j)));
  return r;
}

RelativeErrorProfile relative_error_profile(const Eigen::VectorXd& b_meas, const Eigen::VectorXd& b_sim,
                                            double floor) {
  if (b_meas.size() != b_sim.size()) throw DomainError("measured and simulated profiles differ in length");
  RelativeErrorProfile out;
  out.e_rel.resize(b_meas.size());
  out.masked.resize(static_cast<std::size_t>(b_meas.size()));
  bool any = false;
  for (Eigen::Index k = 0; k < b_meas.size(); ++k) {
    const bool masked = !(std::abs(b_meas(k)) >= floor);
    out.masked[static_cast<std::size_t>(k)] = masked ? 1 : 0;
    out.e_rel(k) = masked ? std::numeric_limits<double>::quiet_NaN() : std::abs((b_meas(k) - b_sim(k)) / b_meas(k));
    any = any || !masked;
  }
  if (!any) throw DomainError(fmt::format("every measured value is below the {} T floor", floor));
  const auto n_masked = std::count(out.masked.begin(), out.masked.end(), char{1});
  if (n_masked > 0) spdlog::info("{} of {} positions masked below {} T", n_masked, b_meas.size(), floor);
  return out;
}

GaussianDensity build_synthetic_prior(const HalbachArray& array, const ParameterLayout& layout,
                                      const SyntheticPriorConfig& config) {
  const auto types = default_block_types(array, config.sigma, config.sigma_z, config.offset_sigma, config.seed);
  const auto records = synth_helmholtz(array, types, config.seed);
  return fit_prior(records, layout);
}

GaussianDensity validation_prior(const ValidationConfig& config, const HalbachArray& array,
                                 const ParameterLayout& layout) {
  if (config.helmholtz.empty()) return build_synthetic_prior(array, layout, config.prior);
  return fit_prior(config.helmholtz, layout, config.prior_options);
}

std::vector<double> ring_z_grid(const HalbachArray& array, int per_ring) {
  if (per_ring < 1) throw ConfigError("at least one axial position per ring is required");
  std::vector<double> z;
  for (int j = 1; j <= array.n_rings(); ++j) {
    const auto [z0, z1] = array.ring_extent(j);
    for (int k = 0; k < per_ring; ++k) z.push_back(z0 + (k + 0.5) * (z1 - z0) / per_ring);
  }
  return z;
}

ObservableSpec field_observable(const HalbachArray& array, const FieldObservableConfig& config, int n_components) {
  if (config.n_points < 1) throw ConfigError("field observable needs at least one point per circle");
  if (!(config.radius_factor > 0.0 && config.radius_factor < 1.0)) {
    throw ConfigError("field observable radius factor must be in (0, 1)");
  }
  const double r = config.radius_factor * array.inner_radius();
  const std::vector<double> zs = n_components == 2 ? std::vector<double>{0.0} : ring_z_grid(array, config.z_per_ring);
  std::vector<FieldPoint> points;
  for (double z : zs) {
    for (int k = 0; k < config.n_points; ++k) {
      const double t = 2.0 * std::numbers::pi * k / config.n_points;
      points.push_back({Vec3(r * std::cos(t), r * std::sin(t), z), Region::air});
    }
  }
  auto spec = ObservableSpec::point_field(std::move(points), n_components);
  spec.validate(array);
  return spec;
}

ObservableSpec fourier_observable(const HalbachArray& array, const FourierObservableConfig& config,
                                  std::vector<double> z_positions, int n_components) {
  if (n_components == 2) z_positions = {0.0};
  auto spec = ObservableSpec::fourier_circle(config.r0, config.harmonics, config.n_theta, std::move(z_positions),
                                             n_components, config.convention);
  spec.validate(array);
  return spec;
}

Eigen::VectorXd draw_ground_truth(const GaussianDensity& prior, std::uint64_t seed) {
  Rng rng = make_rng(seed, kTruthStream);
  return prior.sample(rng);
}

Observation make_observation(ForwardModel& forward, const ObservableSpec& spec, const Eigen::VectorXd& truth,
                             double sigma, std::uint64_t seed) {
  return make_observation(forward, spec, truth, Eigen::VectorXd::Constant(spec.dimension(), sigma), seed);
}

Observation make_observation(ForwardModel& forward, const ObservableSpec& spec, const Eigen::VectorXd& truth,
                             const Eigen::VectorXd& sigma, std::uint64_t seed) {
  if (sigma.size() != spec.dimension()) {
    throw DomainError(fmt::format("{} noise levels for an observable of dimension {}", sigma.size(), spec.dimension()));
  }
  if (!(sigma.array() >= 0.0).all() || !sigma.allFinite()) throw DomainError("noise levels must be non-negative");
  Eigen::VectorXd values = forward.evaluate(truth);
  if (values.size() != spec.dimension()) throw DomainError("forward model output does not match the observable");
  Rng rng = make_rng(seed, kNoiseStream);
  values += sigma.cwiseProduct(standard_normal(rng, values.size()));
  return {std::move(values), spec, sigma.array().square().matrix()};
}

ValidationReport make_report(std::uint64_t seed, std::string observable, std::string method,
                             const ParameterLayout& layout, const Eigen::VectorXd& truth, const GaussianDensity& prior,
                             const Eigen::VectorXd& posterior_mean, const Eigen::VectorXd& posterior_var,
                             int report_ring) {
  ValidationReport r;
  r.seed = seed;
  r.observable = std::move(observable);
  r.method = std::move(method);
  r.layout = layout;
  r.truth = truth;
  r.prior_mean = prior.mean();
  r.prior_var = prior.covariance().diagonal();
  r.posterior_mean = posterior_mean;
  r.posterior_var = posterior_var;
  r.prior_max_deviation = r.prior_deviation().maxCoeff();
  r.posterior_max_deviation = r.posterior_deviation().maxCoeff();
  const auto red = reduction_metric(r.prior_mean, r.posterior_mean, truth, layout);
  r.reduction = red.overall;
  r.report_ring = std::clamp(report_ring, 1, layout.n_rings());
  r.ring_reduction = red.per_ring[static_cast<std::size_t>(r.report_ring - 1)];
  r.variance_contracted = (r.posterior_var.array() <= r.prior_var.array() * (1.0 + 1e-12)).all();
  return r;
}

LinearValidation run_linear_validation(const ValidationConfig& config, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto array = HalbachArray::build(config.array);
  const ParameterLayout layout(array.n_rings(), 3);
  const auto prior = validation_prior(config, array, layout);
  const auto truth = draw_ground_truth(prior, seed);

  const auto run = [&](const ObservableSpec& spec, double sigma, std::uint64_t noise_seed, const char* name) {
    const auto t0 = std::chrono::steady_clock::now();
    LinearForward forward(assemble_linear_operator(array, spec, layout));
    spdlog::debug("{} operator {}x{} assembled in {:.3f} s", name, forward.op().rows(), forward.op().cols(),
                  seconds_since(t0));
    const auto obs = make_observation(forward, spec, truth, sigma, noise_seed);
    const auto post = conjugate_update(forward.op(), obs.noise_var, obs.values, prior);
    return make_report(seed, name, "conjugate", layout, truth, prior, post.mean(), post.covariance().diagonal(),
                       config.report_ring);
  };

  LinearValidation out;
  out.field = run(field_observable(array, config.field, 3), config.field.sigma, seed, "field");
  const auto fourier_seed = make_rng(seed, kFourierSeedStream)();
  out.fourier = run(fourier_observable(array, config.fourier, ring_z_grid(array, config.fourier.z_per_ring), 3),
                    config.fourier.sigma, fourier_seed, "fourier");
  out.field.runtime_s = out.fourier.runtime_s = seconds_since(start);
  return out;
}

std::unique_ptr<ForwardModel> make_2d_forward(const ValidationConfig& config, const ObservableSpec& spec) {
  const ParameterLayout layout(1, 2);
  if (config.pcn.forward == ForwardKind::linear) {
    return std::make_unique<LinearForward>(assemble_linear_operator(HalbachArray::build(config.array), spec, layout));
  }
  auto arr_cfg = config.array;
  if (!arr_cfg.iron_inner) {
    arr_cfg.iron_inner = config.fem.iron_inner;
    arr_cfg.iron_outer = config.fem.iron_outer;
  }
  const auto array = HalbachArray::build(arr_cfg);
  if (!(config.fem.h_divisor > 0.0)) throw ConfigError("FE mesh divisor must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  auto mesh = fem::generate_mesh(array, array.inner_radius() / config.fem.h_divisor,
                                 fem::default_truncation_radius(array));
  spdlog::info("mesh with {} nodes and {} triangles generated in {:.3f} s", mesh.n_nodes(), mesh.n_triangles(),
               seconds_since(t0));
  fem::FemContext context(std::move(mesh), config.fem.materials, config.fem.solver);
  return std::make_unique<FemForward>(std::move(context), spec, layout);
}

PcnValidation run_pcn_validation(const ValidationConfig& config, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto array = HalbachArray::build(config.array);
  const ParameterLayout layout(1, 2);
  const auto prior = validation_prior(config, array, layout);
  const auto truth = draw_ground_truth(prior, seed);
  const auto spec = field_observable(array, config.field, 2);
  auto forward = make_2d_forward(config, spec);
  const auto obs = make_observation(*forward, spec, truth, config.field.sigma, seed);

  PcnOptions options;
  options.step_size = config.pcn.step_size;
  options.n_steps = config.pcn.n_steps;
  options.seed = seed;
  options.strict = config.pcn.strict;
  const auto t0 = std::chrono::steady_clock::now();
  auto chain = run_chain(*forward, prior, obs.values, obs.noise_var, options);
  const double chain_s = seconds_since(t0);
  spdlog::info("pCN chain: {} steps in {:.2f} s ({:.0f} steps/s), acceptance {:.3f}", options.n_steps, chain_s,
               options.n_steps / std::max(chain_s, 1e-9), chain.acceptance_rate());
  auto summary = summarize_chain(chain, config.pcn.burn_in);

  PcnValidation out{make_report(seed, "field", "pcn", layout, truth, prior, summary.mean,
                                summary.covariance.diagonal(), 1),
                    std::move(chain), std::move(summary)};
  out.report.acceptance_rate = out.chain.acceptance_rate();
  out.report.runtime_s = seconds_since(start);
  return out;
}

ApplicationReport run_application(const ValidationConfig& config, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto& app = config.application;
  if (app.n_z < 2) throw ConfigError("application grid needs at least two axial positions");
  const auto array = HalbachArray::build(config.array);
  const ParameterLayout layout(array.n_rings(), 3);
  const auto prior = validation_prior(config, array, layout);

  // The truth comes from a prior whose mean is off by `mean_shift` standard
  // deviations along each block's nominal magnetization direction.
  Eigen::VectorXd shifted = prior.mean();
  for (int j = 1; j <= layout.n_rings(); ++j) {
    for (int i = 1; i <= kBlocksPerRing; ++i) {
      const Eigen::Index row = layout.index(i, j, 0);
      const double a = deg2rad(nominal_angle(i));
      const Vec3 e(std::cos(a), std::sin(a), 0.0);
      const double sd = std::sqrt(e.dot(prior.covariance().block<3, 3>(row, row) * e));
      shifted.segment<3>(row) += app.mean_shift * sd * e;
    }
  }
  const Eigen::VectorXd truth = draw_ground_truth(GaussianDensity(shifted, prior.covariance()), seed);

  const double half = array.half_length();
  std::vector<double> z(static_cast<std::size_t>(app.n_z));
  for (int k = 0; k < app.n_z; ++k) z[static_cast<std::size_t>(k)] = -(half + app.z_extent) + 2.0 * (half + app.z_extent) * k / (app.n_z - 1);

  ApplicationReport out;
  out.seed = seed;
  out.profile = build_sigma_profile(z, half, app.margin, app.sigma_homogeneous, app.sigma_fringe);
  const auto spec = fourier_observable(array, config.fourier, z, 3);
  LinearForward forward(assemble_linear_operator(array, spec, layout));
  const auto obs = make_observation(forward, spec, truth, out.profile.row_sigma(spec), seed);
  const auto post = conjugate_update(forward.op(), obs.noise_var, obs.values, prior);

  // Dipole coefficient: the cosine family at k = 1.
  const int K = config.fourier.harmonics;
  const int dipole = config.fourier.convention == FourierConvention::cos_in_B ? K : 0;
  const Eigen::VectorXd q_prior = forward.op().apply(prior.mean());
  const Eigen::VectorXd q_post = forward.op().apply(post.mean());
  out.b_meas.resize(app.n_z);
  out.b_prior.resize(app.n_z);
  out.b_posterior.resize(app.n_z);
  for (int k = 0; k < app.n_z; ++k) {
    const Eigen::Index row = static_cast<Eigen::Index>(k) * 2 * K + dipole;
    out.b_meas(k) = obs.values(row);
    out.b_prior(k) = q_prior(row);
    out.b_posterior(k) = q_post(row);
  }
  out.e_prior = relative_error_profile(out.b_meas, out.b_prior, app.floor);
  out.e_posterior = relative_error_profile(out.b_meas, out.b_posterior, app.floor);

  int n = 0;
  int improved = 0;
  std::vector<double> factors;
  for (int k = 0; k < app.n_z; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (out.profile.fringe[uk] || out.e_prior.masked[uk]) continue;
    ++n;
    if (out.e_posterior.e_rel(k) < out.e_prior.e_rel(k)) ++improved;
    factors.push_back(out.e_prior.e_rel(k) / out.e_posterior.e_rel(k));
  }
  if (n == 0) throw DomainError("no homogeneous-region positions in the application grid");
  out.improved_fraction = static_cast<double>(improved) / n;
  out.median_factor = median(factors);
  out.runtime_s = seconds_since(start);
  return out;
}

nlohmann::json report_to_json(const ValidationReport& report) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["observable"] = report.observable;
  j["method"] = report.method;
  j["layout"] = {{"n_rings", report.layout.n_rings()}, {"n_components", report.layout.n_components()}};
  j["prior_max_deviation_A_per_m"] = report.prior_max_deviation;
  j["posterior_max_deviation_A_per_m"] = report.posterior_max_deviation;
  j["reduction_percent"] = report.reduction;
  j["report_ring"] = report.report_ring;
  j["ring_reduction_percent"] = report.ring_reduction;
  j["variance_contracted"] = report.variance_contracted;
  j["acceptance_rate"] = number_or_null(report.acceptance_rate);
  return j;
}

nlohmann::json application_to_json(const ApplicationReport& report) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["n_z"] = report.profile.z.size();
  j["n_fringe"] = std::count(report.profile.fringe.begin(), report.profile.fringe.end(), char{1});
  j["improved_fraction"] = report.improved_fraction;
  j["median_reduction_factor"] = number_or_null(report.median_factor);
  return j;
}

void write_report_csv(const std::string& path, const ValidationReport& report) {
  auto out = open_output(path);
  out << "label,truth,prior_mean,prior_var,posterior_mean,posterior_var\n";
  const auto labels = report.layout.labels();
  for (Eigen::Index k = 0; k < report.truth.size(); ++k) {
    out << labels[static_cast<std::size_t>(k)] << ',' << format_double(report.truth(k)) << ','
        << format_double(report.prior_mean(k)) << ',' << format_double(report.prior_var(k)) << ','
        << format_double(report.posterior_mean(k)) << ',' << format_double(report.posterior_var(k)) << '\n';
  }
}

void write_application_csv(const std::string& path, const ApplicationReport& report) {
  auto out = open_output(path);
  out << "z_m,fringe,sigma_T,b_meas_T,b_prior_T,b_posterior_T,e_rel_prior,e_rel_posterior\n";
  const auto cell = [](const RelativeErrorProfile& e, Eigen::Index k) {
    return e.masked[static_cast<std::size_t>(k)] ? std::string("masked") : format_double(e.e_rel(k));
  };
  for (Eigen::Index k = 0; k < report.profile.z.size(); ++k) {
    out << format_double(report.profile.z(k)) << ',' << int(report.profile.fringe[static_cast<std::size_t>(k)]) << ','
        << format_double(report.profile.sigma(k)) << ',' << format_double(report.b_meas(k)) << ','
        << format_double(report.b_prior(k)) << ',' << format_double(report.b_posterior(k)) << ','
        << cell(report.e_prior, k) << ',' << cell(report.e_posterior, k) << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw DomainError(fmt::format("cannot open '{}'", path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != header) {
    throw DomainError(fmt::format("{}: unexpected header", path));
  }
  std::vector<std::vector<std::string>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DomainError(fmt::format("{}:{}: expected {} fields", path, lineno, header.size()));
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace

ValidationReport read_report_csv(const std::string& path, const ParameterLayout& layout, int report_ring) {
  const auto rows =
      read_csv_rows(path, {"label", "truth", "prior_mean", "prior_var", "posterior_mean", "posterior_var"});
  if (static_cast<Eigen::Index>(rows.size()) != layout.dimension()) {
    throw DomainError(fmt::format("{}: {} rows for a layout of dimension {}", path, rows.size(), layout.dimension()));
  }
  const auto n = layout.dimension();
  Eigen::VectorXd truth(n), prior_mean(n), prior_var(n), post_mean(n), post_var(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& f = rows[static_cast<std::size_t>(k)];
    const std::string where = fmt::format("{}:{}", path, k + 2);
    truth(k) = parse_double(f[1], where);
    prior_mean(k) = parse_double(f[2], where);
    prior_var(k) = parse_double(f[3], where);
    post_mean(k) = parse_double(f[4], where);
    post_var(k) = parse_double(f[5], where);
  }
  ValidationReport r;
  r.layout = layout;
  r.truth = truth;
  r.prior_mean = prior_mean;
  r.prior_var = prior_var;
  r.posterior_mean = post_mean;
  r.posterior_var = post_var;
  r.prior_max_deviation = r.prior_deviation().maxCoeff();
  r.posterior_max_deviation = r.posterior_deviation().maxCoeff();
  const auto red = reduction_metric(prior_mean, post_mean, truth, layout);
  r.reduction = red.overall;
  r.report_ring = std::clamp(report_ring, 1, layout.n_rings());
  r.ring_reduction = red.per_ring[static_cast<std::size_t>(r.report_ring - 1)];
  r.variance_contracted = (post_var.array() <= prior_var.array() * (1.0 + 1e-12)).all();
  return r;
}

ApplicationReport read_application_csv(const std::string& path) {
  const auto rows = read_csv_rows(path, {"z_m", "fringe", "sigma_T", "b_meas_T", "b_prior_T", "b_posterior_T",
                                         "e_rel_prior", "e_rel_posterior"});
  const auto n = static_cast<Eigen::Index>(rows.size());
  ApplicationReport r;
  r.profile.z.resize(n);
  r.profile.sigma.resize(n);
  r.b_meas.resize(n);
  r.b_prior.resize(n);
  r.b_posterior.resize(n);
  r.e_prior.e_rel.resize(n);
  r.e_posterior.e_rel.resize(n);
  const auto cell = [](const std::string& f, const std::string& where, RelativeErrorProfile& e, Eigen::Index k) {
    const bool masked = f == "masked";
    e.masked.push_back(masked ? 1 : 0);
    e.e_rel(k) = masked ? std::numeric_limits<double>::quiet_NaN() : parse_double(f, where);
  };
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& f = rows[static_cast<std::size_t>(k)];
    const std::string where = fmt::format("{}:{}", path, k + 2);
    r.profile.z(k) = parse_double(f[0], where);
    r.profile.fringe.push_back(parse_int(f[1], where) != 0 ? 1 : 0);
    r.profile.sigma(k) = parse_double(f[2], where);
    r.b_meas(k) = parse_double(f[3], where);
    r.b_prior(k) = parse_double(f[4], where);
    r.b_posterior(k) = parse_double(f[5], where);
    cell(f[6], where, r.e_prior, k);
    cell(f[7], where, r.e_posterior, k);
  }
  return r;
}

}  // namespace halbach
