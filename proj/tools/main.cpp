#include "run_context.hpp"

#include "halbach/config.hpp"
#include "halbach/field_analytic.hpp"
#include "halbach/harness.hpp"
#include "halbach/inference.hpp"
#include "halbach/parallel.hpp"
#include "halbach/persistence.hpp"
#include "halbach/prior.hpp"
#include "halbach/svg.hpp"
#include "halbach/textio.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;

namespace halbach::cli {

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool seeded) {
  cmd->add_option("--config", o.config, "TOML run configuration (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory")->required();
  if (seeded) o.seed_option = cmd->add_option("--seed", o.seed, "Random seed (required)")->required();
}

RunConfig resolve_config(const CommonOptions& o) {
  return o.config.empty() ? parse_run_config("", "defaults") : load_run_config(o.config);
}

/// Everything derived from the configuration that the pipeline stages share.
struct Model {
  RunConfig config;
  HalbachArray array;
  ParameterLayout layout;
  ObservableSpec spec;
  Eigen::VectorXd sigma;
};

ObservableSpec make_spec(const RunConfig& c, const HalbachArray& array) {
  const auto& v = c.validation;
  if (c.observable == ObservableChoice::field) return field_observable(array, v.field, c.model_dimension);
  return fourier_observable(array, v.fourier, ring_z_grid(array, v.fourier.z_per_ring), c.model_dimension);
}

Model build_model(const RunConfig& c) {
  auto array = HalbachArray::build(c.validation.array);
  const ParameterLayout layout = c.model_dimension == 3 ? ParameterLayout(array.n_rings(), 3) : ParameterLayout(1, 2);
  auto spec = make_spec(c, array);
  Eigen::VectorXd sigma;
  if (c.noise_profile == NoiseProfileKind::fringe) {
    const Eigen::VectorXd rz = spec.row_z();
    const auto& app = c.validation.application;
    sigma = build_sigma_profile(std::vector<double>(rz.data(), rz.data() + rz.size()), array.half_length(),
                                app.margin, app.sigma_homogeneous, app.sigma_fringe)
                .row_sigma(spec);
  } else {
    const double s = c.observable == ObservableChoice::field ? c.validation.field.sigma : c.validation.fourier.sigma;
    sigma = Eigen::VectorXd::Constant(spec.dimension(), s);
  }
  return {c, std::move(array), layout, std::move(spec), std::move(sigma)};
}

/// Prior from a saved density, a Helmholtz CSV or the synthetic data.
GaussianDensity resolve_prior(const Model& m, const std::string& prior_path) {
  if (!prior_path.empty()) {
    ParameterLayout layout(1, 2);
    auto prior = load_gaussian(prior_path, &layout);
    if (!(layout == m.layout)) {
      throw ConfigError(fmt::format("prior '{}' has {} rings × {} components, the configured model needs {} × {}",
                                    prior_path, layout.n_rings(), layout.n_components(), m.layout.n_rings(),
                                    m.layout.n_components()));
    }
    return prior;
  }
  if (!m.config.prior_csv.empty()) {
    return fit_prior(load_helmholtz_csv(m.config.prior_csv), m.layout, m.config.validation.prior_options);
  }
  return build_synthetic_prior(m.array, m.layout, m.config.validation.prior);
}

void record_prior_inputs(RunContext& ctx, const Model& m, const std::string& prior_path) {
  if (!prior_path.empty()) {
    ctx.add_input("prior", prior_path);
  } else if (!m.config.prior_csv.empty()) {
    ctx.add_input("helmholtz", m.config.prior_csv);
  }
}

std::unique_ptr<ForwardModel> make_forward(const Model& m) {
  if (m.config.validation.pcn.forward == ForwardKind::fem) return make_2d_forward(m.config.validation, m.spec);
  return std::make_unique<LinearForward>(assemble_linear_operator(m.array, m.spec, m.layout));
}

void write_snapshot(RunContext& ctx, const RunConfig& c) { ctx.write_text("config.resolved.toml", run_config_to_toml(c)); }

std::string vector_csv(const std::vector<std::string>& labels, const std::vector<std::string>& names,
                       const std::vector<Eigen::VectorXd>& columns) {
  std::string out = "label";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out += labels[k];
    for (const auto& c : columns) out += "," + format_double(c(static_cast<Eigen::Index>(k)));
    out += "\n";
  }
  return out;
}

Eigen::VectorXd read_vector_csv(const std::string& path, const ParameterLayout& layout) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "label") throw DomainError(path + ": expected a label,value header");
  const auto labels = layout.labels();
  Eigen::VectorXd v(layout.dimension());
  Eigen::Index k = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = fmt::format("{}:{}", path, lineno);
    if (k >= v.size() || f.size() < 2 || f[0] != labels[static_cast<std::size_t>(k)]) {
      throw DomainError(where + ": row does not match the configured parameter layout");
    }
    v(k++) = parse_double(f[1], where);
  }
  if (k != v.size()) throw DomainError(fmt::format("{}: {} rows, expected {}", path, k, v.size()));
  return v;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- geometry

int cmd_geometry(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto m = build_model(cfg);
  RunContext ctx(o.out, "geometry", std::nullopt);
  write_snapshot(ctx, cfg);
  ctx.write_json("geometry.json", geometry_to_json(m.array));
  ctx.write_json("layout.json", {{"layout", layout_to_json(m.layout)}, {"labels", m.layout.labels()}});
  ctx.write_json("observable.json", m.spec.to_json());
  ctx.finish();
  return 0;
}

// --------------------------------------------------------- synth-helmholtz

int cmd_synth(const CommonOptions& o) {
  auto cfg = resolve_config(o);
  cfg.validation.prior.seed = o.seed;
  const auto m = build_model(cfg);
  RunContext ctx(o.out, "synth-helmholtz", o.seed);
  write_snapshot(ctx, cfg);
  const auto& p = cfg.validation.prior;
  const auto types = default_block_types(m.array, p.sigma, p.sigma_z, p.offset_sigma, o.seed);
  const auto records = synth_helmholtz(m.array, types, o.seed);
  write_helmholtz_csv(ctx.path("helmholtz.csv").string(), records);
  ctx.add("helmholtz.csv");
  nlohmann::json jt = nlohmann::json::array();
  for (std::size_t i = 0; i < types.size(); ++i) {
    const auto& t = types[i];
    nlohmann::json cov = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) cov.push_back({t.covariance(r, 0), t.covariance(r, 1), t.covariance(r, 2)});
    jt.push_back({{"block", i + 1}, {"mean_A_per_m", {t.mean.x(), t.mean.y(), t.mean.z()}}, {"covariance", cov}});
  }
  ctx.write_json("block_types.json", jt);
  ctx.finish();
  return 0;
}

// --------------------------------------------------------------- fit-prior

int cmd_fit_prior(const CommonOptions& o, const std::string& helmholtz) {
  auto cfg = resolve_config(o);
  if (!helmholtz.empty()) cfg.prior_csv = helmholtz;
  if (cfg.prior_csv.empty()) throw ConfigError("fit-prior needs --helmholtz or prior.csv in the configuration");
  const auto m = build_model(cfg);
  const auto records = load_helmholtz_csv(cfg.prior_csv);
  const auto prior = fit_prior(records, m.layout, cfg.validation.prior_options);

  RunContext ctx(o.out, "fit-prior", std::nullopt);
  ctx.add_input("helmholtz", cfg.prior_csv);
  write_snapshot(ctx, cfg);
  if (prior.jitter() > 0.0) spdlog::warn("prior covariance needed a jitter of {}", prior.jitter());
  const auto files = save_gaussian(ctx.path("prior"), prior, m.layout, "prior");
  ctx.add(files.json.filename().string());
  ctx.add(files.covariance.filename().string());

  std::string ad = "block,component,n,a2,a2_adjusted,reject_5pct\n";
  static const char* kComp[] = {"x", "y", "z"};
  for (int i = 1; i <= kBlocksPerRing; ++i) {
    for (int c = 0; c < m.layout.n_components(); ++c) {
      std::vector<double> x;
      for (const auto& r : records) {
        if (r.block == i) x.push_back(r.magnetization()(c));
      }
      std::string row = fmt::format("{},{},{},", i, kComp[c], x.size());
      try {
        const auto res = anderson_darling(x);
        row += fmt::format("{},{},{}", format_double(res.a2), format_double(res.a2_adjusted), res.reject_5pct ? 1 : 0);
      } catch (const DomainError& e) {
        spdlog::warn("Anderson-Darling skipped for block {} {}: {}", i, kComp[c], e.what());
        row += "nan,nan,nan";
      }
      ad += row + "\n";
    }
  }
  ctx.write_text("anderson_darling.csv", ad);
  ctx.finish();
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommonOptions& o, const std::string& prior_path) {
  const auto cfg = resolve_config(o);
  const auto m = build_model(cfg);
  const auto prior = resolve_prior(m, prior_path);
  RunContext ctx(o.out, "simulate", std::nullopt);
  record_prior_inputs(ctx, m, prior_path);
  write_snapshot(ctx, cfg);
  std::optional<LinearOperator> op;
  {
    StageTimer t("operator assembly");
    op = assemble_linear_operator(m.array, m.spec, m.layout);
  }
  const auto files = save_operator(ctx.path("operator"), *op, m.spec.to_json());
  ctx.add(files.json.filename().string());
  ctx.add(files.covariance.filename().string());
  ctx.write_json("observable.json", m.spec.to_json());

  const Eigen::VectorXd nominal = nominal_parameter_vector(m.array, m.layout).values;
  std::vector<std::string> names{"nominal_T", "prior_mean_T"};
  std::vector<Eigen::VectorXd> cols{op->apply(nominal), op->apply(prior.mean())};
  if (cfg.validation.pcn.forward == ForwardKind::fem) {
    StageTimer t("FE forward solve");
    auto fe = make_2d_forward(cfg.validation, m.spec);
    names.push_back("prior_mean_fem_T");
    cols.push_back(fe->evaluate(prior.mean()));
  }
  ctx.write_text("prediction.csv", vector_csv(m.spec.row_labels(), names, cols));
  ctx.finish();
  return 0;
}

// ----------------------------------------------------------------- observe

int cmd_observe(const CommonOptions& o, const std::string& prior_path, const std::string& truth_path) {
  const auto cfg = resolve_config(o);
  const auto m = build_model(cfg);
  const auto prior = resolve_prior(m, prior_path);
  const Eigen::VectorXd truth = truth_path.empty() ? draw_ground_truth(prior, o.seed) : read_vector_csv(truth_path, m.layout);
  RunContext ctx(o.out, "observe", o.seed);
  record_prior_inputs(ctx, m, prior_path);
  if (!truth_path.empty()) ctx.add_input("truth", truth_path);
  write_snapshot(ctx, cfg);
  auto forward = make_forward(m);
  std::optional<Observation> obs;
  {
    StageTimer t("forward evaluation");
    obs = make_observation(*forward, m.spec, truth, m.sigma, o.seed);
  }
  ctx.write_text("truth.csv", vector_csv(m.layout.labels(), {"value_A_per_m"}, {truth}));
  write_observation_csv(ctx.path("observation.csv").string(), *obs);
  ctx.add("observation.csv");
  ctx.write_json("observable.json", m.spec.to_json());
  ctx.finish();
  return 0;
}

// ------------------------------------------------------------------- infer

struct InferOptions {
  std::string observation;
  std::string prior;
  std::string mode;
  std::string forward;
  int steps = 0;
  double step_size = 0.0;
  double burn_in = -1.0;
  int chains = 0;
  bool strict = false;
};

void apply_overrides(RunConfig& cfg, const InferOptions& io) {
  if (!io.mode.empty()) cfg.mode = io.mode == "pcn" ? InferenceMode::pcn : InferenceMode::linear;
  if (!io.forward.empty()) cfg.validation.pcn.forward = io.forward == "fem" ? ForwardKind::fem : ForwardKind::linear;
  if (io.steps > 0) cfg.validation.pcn.n_steps = io.steps;
  if (io.step_size > 0.0) cfg.validation.pcn.step_size = io.step_size;
  if (io.burn_in >= 0.0) cfg.validation.pcn.burn_in = io.burn_in;
  if (io.chains > 0) cfg.n_chains = io.chains;
  if (io.strict) cfg.validation.pcn.strict = true;
  validate_run_config(cfg);
}

int cmd_infer(const CommonOptions& o, const InferOptions& io) {
  auto cfg = resolve_config(o);
  apply_overrides(cfg, io);
  const bool pcn = cfg.mode == InferenceMode::pcn;
  if (pcn && o.seed_option->count() == 0) throw ConfigError("--seed is required for pCN inference");
  const auto m = build_model(cfg);
  const auto prior = resolve_prior(m, io.prior);
  const auto obs = read_observation_csv(io.observation, m.spec);

  RunContext ctx(o.out, "infer", pcn ? std::optional<std::uint64_t>(o.seed) : std::nullopt);
  record_prior_inputs(ctx, m, io.prior);
  ctx.add_input("observation", io.observation);
  write_snapshot(ctx, cfg);
  const auto labels = m.layout.labels();
  const Eigen::VectorXd prior_sd = prior.covariance().diagonal().cwiseSqrt();

  if (!pcn) {
    std::optional<LinearOperator> op;
    {
      StageTimer t("operator assembly");
      op = assemble_linear_operator(m.array, m.spec, m.layout);
    }
    std::optional<GaussianDensity> post;
    {
      StageTimer t("conjugate update");
      post = conjugate_update(*op, obs.noise_var, obs.values, prior);
    }
    const auto files = save_gaussian(ctx.path("posterior"), *post, m.layout, "posterior");
    ctx.add(files.json.filename().string());
    ctx.add(files.covariance.filename().string());
    ctx.write_text("posterior_summary.csv",
                   vector_csv(labels, {"prior_mean", "prior_sd", "posterior_mean", "posterior_sd"},
                              {prior.mean(), prior_sd, post->mean(), post->covariance().diagonal().cwiseSqrt()}));
    ctx.finish();
    return 0;
  }

  auto forward = make_forward(m);
  PcnOptions opts;
  opts.step_size = cfg.validation.pcn.step_size;
  opts.n_steps = cfg.validation.pcn.n_steps;
  opts.seed = o.seed;
  opts.strict = cfg.validation.pcn.strict;
  std::vector<Chain> chains;
  try {
    StageTimer t("pCN sampling");
    chains = run_chains(*forward, prior, obs.values, obs.noise_var, opts, cfg.n_chains);
    const double total = static_cast<double>(opts.n_steps) * cfg.n_chains;
    spdlog::info("timing: chain throughput {:.1f} steps/s over {} chain(s)", total / std::max(t.elapsed(), 1e-9),
                 cfg.n_chains);
  } catch (const ChainError& e) {
    write_chain(ctx.path("chain_partial.csv"), ctx.path("chain_partial.json"), e.partial(), m.layout);
    ctx.add("chain_partial.csv");
    ctx.add("chain_partial.json");
    ctx.finish();
    throw;
  }
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string stem = chains.size() == 1 ? "chain" : fmt::format("chain_{}", k);
    write_chain(ctx.path(stem + ".csv"), ctx.path(stem + ".json"), chains[k], m.layout);
    ctx.add(stem + ".csv");
    ctx.add(stem + ".json");
    spdlog::info("chain {} (seed {}): acceptance {:.3f}", k, chains[k].seed, chains[k].acceptance_rate());
  }
  const auto summary = summarize_chains(chains, cfg.validation.pcn.burn_in);
  const GaussianDensity post(summary.mean, summary.covariance);
  const auto files = save_gaussian(ctx.path("posterior"), post, m.layout, "posterior-sample");
  ctx.add(files.json.filename().string());
  ctx.add(files.covariance.filename().string());
  ctx.write_text("posterior_summary.csv",
                 vector_csv(labels, {"prior_mean", "prior_sd", "posterior_mean", "posterior_sd", "ess", "mc_std_error"},
                            {prior.mean(), prior_sd, summary.mean, summary.covariance.diagonal().cwiseSqrt(),
                             summary.ess, summary.std_error}));
  double acc = 0.0;
  for (const auto& c : chains) acc += c.acceptance_rate();
  ctx.write_json("chain_summary.json", {{"chains", chains.size()},
                                        {"burn_in_per_chain", summary.burn_in},
                                        {"retained", summary.retained},
                                        {"acceptance_rate", acc / static_cast<double>(chains.size())},
                                        {"min_ess", summary.ess.minCoeff()}});
  ctx.finish();
  return 0;
}

// ---------------------------------------------------------------- validate

struct ValidateOptions {
  std::string mode = "linear";
  int seeds = 1;
  int steps = 0;
  double step_size = 0.0;
  std::string forward;
  bool save_chains = false;
};

nlohmann::json seed_list(std::uint64_t first, int n) {
  nlohmann::json a = nlohmann::json::array();
  for (int k = 0; k < n; ++k) a.push_back(first + static_cast<std::uint64_t>(k));
  return a;
}

void write_validation_report(RunContext& ctx, const std::string& stem, const ValidationReport& r) {
  write_report_csv(ctx.path(stem + ".csv").string(), r);
  ctx.add(stem + ".csv");
  ctx.write_json(stem + ".json", report_to_json(r));
  ctx.write_text(stem + ".svg", deviation_plot_svg(r));
}

int cmd_validate(const CommonOptions& o, const ValidateOptions& vo) {
  auto cfg = resolve_config(o);
  if (vo.seeds < 1) throw ConfigError("--seeds must be at least 1");
  if (vo.steps > 0) cfg.validation.pcn.n_steps = vo.steps;
  if (vo.step_size > 0.0) cfg.validation.pcn.step_size = vo.step_size;
  if (!vo.forward.empty()) cfg.validation.pcn.forward = vo.forward == "fem" ? ForwardKind::fem : ForwardKind::linear;
  if (vo.mode == "pcn") {
    cfg.mode = InferenceMode::pcn;
    cfg.model_dimension = 2;
  } else if (cfg.validation.pcn.forward == ForwardKind::fem) {
    throw ConfigError("--forward fem applies to --mode pcn only");
  }
  validate_run_config(cfg);
  if (!cfg.prior_csv.empty()) cfg.validation.helmholtz = load_helmholtz_csv(cfg.prior_csv);

  RunContext ctx(o.out, "validate", o.seed);
  if (!cfg.prior_csv.empty()) ctx.add_input("helmholtz", cfg.prior_csv);
  write_snapshot(ctx, cfg);
  const auto n = static_cast<std::size_t>(vo.seeds);
  const auto seed_of = [&](std::size_t k) { return o.seed + k; };
  nlohmann::json summary{{"mode", vo.mode}, {"seeds", seed_list(o.seed, vo.seeds)}};
  std::string table;
  StageTimer total("validation");

  if (vo.mode == "linear") {
    std::vector<std::optional<LinearValidation>> out(n);
    parallel_for(n, [&](std::size_t k) { out[k] = run_linear_validation(cfg.validation, seed_of(k)); });
    table = "seed,observable,prior_max_deviation,posterior_max_deviation,reduction_percent,ring_reduction_percent,"
            "variance_contracted\n";
    std::vector<double> rf, rq;
    bool contracted = true;
    int positive_f = 0;
    int positive_q = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto dir = fmt::format("seed_{}/", seed_of(k));
      for (const auto* r : {&out[k]->field, &out[k]->fourier}) {
        write_validation_report(ctx, dir + r->observable, *r);
        table += fmt::format("{},{},{},{},{},{},{}\n", r->seed, r->observable, format_double(r->prior_max_deviation),
                             format_double(r->posterior_max_deviation), format_double(r->reduction),
                             format_double(r->ring_reduction), r->variance_contracted ? 1 : 0);
        contracted = contracted && r->variance_contracted;
      }
      spdlog::info("seed {}: field reduction {:.1f}%, fourier reduction {:.1f}% ({:.2f} s)", seed_of(k),
                   out[k]->field.reduction, out[k]->fourier.reduction, out[k]->field.runtime_s);
      rf.push_back(out[k]->field.reduction);
      rq.push_back(out[k]->fourier.reduction);
      positive_f += out[k]->field.reduction > 0.0;
      positive_q += out[k]->fourier.reduction > 0.0;
    }
    summary["field_median_reduction_percent"] = median(rf);
    summary["fourier_median_reduction_percent"] = median(rq);
    summary["field_positive_reductions"] = positive_f;
    summary["fourier_positive_reductions"] = positive_q;
    summary["variance_contracted_all"] = contracted;
  } else if (vo.mode == "pcn") {
    std::vector<std::optional<PcnValidation>> out(n);
    parallel_for(n, [&](std::size_t k) { out[k] = run_pcn_validation(cfg.validation, seed_of(k)); });
    table = "seed,prior_max_deviation,posterior_max_deviation,reduction_percent,acceptance_rate,min_ess\n";
    std::vector<double> red;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = out[k]->report;
      const auto dir = fmt::format("seed_{}/", seed_of(k));
      write_validation_report(ctx, dir + "field", r);
      if (vo.save_chains) {
        write_chain(ctx.path(dir + "chain.csv"), ctx.path(dir + "chain.json"), out[k]->chain, r.layout);
        ctx.add(dir + "chain.csv");
        ctx.add(dir + "chain.json");
      }
      table += fmt::format("{},{},{},{},{},{}\n", r.seed, format_double(r.prior_max_deviation),
                           format_double(r.posterior_max_deviation), format_double(r.reduction),
                           format_double(r.acceptance_rate), format_double(out[k]->summary.ess.minCoeff()));
      spdlog::info("seed {}: reduction {:.1f}%, acceptance {:.3f} ({:.2f} s)", r.seed, r.reduction, r.acceptance_rate,
                   r.runtime_s);
      red.push_back(r.reduction);
    }
    summary["median_reduction_percent"] = median(red);
    summary["n_steps"] = cfg.validation.pcn.n_steps;
    summary["step_size"] = cfg.validation.pcn.step_size;
    summary["forward"] = cfg.validation.pcn.forward == ForwardKind::fem ? "fem" : "linear";
  } else {
    std::vector<std::optional<ApplicationReport>> out(n);
    parallel_for(n, [&](std::size_t k) { out[k] = run_application(cfg.validation, seed_of(k)); });
    table = "seed,improved_fraction,median_reduction_factor\n";
    std::vector<double> frac, factor;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = *out[k];
      const auto dir = fmt::format("seed_{}/", seed_of(k));
      write_application_csv(ctx.path(dir + "application.csv").string(), r);
      ctx.add(dir + "application.csv");
      ctx.write_json(dir + "application.json", application_to_json(r));
      ctx.write_text(dir + "application.svg", error_profile_svg(r));
      table += fmt::format("{},{},{}\n", r.seed, format_double(r.improved_fraction), format_double(r.median_factor));
      spdlog::info("seed {}: E_rel improved at {:.1f}% of homogeneous positions, median factor {:.1f} ({:.2f} s)",
                   r.seed, 100.0 * r.improved_fraction, r.median_factor, r.runtime_s);
      frac.push_back(r.improved_fraction);
      factor.push_back(r.median_factor);
    }
    summary["min_improved_fraction"] = *std::min_element(frac.begin(), frac.end());
    summary["median_improved_fraction"] = median(frac);
    summary["median_reduction_factor"] = median(factor);
  }
  ctx.write_text("summary.csv", table);
  ctx.write_json("summary.json", summary);
  ctx.finish();
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const CommonOptions& o, const std::string& truth_path, const std::string& posterior_path,
                 const std::string& prior_path) {
  const auto cfg = resolve_config(o);
  const auto m = build_model(cfg);
  const auto prior = resolve_prior(m, prior_path);
  ParameterLayout post_layout(1, 2);
  const auto post = load_gaussian(posterior_path, &post_layout);
  if (!(post_layout == m.layout)) throw ConfigError("posterior layout does not match the configured model");
  const Eigen::VectorXd truth = read_vector_csv(truth_path, m.layout);

  RunContext ctx(o.out, "evaluate", std::nullopt);
  record_prior_inputs(ctx, m, prior_path);
  ctx.add_input("truth", truth_path);
  ctx.add_input("posterior", posterior_path);
  write_snapshot(ctx, cfg);
  const auto report = make_report(0, to_string(cfg.observable), "evaluate", m.layout, truth, prior, post.mean(),
                                  post.covariance().diagonal(), cfg.validation.report_ring);
  const auto red = reduction_metric(prior.mean(), post.mean(), truth, m.layout);
  const Eigen::VectorXd post_sd = post.covariance().diagonal().cwiseSqrt();
  const Eigen::VectorXd z = (post.mean() - truth).cwiseQuotient(post_sd);
  int covered = 0;
  for (Eigen::Index k = 0; k < z.size(); ++k) covered += std::abs(z(k)) <= 2.0;
  auto j = report_to_json(report);
  j.erase("seed");
  j.erase("acceptance_rate");
  j["per_ring_reduction_percent"] = red.per_ring;
  j["coverage_2sd"] = static_cast<double>(covered) / static_cast<double>(z.size());
  ctx.write_json("evaluation.json", j);
  write_report_csv(ctx.path("evaluation.csv").string(), report);
  ctx.add("evaluation.csv");
  ctx.write_text("deviation.svg", deviation_plot_svg(report));
  ctx.finish();
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
  const fs::path in(in_dir);
  const auto summary = read_json(in / "summary.json");
  const auto cfg = load_run_config(in / "config.resolved.toml");
  const std::string mode = summary.at("mode").get<std::string>();

  RunContext ctx(out_dir, "report", std::nullopt);
  ctx.add_input("summary", in / "summary.json");
  std::string md = fmt::format("# Validation report ({})\n\n", mode);
  const auto array = HalbachArray::build(cfg.validation.array);
  for (const auto& s : summary.at("seeds")) {
    const auto seed = s.get<std::uint64_t>();
    const auto dir = fmt::format("seed_{}", seed);
    if (mode == "application") {
      auto r = read_application_csv((in / dir / "application.csv").string());
      r.seed = seed;
      ctx.write_text(dir + "_application.svg", error_profile_svg(r));
      continue;
    }
    const bool linear = mode == "linear";
    const ParameterLayout layout = linear ? ParameterLayout(array.n_rings(), 3) : ParameterLayout(1, 2);
    for (const auto& obs : linear ? std::vector<std::string>{"field", "fourier"} : std::vector<std::string>{"field"}) {
      auto r = read_report_csv((in / dir / (obs + ".csv")).string(), layout, linear ? cfg.validation.report_ring : 1);
      r.seed = seed;
      r.observable = obs;
      r.method = linear ? "conjugate" : "pcn";
      ctx.write_text(fmt::format("{}_{}.svg", dir, obs), deviation_plot_svg(r));
    }
  }
  md += "| quantity | value |\n|---|---|\n";
  for (const auto& [key, value] : summary.items()) {
    if (key == "seeds" || key == "mode") continue;
    md += fmt::format("| {} | {} |\n", key, value.dump());
  }
  md += "\nPer-seed values:\n\n```\n" + read_file(in / "summary.csv") + "```\n";
  ctx.write_text("report.md", md);
  ctx.finish();
  return 0;
}

int check_threads_env() {
  if (const char* env = std::getenv("HALBACH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError(fmt::format("HALBACH_THREADS must be a positive integer, got '{}'", env));
    }
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Bayesian updating of Halbach-array magnetization"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "Console log level")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  CommonOptions geo, synth, fit, sim, obs, inf, val, eval;
  std::string helmholtz, sim_prior, obs_prior, obs_truth, eval_truth, eval_posterior, eval_prior, report_in,
      report_out;
  InferOptions io;
  ValidateOptions vo;

  auto* c_geo = app.add_subcommand("geometry", "Write the block geometry and parameter layout");
  add_common(c_geo, geo, false);

  auto* c_synth = app.add_subcommand("synth-helmholtz", "Synthesize Helmholtz-coil moment data");
  add_common(c_synth, synth, true);

  auto* c_fit = app.add_subcommand("fit-prior", "Fit the Gaussian prior to Helmholtz data");
  add_common(c_fit, fit, false);
  c_fit->add_option("--helmholtz", helmholtz, "Helmholtz CSV (overrides prior.csv)")->check(CLI::ExistingFile);

  auto* c_sim = app.add_subcommand("simulate", "Assemble the linear observation operator and predictions");
  add_common(c_sim, sim, false);
  c_sim->add_option("--prior", sim_prior, "Saved prior JSON")->check(CLI::ExistingFile);

  auto* c_obs = app.add_subcommand("observe", "Draw a ground truth and synthesize noisy observations");
  add_common(c_obs, obs, true);
  c_obs->add_option("--prior", obs_prior, "Saved prior JSON")->check(CLI::ExistingFile);
  c_obs->add_option("--truth", obs_truth, "Ground truth CSV (label,value) instead of a prior draw")
      ->check(CLI::ExistingFile);

  auto* c_inf = app.add_subcommand("infer", "Update the prior with an observation");
  add_common(c_inf, inf, false);
  inf.seed_option = c_inf->add_option("--seed", inf.seed, "Random seed (required for pcn)");
  c_inf->add_option("--observation", io.observation, "Observation CSV")->required()->check(CLI::ExistingFile);
  c_inf->add_option("--prior", io.prior, "Saved prior JSON")->check(CLI::ExistingFile);
  c_inf->add_option("--mode", io.mode, "linear or pcn")->check(CLI::IsMember({"linear", "pcn"}));
  c_inf->add_option("--forward", io.forward, "pCN forward model")->check(CLI::IsMember({"linear", "fem"}));
  c_inf->add_option("--steps", io.steps, "pCN steps per chain")->check(CLI::PositiveNumber);
  c_inf->add_option("--step-size", io.step_size, "pCN step size s")->check(CLI::Range(1e-12, 1.0));
  c_inf->add_option("--burn-in", io.burn_in, "Burn-in fraction")->check(CLI::Range(0.0, 0.999999));
  c_inf->add_option("--chains", io.chains, "Independent chains")->check(CLI::PositiveNumber);
  c_inf->add_flag("--strict", io.strict, "Literal proposal with the full acceptance ratio");

  auto* c_val = app.add_subcommand("validate", "Synthetic-truth validation over consecutive seeds");
  add_common(c_val, val, true);
  c_val->add_option("--mode", vo.mode, "linear, pcn or application")
      ->check(CLI::IsMember({"linear", "pcn", "application"}));
  c_val->add_option("--seeds", vo.seeds, "Number of seeds, starting at --seed")->check(CLI::PositiveNumber);
  c_val->add_option("--steps", vo.steps, "pCN steps")->check(CLI::PositiveNumber);
  c_val->add_option("--step-size", vo.step_size, "pCN step size s")->check(CLI::Range(1e-12, 1.0));
  c_val->add_option("--forward", vo.forward, "pCN forward model")->check(CLI::IsMember({"linear", "fem"}));
  c_val->add_flag("--save-chains", vo.save_chains, "Also write the pCN chains");

  auto* c_eval = app.add_subcommand("evaluate", "Compare a posterior with a known truth");
  add_common(c_eval, eval, false);
  c_eval->add_option("--truth", eval_truth, "Ground truth CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--posterior", eval_posterior, "Posterior JSON")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--prior", eval_prior, "Saved prior JSON")->check(CLI::ExistingFile);

  auto* c_rep = app.add_subcommand("report", "Render plots and a summary from a validate output directory");
  c_rep->add_option("--in", report_in, "validate output directory")->required()->check(CLI::ExistingDirectory);
  c_rep->add_option("--out", report_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");

  try {
    check_threads_env();
    if (*c_geo) return cmd_geometry(geo);
    if (*c_synth) return cmd_synth(synth);
    if (*c_fit) return cmd_fit_prior(fit, helmholtz);
    if (*c_sim) return cmd_simulate(sim, sim_prior);
    if (*c_obs) return cmd_observe(obs, obs_prior, obs_truth);
    if (*c_inf) return cmd_infer(inf, io);
    if (*c_val) return cmd_validate(val, vo);
    if (*c_eval) return cmd_evaluate(eval, eval_truth, eval_posterior, eval_prior);
    if (*c_rep) return cmd_report(report_in, report_out);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}

}  // namespace halbach::cli

int main(int argc, char** argv) { return halbach::cli::run(argc, argv); }
