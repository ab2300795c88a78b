#include "halbach/inference.hpp"

#include "halbach/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

namespace halbach {

namespace {

constexpr std::uint64_t kChainStream = 0x70636e;

void check_noise(const Eigen::VectorXd& noise_var, Eigen::Index rows) {
  if (noise_var.size() != rows) {
    throw DomainError(fmt::format("noise variance has {} entries, expected {}", noise_var.size(), rows));
  }
  if (!(noise_var.array() > 0.0).all() || !noise_var.allFinite()) {
    throw DomainError("noise variances must be positive and finite");
  }
}

void check_step(double s) {
  if (!(s > 0.0 && s <= 1.0)) throw DomainError(fmt::format("pCN step size must be in (0, 1], got {}", s));
}

}  // namespace

FemForward::FemForward(fem::FemContext context, ObservableSpec spec, ParameterLayout layout)
    : context_(std::move(context)), spec_(std::move(spec)), layout_(layout) {
  if (layout_.n_components() != 2 || layout_.n_rings() != 1) {
    throw DomainError("the finite-element forward model needs a single-ring two-component layout");
  }
  if (spec_.n_components() != 2) throw DomainError("the finite-element forward model needs a 2D observable");
}

Eigen::VectorXd FemForward::evaluate(const Eigen::VectorXd& p) {
  const ParameterVector pv(p, layout_);
  const auto sol = last_ ? context_.solve(pv, *last_) : context_.solve(pv);
  last_ = sol.A;
  return context_.observe(sol, spec_);
}

std::unique_ptr<ForwardModel> FemForward::clone() const {
  auto copy = std::make_unique<FemForward>(fem::FemContext(context_), spec_, layout_);
  copy->last_ = last_;
  return copy;
}

GaussianDensity conjugate_update(const LinearOperator& H, const Eigen::VectorXd& noise_var,
                                 const Eigen::VectorXd& q_obs, const GaussianDensity& prior) {
  return conjugate_update(H.matrix(), noise_var, q_obs, prior);
}

GaussianDensity conjugate_update(const Eigen::MatrixXd& H, const Eigen::VectorXd& noise_var,
                                 const Eigen::VectorXd& q_obs, const GaussianDensity& prior) {
  if (H.cols() != prior.dimension()) {
    throw DomainError(fmt::format("operator has {} columns, prior dimension is {}", H.cols(), prior.dimension()));
  }
  if (q_obs.size() != H.rows()) {
    throw DomainError(fmt::format("observation has {} entries, operator has {} rows", q_obs.size(), H.rows()));
  }
  check_noise(noise_var, H.rows());
  const Eigen::VectorXd inv_sigma = noise_var.array().rsqrt();
  const auto& L0 = prior.cholesky();

  const Eigen::MatrixXd A = inv_sigma.asDiagonal() * (H * L0.triangularView<Eigen::Lower>());
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(A.cols(), A.cols());
  system.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  system = system.selfadjointView<Eigen::Lower>();
  const Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(system, Eigen::EigenvaluesOnly).eigenvalues()(0);
    throw DomainError(fmt::format("posterior precision is not positive definite (smallest eigenvalue {:.3e})", lmin));
  }

  const Eigen::VectorXd misfit = inv_sigma.cwiseProduct(q_obs - H * prior.mean());
  const Eigen::VectorXd shift = llt.solve(A.transpose() * misfit);
  Eigen::VectorXd mean = prior.mean() + L0.triangularView<Eigen::Lower>() * shift;

  // C1 = L0·B⁻¹·L0ᵀ = W·Wᵀ with W = L0·L_B⁻ᵀ.
  const Eigen::MatrixXd LB = llt.matrixL();
  Eigen::MatrixXd W = L0.triangularView<Eigen::Lower>();
  LB.triangularView<Eigen::Lower>().transpose().solveInPlace<Eigen::OnTheRight>(W);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(W.rows(), W.rows());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(W);
  cov = cov.selfadjointView<Eigen::Lower>();
  return {std::move(mean), std::move(cov)};
}

double log_likelihood(const Eigen::VectorXd& predicted, const Eigen::VectorXd& q_obs,
                      const Eigen::VectorXd& noise_var) {
  if (predicted.size() != q_obs.size()) {
    throw DomainError(fmt::format("prediction has {} entries, observation {}", predicted.size(), q_obs.size()));
  }
  check_noise(noise_var, q_obs.size());
  return -0.5 * ((predicted - q_obs).array().square() / noise_var.array()).sum();
}

double log_likelihood(const Eigen::VectorXd& p, const Eigen::VectorXd& q_obs, const Eigen::VectorXd& noise_var,
                      ForwardModel& forward) {
  return log_likelihood(forward.evaluate(p), q_obs, noise_var);
}

Eigen::VectorXd pcn_propose(const Eigen::VectorXd& p, const GaussianDensity& prior, double s, Rng& rng) {
  check_step(s);
  const double a = std::sqrt(1.0 - s * s);
  const Eigen::VectorXd xi = standard_normal(rng, prior.dimension());
  const Eigen::VectorXd step = prior.cholesky().triangularView<Eigen::Lower>() * xi;
  return prior.mean() + a * (p - prior.mean()) + s * step;
}

Eigen::VectorXd strict_propose(const Eigen::VectorXd& p, const GaussianDensity& prior, double s, Rng& rng) {
  check_step(s);
  const double a = std::sqrt(1.0 - s * s);
  const Eigen::VectorXd xi = standard_normal(rng, prior.dimension());
  const Eigen::VectorXd step = prior.cholesky().triangularView<Eigen::Lower>() * xi;
  return a * p + std::sqrt(s) * step;
}

double pcn_accept_prob(double loglik_current, double loglik_proposal) {
  const double d = loglik_proposal - loglik_current;
  if (std::isnan(d)) throw DomainError("acceptance ratio is undefined");
  return d >= 0.0 ? 1.0 : std::exp(d);
}

double pcn_accept_prob(const Eigen::VectorXd& p, const Eigen::VectorXd& proposal, const Eigen::VectorXd& q_obs,
                       const Eigen::VectorXd& noise_var, ForwardModel& forward) {
  return pcn_accept_prob(log_likelihood(p, q_obs, noise_var, forward),
                         log_likelihood(proposal, q_obs, noise_var, forward));
}

double strict_log_ratio(const Eigen::VectorXd& p, double loglik_current, const Eigen::VectorXd& proposal,
                        double loglik_proposal, const GaussianDensity& prior, double s) {
  check_step(s);
  const double a = std::sqrt(1.0 - s * s);
  const auto L = prior.cholesky().triangularView<Eigen::Lower>();
  const auto log_q = [&](const Eigen::VectorXd& to, const Eigen::VectorXd& from) {
    return -0.5 * L.solve(to - a * from).squaredNorm() / s;
  };
  return prior.log_density(proposal) + loglik_proposal + log_q(p, proposal) - prior.log_density(p) -
         loglik_current - log_q(proposal, p);
}

double Chain::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  const auto n = std::count(accepted.begin(), accepted.end(), char{1});
  return static_cast<double>(n) / static_cast<double>(accepted.size());
}

Chain run_chain(ForwardModel& forward, const GaussianDensity& prior, const Eigen::VectorXd& q_obs,
                const Eigen::VectorXd& noise_var, const PcnOptions& options) {
  if (options.n_steps < 1) throw DomainError("a chain needs at least one step");
  check_step(options.step_size);
  if (forward.input_dimension() != prior.dimension()) {
    throw DomainError(fmt::format("forward model takes {} parameters, prior has {}", forward.input_dimension(),
                                  prior.dimension()));
  }
  check_noise(noise_var, q_obs.size());

  Chain chain;
  chain.step_size = options.step_size;
  chain.seed = options.seed;
  chain.strict = options.strict;
  const Eigen::Index n = options.n_steps;
  chain.states.resize(prior.dimension(), n + 1);
  chain.log_likelihood.resize(n + 1);
  chain.accepted.reserve(static_cast<std::size_t>(n));

  auto truncate = [&](Eigen::Index filled) {
    chain.states.conservativeResize(Eigen::NoChange, filled);
    chain.log_likelihood.conservativeResize(filled);
  };

  Rng rng = make_rng(options.seed, kChainStream);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd current = prior.mean();
  double ll_current = 0.0;
  try {
    ll_current = log_likelihood(forward.evaluate(current), q_obs, noise_var);
  } catch (const Error& e) {
    truncate(0);
    throw ChainError(fmt::format("forward model failed at the initial state: {}", e.what()), std::move(chain));
  }
  chain.states.col(0) = current;
  chain.log_likelihood(0) = ll_current;

  for (Eigen::Index k = 1; k <= n; ++k) {
    Eigen::VectorXd proposal = options.strict ? strict_propose(current, prior, options.step_size, rng)
                                              : pcn_propose(current, prior, options.step_size, rng);
    double ll_proposal = 0.0;
    try {
      ll_proposal = log_likelihood(forward.evaluate(proposal), q_obs, noise_var);
    } catch (const Error& e) {
      truncate(k);
      throw ChainError(fmt::format("forward model failed at step {}: {}", k, e.what()), std::move(chain));
    }
    const double log_ratio = options.strict
                                 ? strict_log_ratio(current, ll_current, proposal, ll_proposal, prior, options.step_size)
                                 : ll_proposal - ll_current;
    const double u = unif(rng);
    const bool accept = std::isfinite(ll_proposal) && proposal.allFinite() && std::log(u) < log_ratio;
    if (accept) {
      current = std::move(proposal);
      ll_current = ll_proposal;
    }
    chain.accepted.push_back(accept ? 1 : 0);
    chain.states.col(k) = current;
    chain.log_likelihood(k) = ll_current;
  }
  return chain;
}

std::vector<Chain> run_chains(const ForwardModel& forward, const GaussianDensity& prior, const Eigen::VectorXd& q_obs,
                              const Eigen::VectorXd& noise_var, const PcnOptions& options, int n_chains) {
  if (n_chains < 1) throw DomainError("at least one chain is required");
  std::vector<Chain> chains(static_cast<std::size_t>(n_chains));
  parallel_for(chains.size(), [&](std::size_t k) {
    auto local = forward.clone();
    PcnOptions o = options;
    o.seed = options.seed + k;
    chains[k] = run_chain(*local, prior, q_obs, noise_var, o);
  });
  return chains;
}

double autocorrelation_time(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 2) throw DomainError("autocorrelation needs at least two samples");
  const Eigen::VectorXd centred = x.array() - x.mean();
  const double gamma0 = centred.squaredNorm() / static_cast<double>(n);
  if (!(gamma0 > 0.0)) return 1.0;

  // Zero-padded FFT gives the biased autocovariance at every lag.
  Eigen::Index m = 1;
  while (m < 2 * n) m *= 2;
  std::vector<double> padded(static_cast<std::size_t>(m), 0.0);
  std::copy(centred.data(), centred.data() + n, padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  for (auto& c : spectrum) c = std::norm(c);
  std::vector<double> acov;
  fft.inv(acov, spectrum);

  double tau = -1.0;
  for (Eigen::Index lag = 0; lag + 1 < n; lag += 2) {
    const double pair = (acov[static_cast<std::size_t>(lag)] + acov[static_cast<std::size_t>(lag + 1)]) /
                        (static_cast<double>(n) * gamma0);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::max(tau, 1.0 / static_cast<double>(n));
}

double effective_sample_size(const Eigen::VectorXd& x) {
  const auto n = static_cast<double>(x.size());
  return std::min(n, n / autocorrelation_time(x));
}

PosteriorSummary summarize_states(const std::vector<Eigen::MatrixXd>& states, double burn_in_fraction) {
  if (states.empty()) throw DomainError("no chains to summarize");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw DomainError(fmt::format("burn-in fraction must be in [0, 1), got {}", burn_in_fraction));
  }
  const Eigen::Index dim = states.front().rows();
  const Eigen::Index n = states.front().cols();
  for (const auto& s : states) {
    if (s.rows() != dim || s.cols() != n) throw DomainError("chains to pool must have equal shape");
  }
  PosteriorSummary out;
  out.burn_in = static_cast<Eigen::Index>(std::floor(burn_in_fraction * static_cast<double>(n)));
  const Eigen::Index kept = n - out.burn_in;
  if (kept < 100) throw DomainError(fmt::format("chain too short: {} states after burn-in, need 100", kept));
  out.retained = kept * static_cast<Eigen::Index>(states.size());

  out.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : states) out.mean += s.rightCols(kept).rowwise().sum();
  out.mean /= static_cast<double>(out.retained);

  out.covariance = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& s : states) {
    const Eigen::MatrixXd centred = s.rightCols(kept).colwise() - out.mean;
    out.covariance.selfadjointView<Eigen::Lower>().rankUpdate(centred);
  }
  out.covariance = out.covariance.selfadjointView<Eigen::Lower>();
  out.covariance /= static_cast<double>(out.retained - 1);

  out.ess = Eigen::VectorXd::Zero(dim);
  bool flat = false;
  for (Eigen::Index c = 0; c < dim; ++c) {
    for (const auto& s : states) {
      const Eigen::VectorXd x = s.row(c).tail(kept).transpose();
      if ((x.array() == x(0)).all()) flat = true;
      out.ess(c) += effective_sample_size(x);
    }
  }
  if (flat) spdlog::warn("chain has coordinates without variation; their effective sample size is not meaningful");
  out.std_error = (out.covariance.diagonal().array() / out.ess.array()).sqrt();
  return out;
}

PosteriorSummary summarize_chain(const Chain& chain, double burn_in_fraction) {
  return summarize_states({chain.states}, burn_in_fraction);
}

PosteriorSummary summarize_chains(const std::vector<Chain>& chains, double burn_in_fraction) {
  std::vector<Eigen::MatrixXd> states;
  states.reserve(chains.size());
  for (const auto& c : chains) states.push_back(c.states);
  return summarize_states(states, burn_in_fraction);
}

}  // namespace halbach
