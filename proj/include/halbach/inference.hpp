#pragma once

#include "halbach/common.hpp"
#include "halbach/fem/solver.hpp"
#include "halbach/field_analytic.hpp"
#include "halbach/geometry.hpp"
#include "halbach/observables.hpp"
#include "halbach/prior.hpp"
#include "halbach/random.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace halbach {

/// Parameter-to-observable map H(p). Implementations may keep mutable caches,
/// so one instance must not be shared between threads; use clone().
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Eigen::Index input_dimension() const = 0;
  virtual Eigen::Index output_dimension() const = 0;
  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& p) = 0;
  virtual std::unique_ptr<ForwardModel> clone() const = 0;
};

class LinearForward : public ForwardModel {
 public:
  explicit LinearForward(LinearOperator op) : op_(std::move(op)) {}

  Eigen::Index input_dimension() const override { return op_.cols(); }
  Eigen::Index output_dimension() const override { return op_.rows(); }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& p) override { return op_.apply(p); }
  std::unique_ptr<ForwardModel> clone() const override { return std::make_unique<LinearForward>(*this); }

  const LinearOperator& op() const { return op_; }

 private:
  LinearOperator op_;
};

/// Nonlinear 2D finite-element forward model. Each evaluation warm-starts
/// from the previous solution.
class FemForward : public ForwardModel {
 public:
  FemForward(fem::FemContext context, ObservableSpec spec, ParameterLayout layout);

  Eigen::Index input_dimension() const override { return layout_.dimension(); }
  Eigen::Index output_dimension() const override { return spec_.dimension(); }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& p) override;
  std::unique_ptr<ForwardModel> clone() const override;

  fem::FemContext& context() { return context_; }

 private:
  fem::FemContext context_;
  ObservableSpec spec_;
  ParameterLayout layout_;
  std::optional<Eigen::VectorXd> last_;
};

/// Gaussian posterior N(μ1, C1) of a linear model with diagonal noise
/// variance `noise_var`. The update is carried out in prior-whitened
/// coordinates: with A = Σ^{-1/2}·H·L0 the system I + AᵀA is factored by
/// Cholesky, so neither C0 nor Σ is inverted explicitly.
GaussianDensity conjugate_update(const LinearOperator& H, const Eigen::VectorXd& noise_var,
                                 const Eigen::VectorXd& q_obs, const GaussianDensity& prior);
GaussianDensity conjugate_update(const Eigen::MatrixXd& H, const Eigen::VectorXd& noise_var,
                                 const Eigen::VectorXd& q_obs, const GaussianDensity& prior);

/// −½‖predicted − q_obs‖² weighted by 1/noise_var; the Gaussian normalizing
/// constant is dropped.
double log_likelihood(const Eigen::VectorXd& predicted, const Eigen::VectorXd& q_obs,
                      const Eigen::VectorXd& noise_var);
double log_likelihood(const Eigen::VectorXd& p, const Eigen::VectorXd& q_obs, const Eigen::VectorXd& noise_var,
                      ForwardModel& forward);

/// μ0 + sqrt(1 − s²)(p − μ0) + s·L0·ξ.
Eigen::VectorXd pcn_propose(const Eigen::VectorXd& p, const GaussianDensity& prior, double s, Rng& rng);

/// sqrt(1 − s²)·p + sqrt(s)·L0·ξ, the proposal of the strict mode.
Eigen::VectorXd strict_propose(const Eigen::VectorXd& p, const GaussianDensity& prior, double s, Rng& rng);

/// min{1, exp(loglik_proposal − loglik_current)}.
double pcn_accept_prob(double loglik_current, double loglik_proposal);
double pcn_accept_prob(const Eigen::VectorXd& p, const Eigen::VectorXd& proposal, const Eigen::VectorXd& q_obs,
                       const Eigen::VectorXd& noise_var, ForwardModel& forward);

/// Log Metropolis–Hastings ratio of the strict mode: unnormalized posterior
/// ratio times the reverse-to-forward proposal density ratio.
double strict_log_ratio(const Eigen::VectorXd& p, double loglik_current, const Eigen::VectorXd& proposal,
                        double loglik_proposal, const GaussianDensity& prior, double s);

struct PcnOptions {
  double step_size = 1.0 / 80.0;
  int n_steps = 18000;
  std::uint64_t seed = 0;
  /// Literal proposal N(sqrt(1 − s²)p, s·C0) with the full acceptance ratio.
  bool strict = false;
};

/// Markov chain of n_steps transitions. Column k of `states` is the state
/// after k steps; column 0 is the prior mean.
struct Chain {
  Eigen::MatrixXd states;
  std::vector<char> accepted;          // per step
  Eigen::VectorXd log_likelihood;      // per state
  double step_size = 0.0;
  std::uint64_t seed = 0;
  bool strict = false;

  Eigen::Index n_states() const { return states.cols(); }
  double acceptance_rate() const;
};

/// A forward evaluation failed mid-chain; carries the states produced so far.
class ChainError : public DomainError {
 public:
  ChainError(const std::string& what, Chain partial) : DomainError(what), partial_(std::move(partial)) {}
  const Chain& partial() const { return partial_; }

 private:
  Chain partial_;
};

Chain run_chain(ForwardModel& forward, const GaussianDensity& prior, const Eigen::VectorXd& q_obs,
                const Eigen::VectorXd& noise_var, const PcnOptions& options);

/// Independent chains with seeds seed, seed + 1, ... run concurrently, each
/// on its own clone of `forward`. Results are ordered by seed.
std::vector<Chain> run_chains(const ForwardModel& forward, const GaussianDensity& prior, const Eigen::VectorXd& q_obs,
                              const Eigen::VectorXd& noise_var, const PcnOptions& options, int n_chains);

struct PosteriorSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd ess;         // per coordinate
  Eigen::VectorXd std_error;   // Monte Carlo standard error of the mean
  Eigen::Index burn_in = 0;    // per chain
  Eigen::Index retained = 0;   // total over chains
};

/// Integrated autocorrelation time by Geyer's initial positive sequence.
double autocorrelation_time(const Eigen::VectorXd& x);

/// Effective sample size n/τ, capped at n.
double effective_sample_size(const Eigen::VectorXd& x);

/// Statistics of the states remaining after dropping floor(fraction·n) from
/// the start of each chain; the retained states of all chains are pooled and
/// the ESS is summed over chains.
PosteriorSummary summarize_chain(const Chain& chain, double burn_in_fraction = 0.1);
PosteriorSummary summarize_chains(const std::vector<Chain>& chains, double burn_in_fraction = 0.1);
PosteriorSummary summarize_states(const std::vector<Eigen::MatrixXd>& states, double burn_in_fraction = 0.1);

}  // namespace halbach
