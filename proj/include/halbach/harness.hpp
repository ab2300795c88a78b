#pragma once

#include "halbach/common.hpp"
#include "halbach/fem/material.hpp"
#include "halbach/fem/solver.hpp"
#include "halbach/geometry.hpp"
#include "halbach/inference.hpp"
#include "halbach/observables.hpp"
#include "halbach/prior.hpp"

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace halbach {

/// Per-type scatter used to synthesize Helmholtz data when no measured file
/// is available (A/m).
struct SyntheticPriorConfig {
  double sigma = 3000.0;
  double sigma_z = 1000.0;
  double offset_sigma = 2500.0;
  std::uint64_t seed = 1;
};

/// Point-field observable: equispaced points on circles in the bore.
struct FieldObservableConfig {
  int n_points = 16;
  double radius_factor = 0.9;  // circle radius as a fraction of the inner radius
  int z_per_ring = 2;
  double sigma = 1e-4;         // T
};

/// Fourier observable on the reference circle.
struct FourierObservableConfig {
  double r0 = 0.075;
  int harmonics = 8;
  int n_theta = 60;
  int z_per_ring = 2;
  double sigma = 1e-6;  // T
  FourierConvention convention = FourierConvention::cos_in_B;
};

enum class ForwardKind { linear, fem };

struct FemConfig {
  double h_divisor = 10.0;  // target edge length r_i / h_divisor
  double iron_inner = 0.21;
  double iron_outer = 0.25;
  fem::Materials materials;
  fem::SolverOptions solver;
};

struct PcnValidationConfig {
  ForwardKind forward = ForwardKind::linear;
  double step_size = 1.0 / 80.0;
  int n_steps = 5000;
  double burn_in = 0.1;
  bool strict = false;
};

/// Position-dependent noise of the application-style run.
struct ApplicationConfig {
  int n_z = 40;
  double z_extent = 0.15;  // grid reaches this far beyond each magnet end (m)
  double margin = 0.1;     // homogeneous region is |z| ≤ half length − margin
  double sigma_homogeneous = 5e-5;
  double sigma_fringe = 5e-3;
  double mean_shift = 1.0;  // truth mean offset along the nominal direction, in prior standard deviations
  double floor = 1e-6;      // T, relative errors below this |B_meas| are masked
};

struct ValidationConfig {
  ArrayConfig array;
  SyntheticPriorConfig prior;
  FieldObservableConfig field;
  FourierObservableConfig fourier;
  PcnValidationConfig pcn;
  FemConfig fem;
  ApplicationConfig application;
  int report_ring = 5;
  /// Measured Helmholtz records; when non-empty they replace the synthetic prior data.
  std::vector<HelmholtzRecord> helmholtz;
  PriorOptions prior_options;
};

struct ValidationReport {
  std::uint64_t seed = 0;
  std::string observable;  // "field" or "fourier"
  std::string method;      // "conjugate" or "pcn"
  ParameterLayout layout{1, 2};
  Eigen::VectorXd truth;
  Eigen::VectorXd prior_mean;
  Eigen::VectorXd prior_var;
  Eigen::VectorXd posterior_mean;
  Eigen::VectorXd posterior_var;
  double prior_max_deviation = 0.0;
  double posterior_max_deviation = 0.0;
  double reduction = 0.0;       // percent
  int report_ring = 1;
  double ring_reduction = 0.0;  // percent, restricted to report_ring
  bool variance_contracted = false;
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
  double runtime_s = 0.0;       // not part of serialized output

  /// |posterior mean − truth| per coordinate.
  Eigen::VectorXd posterior_deviation() const { return (posterior_mean - truth).cwiseAbs(); }
  Eigen::VectorXd prior_deviation() const { return (prior_mean - truth).cwiseAbs(); }
};

struct SigmaProfile {
  Eigen::VectorXd z;
  Eigen::VectorXd sigma;
  std::vector<char> fringe;
  double sigma_homogeneous = 5e-5;
  double sigma_fringe = 5e-3;

  /// σ for each entry of a Fourier observable whose axial positions are in `z`.
  Eigen::VectorXd row_sigma(const ObservableSpec& spec) const;
};

/// |z| > half_length − margin is fringe.
SigmaProfile build_sigma_profile(const std::vector<double>& z_positions, double magnet_half_length, double margin,
                                 double sigma_homogeneous = 5e-5, double sigma_fringe = 5e-3);

struct Reduction {
  double overall = 0.0;          // percent
  std::vector<double> per_ring;  // percent, one per ring
};

/// 100·(1 − max|μ_post − p_true| / max|μ_prior − p_true|), overall and per ring.
Reduction reduction_metric(const Eigen::VectorXd& prior_mean, const Eigen::VectorXd& posterior_mean,
                           const Eigen::VectorXd& truth, const ParameterLayout& layout);

struct RelativeErrorProfile {
  Eigen::VectorXd e_rel;      // NaN where masked
  std::vector<char> masked;   // |B_meas| below the floor
};

/// |(B_meas − B_sim)/B_meas| pointwise.
RelativeErrorProfile relative_error_profile(const Eigen::VectorXd& b_meas, const Eigen::VectorXd& b_sim,
                                            double floor = 1e-6);

/// Synthetic Helmholtz data and the prior fitted to it.
GaussianDensity build_synthetic_prior(const HalbachArray& array, const ParameterLayout& layout,
                                      const SyntheticPriorConfig& config);

/// Prior of a validation run: fitted to `config.helmholtz` if given,
/// otherwise to synthetic data.
GaussianDensity validation_prior(const ValidationConfig& config, const HalbachArray& array,
                                 const ParameterLayout& layout);

/// Axial positions spread evenly over every ring, `per_ring` per ring.
std::vector<double> ring_z_grid(const HalbachArray& array, int per_ring);

ObservableSpec field_observable(const HalbachArray& array, const FieldObservableConfig& config, int n_components);
ObservableSpec fourier_observable(const HalbachArray& array, const FourierObservableConfig& config,
                                  std::vector<double> z_positions, int n_components);

Eigen::VectorXd draw_ground_truth(const GaussianDensity& prior, std::uint64_t seed);

/// H(p_true) plus independent N(0, σ_k²) noise per entry.
Observation make_observation(ForwardModel& forward, const ObservableSpec& spec, const Eigen::VectorXd& truth,
                             double sigma, std::uint64_t seed);
Observation make_observation(ForwardModel& forward, const ObservableSpec& spec, const Eigen::VectorXd& truth,
                             const Eigen::VectorXd& sigma, std::uint64_t seed);

ValidationReport make_report(std::uint64_t seed, std::string observable, std::string method,
                             const ParameterLayout& layout, const Eigen::VectorXd& truth, const GaussianDensity& prior,
                             const Eigen::VectorXd& posterior_mean, const Eigen::VectorXd& posterior_var,
                             int report_ring);

struct LinearValidation {
  ValidationReport field;
  ValidationReport fourier;
};

/// 3D analytic model: draw the truth, observe it through q_B and q_F and
/// update the prior by the conjugate formulas.
LinearValidation run_linear_validation(const ValidationConfig& config, std::uint64_t seed);

/// 2D single-ring model observed through q_B and sampled by pCN.
struct PcnValidation {
  ValidationReport report;
  Chain chain;
  PosteriorSummary summary;
};
PcnValidation run_pcn_validation(const ValidationConfig& config, std::uint64_t seed);

/// Forward model of the 2D validation for `config.pcn.forward`.
std::unique_ptr<ForwardModel> make_2d_forward(const ValidationConfig& config, const ObservableSpec& spec);

struct ApplicationReport {
  std::uint64_t seed = 0;
  SigmaProfile profile;
  Eigen::VectorXd b_meas;      // observed dipole coefficient per z
  Eigen::VectorXd b_prior;     // dipole coefficient of the prior-mean model
  Eigen::VectorXd b_posterior; // dipole coefficient of the posterior-mean model
  RelativeErrorProfile e_prior;
  RelativeErrorProfile e_posterior;
  double improved_fraction = 0.0;   // homogeneous positions with E_post < E_prior
  double median_factor = 0.0;       // median of E_prior / E_post over homogeneous positions
  double runtime_s = 0.0;
};

/// Truth from the prior with each block mean shifted by `mean_shift`
/// standard deviations along its nominal magnetization; q_F over a grid
/// covering magnet and fringe with a two-level noise profile; E_rel of the
/// dipole coefficient of prior and posterior means against the observation.
ApplicationReport run_application(const ValidationConfig& config, std::uint64_t seed);

nlohmann::json report_to_json(const ValidationReport& report);
nlohmann::json application_to_json(const ApplicationReport& report);

/// Rows `label,truth,prior_mean,prior_var,posterior_mean,posterior_var`.
void write_report_csv(const std::string& path, const ValidationReport& report);
/// Rows `z_m,fringe,sigma_T,b_meas_T,b_prior_T,b_posterior_T,e_rel_prior,e_rel_posterior`.
void write_application_csv(const std::string& path, const ApplicationReport& report);

/// Inverse of write_report_csv; the deviation metrics are recomputed.
ValidationReport read_report_csv(const std::string& path, const ParameterLayout& layout, int report_ring);
/// Inverse of write_application_csv without the summary statistics.
ApplicationReport read_application_csv(const std::string& path);

}  // namespace halbach
