#pragma once

#include "halbach/common.hpp"
#include "halbach/geometry.hpp"
#include "halbach/random.hpp"

#include <Eigen/Cholesky>

#include <span>
#include <string>
#include <vector>

namespace halbach {

/// One Helmholtz-coil measurement of a block's total moment.
struct HelmholtzRecord {
  int block = 1;
  int ring = 1;
  Vec3 moment = Vec3::Zero();  // A·m²
  double volume = 0.0;         // m³

  Vec3 magnetization() const { return moment / volume; }
};

/// Reads a CSV with header `block_i,ring_j,mx_Am2,my_Am2,mz_Am2,volume_m3`.
/// Errors name the offending line.
std::vector<HelmholtzRecord> load_helmholtz_csv(const std::string& path);
void write_helmholtz_csv(const std::string& path, std::span<const HelmholtzRecord> records);

/// Cholesky factor of a symmetric matrix. If the plain factorization fails,
/// a diagonal jitter of 1e-10·trace/n is added and grown tenfold until it
/// succeeds; `jitter` receives the amount added.
Eigen::MatrixXd jittered_cholesky(Eigen::MatrixXd& matrix, double& jitter);

/// Multivariate normal N(mean, covariance) with a cached lower Cholesky
/// factor. Covariances that are only semi-definite are jittered on
/// construction; the stored covariance includes the jitter. A covariance
/// that is exactly zero is degenerate: samples equal the mean.
class GaussianDensity {
 public:
  GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  Eigen::Index dimension() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Lower-triangular L with L·Lᵀ = covariance.
  const Eigen::MatrixXd& cholesky() const { return factor_; }
  double jitter() const { return jitter_; }
  bool degenerate() const { return degenerate_; }

  /// mean + L·ξ for a standard normal ξ drawn from `rng`.
  Eigen::VectorXd sample(Rng& rng) const;
  /// L⁻¹(x − mean).
  Eigen::VectorXd whiten(const Eigen::VectorXd& x) const;
  /// log density up to the normalizing constant: −½‖L⁻¹(x − mean)‖².
  double log_density(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
  bool degenerate_ = false;
};

struct PriorOptions {
  /// Estimate one covariance over all block types jointly (per ring) instead
  /// of independent per-type 3×3 blocks.
  bool pooled_types = false;
};

/// Per-type sample mean and unbiased covariance over rings, replicated into a
/// block-diagonal prior over the layout.
GaussianDensity fit_prior(std::span<const HelmholtzRecord> records, const ParameterLayout& layout,
                          const PriorOptions& options = {});

struct AndersonDarlingResult {
  double a2 = 0.0;
  double a2_adjusted = 0.0;
  bool reject_5pct = false;
};

/// Normality test with mean and variance estimated from the samples.
AndersonDarlingResult anderson_darling(std::span<const double> samples);

/// Distribution of the magnetization (A/m) of one block type.
struct BlockTypeModel {
  Vec3 mean = Vec3::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
};

/// Per-type models around the nominal magnetization: each type mean is
/// shifted by N(0, offset_sigma²) per in-plane component and scattered with
/// in-plane standard deviation `sigma` and axial `sigma_z`.
std::vector<BlockTypeModel> default_block_types(const HalbachArray& array, double sigma, double sigma_z,
                                                double offset_sigma, std::uint64_t seed);

/// Gaussian draws of every (block, ring) moment. `n_rings` defaults to the
/// array's ring count.
std::vector<HelmholtzRecord> synth_helmholtz(const HalbachArray& array, std::span<const BlockTypeModel> types,
                                             std::uint64_t seed, int n_rings = 0);

}  // namespace halbach
