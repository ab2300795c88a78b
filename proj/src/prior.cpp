#include "halbach/prior.hpp"

#include "halbach/textio.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

namespace halbach {

namespace {

const std::vector<std::string> kHelmholtzHeader{"block_i", "ring_j", "mx_Am2", "my_Am2", "mz_Am2", "volume_m3"};

Eigen::MatrixXd jittered_cholesky(Eigen::MatrixXd& matrix, double& jitter, double fallback_scale) {
  jitter = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(matrix);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) return llt.matrixL();
  const auto n = static_cast<double>(matrix.rows());
  double base = matrix.trace() / n;
  if (base < 0.0) throw DomainError("covariance has a negative trace");
  if (base == 0.0) base = fallback_scale > 0.0 ? fallback_scale : 1.0;
  for (double eps = 1e-10 * base; eps <= 1.0001e-5 * base; eps *= 10.0) {
    Eigen::MatrixXd trial = matrix;
    trial.diagonal().array() += eps;
    llt.compute(trial);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      matrix = std::move(trial);
      jitter = eps;
      return llt.matrixL();
    }
  }
  throw DomainError("covariance is not positive semi-definite; jitter did not restore a Cholesky factor");
}

}  // namespace

std::vector<HelmholtzRecord> load_helmholtz_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open Helmholtz file '{}'", path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != kHelmholtzHeader) {
    throw DomainError(fmt::format("{}:1: header must be 'block_i,ring_j,mx_Am2,my_Am2,mz_Am2,volume_m3'", path));
  }
  std::vector<HelmholtzRecord> out;
  std::set<std::pair<int, int>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    const std::string where = fmt::format("{}:{}", path, line_no);
    if (f.size() != kHelmholtzHeader.size()) {
      throw DomainError(fmt::format("{}: expected {} fields, found {}", where, kHelmholtzHeader.size(), f.size()));
    }
    HelmholtzRecord r;
    r.block = static_cast<int>(parse_int(f[0], where + " block_i"));
    r.ring = static_cast<int>(parse_int(f[1], where + " ring_j"));
    r.moment = Vec3(parse_double(f[2], where + " mx_Am2"), parse_double(f[3], where + " my_Am2"),
                    parse_double(f[4], where + " mz_Am2"));
    r.volume = parse_double(f[5], where + " volume_m3");
    if (r.block < 1 || r.block > kBlocksPerRing) {
      throw DomainError(fmt::format("{}: block_i must be in 1..{}", where, kBlocksPerRing));
    }
    if (r.ring < 1) throw DomainError(fmt::format("{}: ring_j must be positive", where));
    if (!r.moment.allFinite()) throw DomainError(fmt::format("{}: moment must be finite", where));
    if (!(r.volume > 0.0) || !std::isfinite(r.volume)) throw DomainError(fmt::format("{}: volume must be positive", where));
    if (!seen.insert({r.block, r.ring}).second) {
      throw DomainError(fmt::format("{}: duplicate record for block {} ring {}", where, r.block, r.ring));
    }
    out.push_back(r);
  }
  if (out.empty()) spdlog::warn("{} has no data rows", path);
  return out;
}

void write_helmholtz_csv(const std::string& path, std::span<const HelmholtzRecord> records) {
  std::ofstream out(path);
  if (!out) throw DomainError(fmt::format("cannot write '{}'", path));
  out << "block_i,ring_j,mx_Am2,my_Am2,mz_Am2,volume_m3\n";
  for (const auto& r : records) {
    out << r.block << ',' << r.ring << ',' << format_double(r.moment.x()) << ',' << format_double(r.moment.y()) << ','
        << format_double(r.moment.z()) << ',' << format_double(r.volume) << '\n';
  }
  if (!out) throw DomainError(fmt::format("failed writing '{}'", path));
}

Eigen::MatrixXd jittered_cholesky(Eigen::MatrixXd& matrix, double& jitter) {
  return jittered_cholesky(matrix, jitter, 1.0);
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (covariance_.rows() != covariance_.cols() || covariance_.rows() != mean_.size()) {
    throw DomainError(fmt::format("covariance of order {}x{} does not match a mean of length {}", covariance_.rows(),
                                  covariance_.cols(), mean_.size()));
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) throw DomainError("Gaussian parameters must be finite");
  const double asym = (covariance_ - covariance_.transpose()).norm();
  if (asym > 1e-12 * covariance_.norm()) throw DomainError("covariance is not symmetric");
  covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();
  degenerate_ = mean_.size() > 0 && covariance_.isZero(0.0);
  const double fallback = mean_.size() > 0 ? mean_.squaredNorm() / static_cast<double>(mean_.size()) : 1.0;
  factor_ = jittered_cholesky(covariance_, jitter_, fallback);
  if (jitter_ > 0.0) spdlog::warn("covariance jittered by {:.3e} to obtain a Cholesky factor", jitter_);
}

Eigen::VectorXd GaussianDensity::sample(Rng& rng) const {
  if (degenerate_) return mean_;
  return mean_ + factor_.triangularView<Eigen::Lower>() * standard_normal(rng, dimension());
}

Eigen::VectorXd GaussianDensity::whiten(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw DomainError("dimension mismatch in whiten");
  return factor_.triangularView<Eigen::Lower>().solve(x - mean_);
}

double GaussianDensity::log_density(const Eigen::VectorXd& x) const { return -0.5 * whiten(x).squaredNorm(); }

GaussianDensity fit_prior(std::span<const HelmholtzRecord> records, const ParameterLayout& layout,
                          const PriorOptions& options) {
  if (layout.n_blocks() != kBlocksPerRing) throw DomainError("prior layout must cover 16 block types");
  const int nc = layout.n_components();
  std::vector<HelmholtzRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return std::pair(a.block, a.ring) < std::pair(b.block, b.ring); });
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].block == sorted[k - 1].block && sorted[k].ring == sorted[k - 1].ring) {
      throw DomainError(fmt::format("duplicate record for block {} ring {}", sorted[k].block, sorted[k].ring));
    }
  }
  std::map<int, std::vector<const HelmholtzRecord*>> by_type;
  for (const auto& r : sorted) {
    if (!(r.volume > 0.0)) throw DomainError(fmt::format("block {} ring {} has non-positive volume", r.block, r.ring));
    by_type[r.block].push_back(&r);
  }
  // Ordering samples by value makes the sums independent of ring labels and input order.
  for (auto& [type, recs] : by_type) {
    std::sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) {
      const Vec3 ma = a->magnetization();
      const Vec3 mb = b->magnetization();
      return std::tuple(ma.x(), ma.y(), ma.z(), a->ring) < std::tuple(mb.x(), mb.y(), mb.z(), b->ring);
    });
  }

  const Eigen::Index nb = kBlocksPerRing * nc;
  Eigen::VectorXd type_mean(nb);
  std::vector<Eigen::MatrixXd> type_cov(kBlocksPerRing);
  for (int i = 1; i <= kBlocksPerRing; ++i) {
    const auto it = by_type.find(i);
    if (it == by_type.end()) throw DomainError(fmt::format("no Helmholtz records for block type {}", i));
    const auto& recs = it->second;
    if (recs.size() < 3) {
      throw DomainError(fmt::format("block type {} has {} records; at least 3 are needed", i, recs.size()));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(recs.size()), nc);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      x.row(static_cast<Eigen::Index>(k)) = recs[k]->magnetization().head(nc).transpose();
    }
    const Eigen::VectorXd mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    double jitter = 0.0;
    jittered_cholesky(cov, jitter, mu.squaredNorm() / nc);
    if (jitter > 0.0) spdlog::warn("block type {} covariance jittered by {:.3e}", i, jitter);
    type_mean.segment((i - 1) * nc, nc) = mu;
    type_cov[static_cast<std::size_t>(i - 1)] = cov;
  }

  Eigen::MatrixXd ring_cov = Eigen::MatrixXd::Zero(nb, nb);
  if (options.pooled_types) {
    std::map<int, Eigen::VectorXd> by_ring;
    std::map<int, int> count;
    for (const auto& r : sorted) {
      auto& v = by_ring.try_emplace(r.ring, Eigen::VectorXd::Zero(nb)).first->second;
      v.segment((r.block - 1) * nc, nc) = r.magnetization().head(nc);
      ++count[r.ring];
    }
    std::vector<Eigen::VectorXd> samples;
    for (const auto& [ring, v] : by_ring) {
      if (count[ring] == kBlocksPerRing) samples.push_back(v);
    }
    if (samples.size() < 3) throw DomainError("pooled prior needs at least 3 complete rings");
    for (const auto& v : samples) ring_cov += (v - type_mean) * (v - type_mean).transpose();
    ring_cov /= static_cast<double>(samples.size() - 1);
    double jitter = 0.0;
    jittered_cholesky(ring_cov, jitter, type_mean.squaredNorm() / static_cast<double>(nb));
    if (jitter > 0.0) spdlog::warn("pooled ring covariance jittered by {:.3e}", jitter);
  } else {
    for (int i = 0; i < kBlocksPerRing; ++i) ring_cov.block(i * nc, i * nc, nc, nc) = type_cov[static_cast<std::size_t>(i)];
  }

  const Eigen::Index dim = layout.dimension();
  Eigen::VectorXd mean(dim);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (int j = 1; j <= layout.n_rings(); ++j) {
    for (int i = 1; i <= kBlocksPerRing; ++i) {
      const Eigen::Index row = layout.index(i, j, 0);
      mean.segment(row, nc) = type_mean.segment((i - 1) * nc, nc);
      for (int k = 1; k <= kBlocksPerRing; ++k) {
        cov.block(row, layout.index(k, j, 0), nc, nc) = ring_cov.block((i - 1) * nc, (k - 1) * nc, nc, nc);
      }
    }
  }
  return {mean, cov};
}

AndersonDarlingResult anderson_darling(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 8) throw DomainError("Anderson-Darling test needs at least 8 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw DomainError("Anderson-Darling test needs samples with positive variance");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = (x[i] - mean) / sd;
    const double hi = (x[n - 1 - i] - mean) / sd;
    const double log_cdf = std::log(0.5 * std::erfc(-lo / std::numbers::sqrt2));
    const double log_sf = std::log(0.5 * std::erfc(hi / std::numbers::sqrt2));
    s += static_cast<double>(2 * i + 1) * (log_cdf + log_sf);
  }
  const auto nd = static_cast<double>(n);
  AndersonDarlingResult r;
  r.a2 = -nd - s / nd;
  r.a2_adjusted = r.a2 * (1.0 + 0.75 / nd + 2.25 / (nd * nd));
  r.reject_5pct = r.a2_adjusted > 0.752;
  return r;
}

std::vector<BlockTypeModel> default_block_types(const HalbachArray& array, double sigma, double sigma_z,
                                                double offset_sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !(sigma_z >= 0.0) || !(offset_sigma >= 0.0)) {
    throw DomainError("block type standard deviations must be non-negative");
  }
  Rng rng = make_rng(seed, 0x7970u);
  std::vector<BlockTypeModel> types(kBlocksPerRing);
  for (int i = 1; i <= kBlocksPerRing; ++i) {
    const Eigen::VectorXd shift = offset_sigma * standard_normal(rng, 2);
    auto& t = types[static_cast<std::size_t>(i - 1)];
    t.mean = nominal_magnetization(array, i) + Vec3(shift(0), shift(1), 0.0);
    t.covariance.diagonal() << sigma * sigma, sigma * sigma, sigma_z * sigma_z;
  }
  return types;
}

std::vector<HelmholtzRecord> synth_helmholtz(const HalbachArray& array, std::span<const BlockTypeModel> types,
                                             std::uint64_t seed, int n_rings) {
  if (types.size() != static_cast<std::size_t>(kBlocksPerRing)) throw DomainError("need one model per block type");
  if (n_rings <= 0) n_rings = array.n_rings();
  std::vector<Eigen::Matrix3d> roots;
  for (const auto& t : types) {
    const Eigen::Matrix3d& c = t.covariance;
    if (!c.allFinite() || !t.mean.allFinite()) throw DomainError("block type model must be finite");
    if ((c - c.transpose()).norm() > 1e-12 * c.norm()) throw DomainError("block type covariance is not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(c);
    const double scale = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) throw DomainError("block type covariance is not positive semi-definite");
    const Eigen::Vector3d root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    roots.push_back(eig.eigenvectors() * root.asDiagonal());
  }
  Rng rng = make_rng(seed, 0x4865u);
  std::vector<HelmholtzRecord> out;
  out.reserve(static_cast<std::size_t>(n_rings) * kBlocksPerRing);
  for (int j = 1; j <= n_rings; ++j) {
    for (int i = 1; i <= kBlocksPerRing; ++i) {
      const auto& t = types[static_cast<std::size_t>(i - 1)];
      const Eigen::VectorXd xi = standard_normal(rng, 3);
      const Vec3 m = t.mean + roots[static_cast<std::size_t>(i - 1)] * xi;
      const double vol = array.block_volume(i);
      out.push_back({i, j, m * vol, vol});
    }
  }
  return out;
}

}  // namespace halbach
