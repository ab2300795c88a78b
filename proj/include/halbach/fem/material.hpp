#pragma once

#include "halbach/common.hpp"

#include <string>
#include <vector>

namespace halbach::fem {

/// Magnetization curve H = f(B) of a soft-magnetic material, expressed through
/// the reluctivity ν(B) = f(B)/B.
class HBCurve {
 public:
  enum class Kind { linear, brauer, sampled };

  /// Constant reluctivity 1/(μ0 μ_r).
  static HBCurve linear(double mu_r);
  /// ν(B) = k1·exp(k2·B²) + k3. Defaults are typical of low-carbon steel.
  static HBCurve brauer(double k1 = 0.3774, double k2 = 2.97, double k3 = 388.33);
  /// Monotone piecewise-cubic (Fritsch–Carlson) interpolation of samples.
  /// (0, 0) is prepended when absent; beyond the last sample the curve
  /// continues with slope 1/μ0.
  static HBCurve sampled(std::vector<double> b, std::vector<double> h);
  /// Reads a CSV with header `B_T,H_A_per_m`.
  static HBCurve from_csv(const std::string& path);

  Kind kind() const { return kind_; }
  bool is_linear() const { return kind_ == Kind::linear; }

  double H(double b) const;
  double nu(double b) const;
  /// dν/dB.
  double dnu(double b) const;

 private:
  HBCurve() = default;
  double dH(double b) const;

  Kind kind_ = Kind::linear;
  double nu0_ = 1.0 / kMu0;
  double k1_ = 0.0;
  double k2_ = 0.0;
  double k3_ = 0.0;
  std::vector<double> b_;
  std::vector<double> h_;
  std::vector<double> slope_;
};

/// Material data of the FE model. Without iron in the geometry the iron
/// curve is unused.
struct Materials {
  HBCurve iron = HBCurve::brauer();
  double magnet_mu_r = 1.05;

  bool is_linear() const { return iron.is_linear(); }
  double magnet_nu() const { return 1.0 / (kMu0 * magnet_mu_r); }
};

}  // namespace halbach::fem
