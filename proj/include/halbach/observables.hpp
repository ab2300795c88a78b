#pragma once

#include "halbach/common.hpp"
#include "halbach/geometry.hpp"

#include <json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace halbach {

enum class Region { air, magnet, iron };

/// A place where the field is evaluated. In 2D models only x and y are used.
struct FieldPoint {
  Vec3 position = Vec3::Zero();
  Region region = Region::air;
};

/// Field at a point. 2D evaluators return a zero z-component.
using FieldEvaluator = std::function<Vec3(const FieldPoint&)>;

enum class ObservableKind { point_field, fourier_circle };

/// Which Fourier coefficient family multiplies cos(kθ). The default puts the
/// cosine terms in B_k, so the dipole of the default array shows up in B_1.
enum class FourierConvention { cos_in_B, cos_in_A };

/// Describes what was measured and where.
///
/// Point fields are laid out component-major: all B_x values in point order,
/// then all B_y, then (3D only) all B_z. Fourier observables are laid out per
/// axial position as (A_1..A_K, B_1..B_K), concatenated in z order.
class ObservableSpec {
 public:
  static ObservableSpec point_field(std::vector<FieldPoint> points, int n_components);
  static ObservableSpec fourier_circle(double r0, int harmonics, int n_theta,
                                       std::vector<double> z_positions, int n_components,
                                       FourierConvention convention = FourierConvention::cos_in_B);

  ObservableKind kind() const { return kind_; }
  int n_components() const { return n_components_; }
  Eigen::Index dimension() const;

  const std::vector<FieldPoint>& points() const { return points_; }
  double r0() const { return r0_; }
  int harmonics() const { return harmonics_; }
  int n_theta() const { return n_theta_; }
  const std::vector<double>& z_positions() const { return z_positions_; }
  FourierConvention convention() const { return convention_; }

  /// Every point at which the field must be known to form the observable.
  std::vector<FieldPoint> sample_points() const;

  /// Linear map from the field at `sample_points()` to the observable vector.
  Eigen::VectorXd reduce(std::span<const Vec3> field) const;

  /// Axial position associated with each observable entry.
  Eigen::VectorXd row_z() const;
  std::vector<std::string> row_labels() const;

  /// Checks the observable against a magnet: circle inside the bore, points in air.
  void validate(const HalbachArray& array) const;

  nlohmann::json to_json() const;
  static ObservableSpec from_json(const nlohmann::json& j);

 private:
  ObservableSpec() = default;

  ObservableKind kind_ = ObservableKind::point_field;
  int n_components_ = 2;
  std::vector<FieldPoint> points_;
  double r0_ = 0.0;
  int harmonics_ = 0;
  int n_theta_ = 0;
  std::vector<double> z_positions_;
  FourierConvention convention_ = FourierConvention::cos_in_B;
};

/// Measured observable values with a diagonal noise covariance.
struct Observation {
  Eigen::VectorXd values;
  ObservableSpec spec;
  Eigen::VectorXd noise_var;  // diagonal of Σ, T²; zero marks exact data

  Observation(Eigen::VectorXd v, ObservableSpec s, Eigen::VectorXd var);
};

Eigen::VectorXd sample_point_field(const FieldEvaluator& evaluator, const ObservableSpec& spec);

/// Radial flux density at θ_m = 2πm/n_theta on a circle of radius r0 at height z.
Eigen::VectorXd sample_Br_on_circle(const FieldEvaluator& evaluator, double r0, int n_theta,
                                    double z = 0.0);

/// Discrete Fourier coefficients (A_1..A_K, B_1..B_K) of equispaced samples,
/// normalised by 2/n so they equal the trigonometric-polynomial coefficients.
Eigen::VectorXd fourier_coefficients(std::span<const double> samples, int harmonics,
                                     FourierConvention convention = FourierConvention::cos_in_B);

Eigen::VectorXd observe_fourier(const FieldEvaluator& evaluator, const ObservableSpec& spec);

/// Dispatches on the observable kind.
Eigen::VectorXd observe(const FieldEvaluator& evaluator, const ObservableSpec& spec);

/// Observation CSV with header `kind,z_m,index,value_T,sigma_T`.
void write_observation_csv(const std::string& path, const Observation& obs);
Observation read_observation_csv(const std::string& path, const ObservableSpec& spec);

}  // namespace halbach
