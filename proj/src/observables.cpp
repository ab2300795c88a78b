#include "halbach/observables.hpp"

#include "halbach/textio.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <map>

namespace halbach {

ObservableSpec ObservableSpec::point_field(std::vector<FieldPoint> points, int n_components) {
  if (n_components != 2 && n_components != 3) {
    throw DomainError("point-field observable needs 2 or 3 components");
  }
  if (points.empty()) throw DomainError("point-field observable needs at least one point");
  for (const auto& p : points) {
    if (!p.position.allFinite()) throw DomainError("point-field observable has a non-finite point");
    if (p.region != Region::air) throw RegionError("observation points must lie in air");
  }
  ObservableSpec s;
  s.kind_ = ObservableKind::point_field;
  s.n_components_ = n_components;
  s.points_ = std::move(points);
  return s;
}

ObservableSpec ObservableSpec::fourier_circle(double r0, int harmonics, int n_theta,
                                              std::vector<double> z_positions, int n_components,
                                              FourierConvention convention) {
  if (!(r0 > 0.0)) throw DomainError("Fourier circle radius must be positive");
  if (harmonics < 1) throw DomainError("Fourier observable needs at least one harmonic");
  if (n_theta <= 2 * harmonics) {
    throw DomainError(fmt::format("n_theta = {} must exceed 2K = {}", n_theta, 2 * harmonics));
  }
  if (z_positions.empty()) throw DomainError("Fourier observable needs at least one z position");
  if (n_components == 2 && z_positions.size() != 1) {
    throw DomainError("2D Fourier observable takes a single z position");
  }
  if (n_components != 2 && n_components != 3) {
    throw DomainError("Fourier observable needs 2 or 3 field components");
  }
  ObservableSpec s;
  s.kind_ = ObservableKind::fourier_circle;
  s.n_components_ = n_components;
  s.r0_ = r0;
  s.harmonics_ = harmonics;
  s.n_theta_ = n_theta;
  s.z_positions_ = std::move(z_positions);
  s.convention_ = convention;
  return s;
}

Eigen::Index ObservableSpec::dimension() const {
  if (kind_ == ObservableKind::point_field) {
    return static_cast<Eigen::Index>(points_.size()) * n_components_;
  }
  return static_cast<Eigen::Index>(z_positions_.size()) * 2 * harmonics_;
}

std::vector<FieldPoint> ObservableSpec::sample_points() const {
  if (kind_ == ObservableKind::point_field) return points_;
  std::vector<FieldPoint> out;
  out.reserve(z_positions_.size() * static_cast<std::size_t>(n_theta_));
  for (double z : z_positions_) {
    for (int m = 0; m < n_theta_; ++m) {
      const double th = 2.0 * std::numbers::pi * m / n_theta_;
      out.push_back({Vec3(r0_ * std::cos(th), r0_ * std::sin(th), z), Region::air});
    }
  }
  return out;
}

Eigen::VectorXd ObservableSpec::reduce(std::span<const Vec3> field) const {
  Eigen::VectorXd q(dimension());
  if (kind_ == ObservableKind::point_field) {
    const auto n = static_cast<Eigen::Index>(points_.size());
    if (static_cast<Eigen::Index>(field.size()) != n) {
      throw DomainError("field sample count does not match the point-field spec");
    }
    for (int c = 0; c < n_components_; ++c) {
      for (Eigen::Index k = 0; k < n; ++k) q(c * n + k) = field[static_cast<std::size_t>(k)](c);
    }
    return q;
  }
  const auto nt = static_cast<std::size_t>(n_theta_);
  if (field.size() != nt * z_positions_.size()) {
    throw DomainError("field sample count does not match the Fourier spec");
  }
  std::vector<double> br(nt);
  for (std::size_t iz = 0; iz < z_positions_.size(); ++iz) {
    for (std::size_t m = 0; m < nt; ++m) {
      const double th = 2.0 * std::numbers::pi * static_cast<double>(m) / n_theta_;
      const Vec3& b = field[iz * nt + m];
      br[m] = b.x() * std::cos(th) + b.y() * std::sin(th);
    }
    q.segment(static_cast<Eigen::Index>(iz) * 2 * harmonics_, 2 * harmonics_) =
        fourier_coefficients(br, harmonics_, convention_);
  }
  return q;
}

Eigen::VectorXd ObservableSpec::row_z() const {
  Eigen::VectorXd z(dimension());
  if (kind_ == ObservableKind::point_field) {
    const auto n = static_cast<Eigen::Index>(points_.size());
    for (int c = 0; c < n_components_; ++c) {
      for (Eigen::Index k = 0; k < n; ++k) z(c * n + k) = points_[static_cast<std::size_t>(k)].position.z();
    }
    return z;
  }
  for (std::size_t iz = 0; iz < z_positions_.size(); ++iz) {
    z.segment(static_cast<Eigen::Index>(iz) * 2 * harmonics_, 2 * harmonics_).setConstant(z_positions_[iz]);
  }
  return z;
}

std::vector<std::string> ObservableSpec::row_labels() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(dimension()));
  if (kind_ == ObservableKind::point_field) {
    static constexpr const char* kComp[] = {"Bx", "By", "Bz"};
    for (int c = 0; c < n_components_; ++c) {
      for (std::size_t k = 0; k < points_.size(); ++k) out.push_back(fmt::format("{}_{}", kComp[c], k));
    }
    return out;
  }
  for (std::size_t iz = 0; iz < z_positions_.size(); ++iz) {
    for (const char* fam : {"A", "B"}) {
      for (int k = 1; k <= harmonics_; ++k) out.push_back(fmt::format("{}{}_z{}", fam, k, iz));
    }
  }
  return out;
}

void ObservableSpec::validate(const HalbachArray& array) const {
  if (kind_ == ObservableKind::fourier_circle) {
    if (!(r0_ < array.inner_radius())) {
      throw RegionError(fmt::format("Fourier circle radius {} m is not inside the bore (r_i = {} m)",
                                    r0_, array.inner_radius()));
    }
    return;
  }
  for (std::size_t k = 0; k < points_.size(); ++k) {
    const Vec3& p = points_[k].position;
    const bool inside = n_components_ == 3 ? array.inside_magnet(p, 1e-9)
                                           : array.inside_magnet_2d(p.head<2>(), 1e-9);
    if (inside) {
      throw RegionError(fmt::format("observation point {} ({}, {}, {}) lies in magnet material", k,
                                    p.x(), p.y(), p.z()));
    }
  }
}

nlohmann::json ObservableSpec::to_json() const {
  nlohmann::json j;
  j["n_components"] = n_components_;
  if (kind_ == ObservableKind::point_field) {
    j["kind"] = "point_field";
    auto& pts = j["points_m"] = nlohmann::json::array();
    for (const auto& p : points_) pts.push_back({p.position.x(), p.position.y(), p.position.z()});
  } else {
    j["kind"] = "fourier_circle";
    j["r0_m"] = r0_;
    j["harmonics"] = harmonics_;
    j["n_theta"] = n_theta_;
    j["z_positions_m"] = z_positions_;
    j["convention"] = convention_ == FourierConvention::cos_in_B ? "cos_in_B" : "cos_in_A";
  }
  return j;
}

ObservableSpec ObservableSpec::from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const int nc = j.at("n_components").get<int>();
    if (kind == "point_field") {
      std::vector<FieldPoint> pts;
      for (const auto& p : j.at("points_m")) {
        pts.push_back({Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()),
                       Region::air});
      }
      return point_field(std::move(pts), nc);
    }
    if (kind == "fourier_circle") {
      const std::string conv = j.value("convention", "cos_in_B");
      if (conv != "cos_in_B" && conv != "cos_in_A") throw DomainError("unknown Fourier convention " + conv);
      return fourier_circle(j.at("r0_m").get<double>(), j.at("harmonics").get<int>(),
                            j.at("n_theta").get<int>(), j.at("z_positions_m").get<std::vector<double>>(),
                            nc, conv == "cos_in_B" ? FourierConvention::cos_in_B : FourierConvention::cos_in_A);
    }
    throw DomainError("unknown observable kind " + kind);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed observable spec: ") + e.what());
  }
}

Observation::Observation(Eigen::VectorXd v, ObservableSpec s, Eigen::VectorXd var)
    : values(std::move(v)), spec(std::move(s)), noise_var(std::move(var)) {
  if (values.size() != spec.dimension() || noise_var.size() != spec.dimension()) {
    throw DomainError(fmt::format("observation length {} / noise length {} do not match spec dimension {}",
                                  values.size(), noise_var.size(), spec.dimension()));
  }
  if ((noise_var.array() < 0.0).any() || !noise_var.allFinite()) {
    throw DomainError("noise variances must be non-negative and finite");
  }
}

Eigen::VectorXd sample_point_field(const FieldEvaluator& evaluator, const ObservableSpec& spec) {
  if (spec.kind() != ObservableKind::point_field) throw DomainError("spec is not a point-field observable");
  std::vector<Vec3> field;
  field.reserve(spec.points().size());
  for (const auto& p : spec.points()) field.push_back(evaluator(p));
  return spec.reduce(field);
}

Eigen::VectorXd sample_Br_on_circle(const FieldEvaluator& evaluator, double r0, int n_theta, double z) {
  if (n_theta < 1) throw DomainError("n_theta must be positive");
  Eigen::VectorXd s(n_theta);
  for (int m = 0; m < n_theta; ++m) {
    const double th = 2.0 * std::numbers::pi * m / n_theta;
    const Vec3 b = evaluator({Vec3(r0 * std::cos(th), r0 * std::sin(th), z), Region::air});
    s(m) = b.x() * std::cos(th) + b.y() * std::sin(th);
  }
  return s;
}

Eigen::VectorXd fourier_coefficients(std::span<const double> samples, int harmonics,
                                     FourierConvention convention) {
  const auto n = static_cast<int>(samples.size());
  if (harmonics < 1 || n <= 2 * harmonics) {
    throw DomainError(fmt::format("K = {} too large for {} samples", harmonics, n));
  }
  Eigen::VectorXd sin_part = Eigen::VectorXd::Zero(harmonics);
  Eigen::VectorXd cos_part = Eigen::VectorXd::Zero(harmonics);
  for (int k = 1; k <= harmonics; ++k) {
    double s = 0.0;
    double c = 0.0;
    for (int m = 0; m < n; ++m) {
      // Reduce k·m modulo n so the angle stays exact for large k·m.
      const double th = 2.0 * std::numbers::pi * ((k * m) % n) / n;
      s += samples[static_cast<std::size_t>(m)] * std::sin(th);
      c += samples[static_cast<std::size_t>(m)] * std::cos(th);
    }
    sin_part(k - 1) = 2.0 * s / n;
    cos_part(k - 1) = 2.0 * c / n;
  }
  Eigen::VectorXd out(2 * harmonics);
  if (convention == FourierConvention::cos_in_B) {
    out << sin_part, cos_part;
  } else {
    out << cos_part, sin_part;
  }
  return out;
}

Eigen::VectorXd observe_fourier(const FieldEvaluator& evaluator, const ObservableSpec& spec) {
  if (spec.kind() != ObservableKind::fourier_circle) throw DomainError("spec is not a Fourier observable");
  const int k2 = 2 * spec.harmonics();
  Eigen::VectorXd q(spec.dimension());
  for (std::size_t iz = 0; iz < spec.z_positions().size(); ++iz) {
    const Eigen::VectorXd s = sample_Br_on_circle(evaluator, spec.r0(), spec.n_theta(), spec.z_positions()[iz]);
    q.segment(static_cast<Eigen::Index>(iz) * k2, k2) =
        fourier_coefficients({s.data(), static_cast<std::size_t>(s.size())}, spec.harmonics(), spec.convention());
  }
  return q;
}

Eigen::VectorXd observe(const FieldEvaluator& evaluator, const ObservableSpec& spec) {
  return spec.kind() == ObservableKind::point_field ? sample_point_field(evaluator, spec)
                                                    : observe_fourier(evaluator, spec);
}

void write_observation_csv(const std::string& path, const Observation& obs) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path);
  out << "kind,z_m,index,value_T,sigma_T\n";
  const auto& spec = obs.spec;
  const Eigen::VectorXd z = spec.row_z();
  for (Eigen::Index r = 0; r < spec.dimension(); ++r) {
    std::string kind;
    long index = 0;
    if (spec.kind() == ObservableKind::point_field) {
      static constexpr const char* kComp[] = {"Bx", "By", "Bz"};
      const auto n = static_cast<Eigen::Index>(spec.points().size());
      kind = kComp[r / n];
      index = static_cast<long>(r % n);
    } else {
      const Eigen::Index local = r % (2 * spec.harmonics());
      kind = local < spec.harmonics() ? "A" : "B";
      index = static_cast<long>(local % spec.harmonics()) + 1;
    }
    out << kind << ',' << format_double(z(r)) << ',' << index << ',' << format_double(obs.values(r)) << ','
        << format_double(std::sqrt(obs.noise_var(r))) << '\n';
  }
  if (!out) throw DomainError("write failed for " + path);
}

Observation read_observation_csv(const std::string& path, const ObservableSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DomainError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"kind", "z_m", "index", "value_T", "sigma_T"}) {
    throw DomainError(path + ": header must be kind,z_m,index,value_T,sigma_T");
  }
  std::vector<double> values;
  std::vector<double> var;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw DomainError(fmt::format("{}:{}: expected 5 fields", path, lineno));
    values.push_back(parse_double(f[3], fmt::format("{}:{} value_T", path, lineno)));
    const double sigma = parse_double(f[4], fmt::format("{}:{} sigma_T", path, lineno));
    var.push_back(sigma * sigma);
  }
  return {Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())), spec,
          Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()))};
}

}  // namespace halbach
