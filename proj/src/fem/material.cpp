#include "halbach/fem/material.hpp"

#include "halbach/textio.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace halbach::fem {

HBCurve HBCurve::linear(double mu_r) {
  if (!(mu_r > 0.0) || !std::isfinite(mu_r)) throw DomainError("relative permeability must be positive");
  HBCurve c;
  c.kind_ = Kind::linear;
  c.nu0_ = 1.0 / (kMu0 * mu_r);
  return c;
}

HBCurve HBCurve::brauer(double k1, double k2, double k3) {
  if (!(k1 >= 0.0 && k2 >= 0.0 && k3 > 0.0)) throw DomainError("Brauer coefficients must be non-negative with k3 > 0");
  HBCurve c;
  c.kind_ = Kind::brauer;
  c.k1_ = k1;
  c.k2_ = k2;
  c.k3_ = k3;
  return c;
}

HBCurve HBCurve::sampled(std::vector<double> b, std::vector<double> h) {
  if (b.size() != h.size()) throw DomainError("H(B) samples need equal B and H counts");
  if (b.empty()) throw DomainError("H(B) curve has no samples");
  if (b.front() != 0.0) {
    b.insert(b.begin(), 0.0);
    h.insert(h.begin(), 0.0);
  }
  if (h.front() != 0.0) throw DomainError("H(B) curve must pass through the origin");
  if (b.size() < 2) throw DomainError("H(B) curve needs at least one nonzero sample");
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!std::isfinite(b[k]) || !std::isfinite(h[k])) throw DomainError("H(B) samples must be finite");
    if (k > 0 && !(b[k] > b[k - 1] && h[k] > h[k - 1])) {
      throw DomainError(fmt::format("H(B) samples must be strictly increasing (row {})", k));
    }
  }
  HBCurve c;
  c.kind_ = Kind::sampled;
  const std::size_t n = b.size();
  std::vector<double> delta(n - 1);
  std::vector<double> step(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    step[k] = b[k + 1] - b[k];
    delta[k] = (h[k + 1] - h[k]) / step[k];
  }
  c.slope_.assign(n, 0.0);
  c.slope_.front() = delta.front();
  c.slope_.back() = delta.back();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double w1 = 2 * step[k] + step[k - 1];
    const double w2 = step[k] + 2 * step[k - 1];
    c.slope_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  c.b_ = std::move(b);
  c.h_ = std::move(h);
  return c;
}

HBCurve HBCurve::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open H(B) curve file '{}'", path));
  std::string line;
  if (!std::getline(in, line)) throw DomainError(fmt::format("{}: empty file", path));
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"B_T", "H_A_per_m"}) {
    throw DomainError(fmt::format("{}: header must be 'B_T,H_A_per_m'", path));
  }
  std::vector<double> b;
  std::vector<double> h;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw DomainError(fmt::format("{}:{}: expected 2 fields", path, line_no));
    b.push_back(parse_double(f[0], fmt::format("{}:{} B_T", path, line_no)));
    h.push_back(parse_double(f[1], fmt::format("{}:{} H_A_per_m", path, line_no)));
  }
  return sampled(std::move(b), std::move(h));
}

double HBCurve::H(double b) const {
  b = std::abs(b);
  switch (kind_) {
    case Kind::linear:
      return nu0_ * b;
    case Kind::brauer:
      return (k1_ * std::exp(k2_ * b * b) + k3_) * b;
    case Kind::sampled:
      break;
  }
  if (b >= b_.back()) return h_.back() + (b - b_.back()) / kMu0;
  const auto it = std::upper_bound(b_.begin(), b_.end(), b);
  const std::size_t k = static_cast<std::size_t>(it - b_.begin()) - 1;
  const double dx = b_[k + 1] - b_[k];
  const double t = (b - b_[k]) / dx;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * h_[k] + (t3 - 2 * t2 + t) * dx * slope_[k] + (-2 * t3 + 3 * t2) * h_[k + 1] +
         (t3 - t2) * dx * slope_[k + 1];
}

double HBCurve::dH(double b) const {
  if (b >= b_.back()) return 1.0 / kMu0;
  const auto it = std::upper_bound(b_.begin(), b_.end(), b);
  const std::size_t k = static_cast<std::size_t>(it - b_.begin()) - 1;
  const double dx = b_[k + 1] - b_[k];
  const double t = (b - b_[k]) / dx;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * h_[k] + (6 * t - 6 * t2) * h_[k + 1]) / dx + (3 * t2 - 4 * t + 1) * slope_[k] +
         (3 * t2 - 2 * t) * slope_[k + 1];
}

double HBCurve::nu(double b) const {
  b = std::abs(b);
  switch (kind_) {
    case Kind::linear:
      return nu0_;
    case Kind::brauer:
      return k1_ * std::exp(k2_ * b * b) + k3_;
    case Kind::sampled:
      break;
  }
  if (b < 1e-12 * b_[1]) return slope_.front();
  return H(b) / b;
}

double HBCurve::dnu(double b) const {
  b = std::abs(b);
  switch (kind_) {
    case Kind::linear:
      return 0.0;
    case Kind::brauer:
      return 2.0 * k1_ * k2_ * b * std::exp(k2_ * b * b);
    case Kind::sampled:
      break;
  }
  if (b < 1e-9 * b_[1]) return 0.0;
  return (dH(b) - nu(b)) / b;
}

}  // namespace halbach::fem
