#include "halbach/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace halbach {

namespace {

constexpr double kMarginLeft = 80.0;
constexpr double kMarginRight = 160.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 60.0;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::vector<double> ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double f : {1.0, 2.0, 5.0, 10.0}) {
    step = f * mag;
    if (span / step <= target) break;
  }
  std::vector<double> out;
  const double first = std::ceil(lo / step - 1e-9);
  for (double k = first; k * step <= hi + 1e-9 * step; k += 1.0) out.push_back(k == 0.0 ? 0.0 : k * step);
  return out;
}

}  // namespace

std::string LinePlot::render() const {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double y = s.y[k];
      if (!std::isfinite(y) || (log_y && y <= 0.0)) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      const double ty = log_y ? std::log10(y) : y;
      y0 = std::min(y0, ty);
      y1 = std::max(y1, ty);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (log_y) {
    y0 = std::floor(y0);
    y1 = std::max(std::ceil(y1), y0 + 1.0);
  } else {
    if (y0 > 0.0) y0 = 0.0;
    if (y1 == y0) y1 = y0 + 1.0;
    y1 += 0.05 * (y1 - y0);
  }

  const double pw = width - kMarginLeft - kMarginRight;
  const double ph = height - kMarginTop - kMarginBottom;
  const auto sx = [&](double x) { return kMarginLeft + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return kMarginTop + ph - ((log_y ? std::log10(y) : y) - y0) / (y1 - y0) * ph; };
  const auto sy_raw = [&](double t) { return kMarginTop + ph - (t - y0) / (y1 - y0) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height, width, height);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
  for (const auto& [a, b] : bands) {
    const double l = std::clamp(sx(std::min(a, b)), kMarginLeft, kMarginLeft + pw);
    const double r = std::clamp(sx(std::max(a, b)), kMarginLeft, kMarginLeft + pw);
    if (r > l) {
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#d9d9d9\"/>\n", num(l),
                         num(kMarginTop), num(r - l), num(ph));
    }
  }
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                     num(kMarginLeft), num(kMarginTop), num(pw), num(ph));

  for (double t : ticks(x0, x1, 8)) {
    out += fmt::format("<line x1=\"{0}\" x2=\"{0}\" y1=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n", num(sx(t)),
                       num(kMarginTop + ph), num(kMarginTop + ph + 5));
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(sx(t)),
                       num(kMarginTop + ph + 20), fmt::format("{:g}", t));
  }
  const auto yt = log_y ? [&] {
    std::vector<double> v;
    for (double e = y0; e <= y1 + 1e-9; e += 1.0) v.push_back(e);
    return v;
  }()
                        : ticks(y0, y1, 6);
  for (double t : yt) {
    out += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"black\"/>\n", num(kMarginLeft - 5),
                       num(kMarginLeft), num(sy_raw(t)));
    const std::string label = log_y ? fmt::format("1e{:g}", t) : fmt::format("{:g}", t);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(kMarginLeft - 8),
                       num(sy_raw(t) + 4), label);
  }

  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     num(kMarginLeft + pw / 2), num(kMarginTop - 15), escape(title));
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(kMarginLeft + pw / 2),
                     num(height - 15.0), escape(x_label));
  out += fmt::format("<text x=\"20\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">{1}</text>\n",
                     num(kMarginTop + ph / 2), escape(y_label));

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::string path;
    bool pen = false;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double y = s.y[k];
      if (!std::isfinite(y) || (log_y && y <= 0.0)) {
        pen = false;
        continue;
      }
      path += fmt::format("{}{},{} ", pen ? "L" : "M", num(sx(s.x[k])), num(sy(y)));
      pen = true;
      if (s.markers) {
        out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>\n", num(sx(s.x[k])), num(sy(y)),
                           s.color);
      }
    }
    if (!path.empty()) {
      out += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", path, s.color);
    }
    const double ly = kMarginTop + 10.0 + 20.0 * static_cast<double>(si);
    const double lx = kMarginLeft + pw + 15.0;
    out += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"{3}\" stroke-width=\"2\"/>\n", num(lx),
                       num(lx + 20), num(ly), s.color);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(lx + 26), num(ly + 4), escape(s.name));
  }
  out += "</svg>\n";
  return out;
}

std::string deviation_plot_svg(const ValidationReport& report) {
  LinePlot plot;
  plot.title = fmt::format("{} / {}, seed {}: ring {} deviation from truth", report.observable, report.method,
                           report.seed, report.report_ring);
  plot.x_label = "block index";
  plot.y_label = "|mean - truth| (A/m)";
  const auto idx = report.layout.ring_indices(report.report_ring);
  const auto prior_dev = report.prior_deviation();
  const auto post_dev = report.posterior_deviation();
  const int nc = report.layout.n_components();
  static const char* kComp[] = {"x", "y", "z"};
  static const char* kPriorColor[] = {"#1f77b4", "#6baed6", "#9ecae1"};
  static const char* kPostColor[] = {"#d62728", "#fc9272", "#fcbba1"};
  for (int c = 0; c < nc; ++c) {
    PlotSeries prior{fmt::format("prior {}", kComp[c]), {}, {}, kPriorColor[c], true};
    PlotSeries post{fmt::format("posterior {}", kComp[c]), {}, {}, kPostColor[c], true};
    for (auto k : idx) {
      const auto [block, ring, comp] = report.layout.unflatten(k);
      if (comp != c) continue;
      prior.x.push_back(block);
      prior.y.push_back(prior_dev(k));
      post.x.push_back(block);
      post.y.push_back(post_dev(k));
    }
    plot.series.push_back(std::move(prior));
    plot.series.push_back(std::move(post));
  }
  return plot.render();
}

std::string error_profile_svg(const ApplicationReport& report) {
  LinePlot plot;
  plot.title = fmt::format("Relative dipole error, seed {} (fringe shaded)", report.seed);
  plot.x_label = "z (m)";
  plot.y_label = "E_rel";
  plot.log_y = true;
  const auto& z = report.profile.z;
  PlotSeries prior{"prior mean", {}, {}, "#1f77b4", true};
  PlotSeries post{"posterior mean", {}, {}, "#d62728", true};
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    prior.x.push_back(z(k));
    prior.y.push_back(report.e_prior.e_rel(k));
    post.x.push_back(z(k));
    post.y.push_back(report.e_posterior.e_rel(k));
  }
  // Shade each maximal run of fringe positions, extended halfway to the
  // neighbouring homogeneous positions.
  const auto n = z.size();
  for (Eigen::Index k = 0; k < n;) {
    if (!report.profile.fringe[static_cast<std::size_t>(k)]) {
      ++k;
      continue;
    }
    Eigen::Index e = k;
    while (e + 1 < n && report.profile.fringe[static_cast<std::size_t>(e + 1)]) ++e;
    const double lo = k > 0 ? 0.5 * (z(k - 1) + z(k)) : z(k);
    const double hi = e + 1 < n ? 0.5 * (z(e) + z(e + 1)) : z(e);
    plot.bands.emplace_back(lo, hi);
    k = e + 1;
  }
  plot.series.push_back(std::move(prior));
  plot.series.push_back(std::move(post));
  return plot.render();
}

}  // namespace halbach
