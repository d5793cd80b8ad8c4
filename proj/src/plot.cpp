#include "mtk/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mtk/errors.hpp"

namespace mtk {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

// Round numbers for axis ticks.
std::vector<double> nice_ticks(double lo, double hi, int target) {
  std::vector<double> ticks;
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

}  // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series) {
  const double left = 70, right = 180, top = 40, bottom = 55;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;

  auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
  auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      const double x = tx(s.x[k]);
      const double b = k < s.band.size() && !spec.log_y ? s.band[k] : 0.0;
      if (!std::isfinite(x) || !std::isfinite(ty(s.y[k]))) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, ty(s.y[k] - b));
      ymax = std::max(ymax, ty(s.y[k] + b));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.04 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto sx = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - ty(y)) / (ymax - ymin) * ph; };
  auto decades = [](double lo, double hi) {
    std::vector<double> t;
    for (double e = std::ceil(lo); e <= hi + 1e-9; e += 1.0) t.push_back(std::pow(10.0, e));
    return t;
  };
  auto label = [](bool log, double v) { return log ? "1e" + fmt(std::log10(v)) : fmt(v); };

  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title) << "</text>\n";

  // Axes and ticks.
  o << "<g stroke=\"#333\" fill=\"none\"><rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\"/></g>\n<g fill=\"#333\">\n";
  const auto yt = spec.log_y ? decades(ymin, ymax) : nice_ticks(ymin, ymax, 6);
  for (double t : yt) {
    o << "<line x1=\"" << left - 4 << "\" x2=\"" << left << "\" y1=\"" << sy(t) << "\" y2=\"" << sy(t) << "\" stroke=\"#333\"/>"
      << "<text x=\"" << left - 7 << "\" y=\"" << sy(t) + 4 << "\" text-anchor=\"end\">" << label(spec.log_y, t) << "</text>\n";
  }
  const auto xt = spec.log_x ? decades(xmin, xmax) : nice_ticks(xmin, xmax, 7);
  for (double t : xt) {
    const double px = sx(t);
    o << "<line x1=\"" << px << "\" x2=\"" << px << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph + 4 << "\" stroke=\"#333\"/>"
      << "<text x=\"" << px << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << label(spec.log_x, t) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << spec.height - 12 << "\" text-anchor=\"middle\">" << escape(spec.x_label)
    << "</text>\n<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.y_label) << "</text>\n</g>\n";

  // Bands first so lines stay on top.
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& se = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    const bool has_band = std::any_of(se.band.begin(), se.band.end(), [](double b) { return b > 0.0; });
    if (!has_band || spec.log_y) continue;
    o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t k = 0; k < se.x.size(); ++k) o << sx(se.x[k]) << ',' << sy(se.y[k] + se.band[k]) << ' ';
    for (std::size_t k = se.x.size(); k-- > 0;) o << sx(se.x[k]) << ',' << sy(se.y[k] - se.band[k]) << ' ';
    o << "\"/>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& se = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t k = 0; k < se.x.size() && k < se.y.size(); ++k) {
      if (std::isfinite(ty(se.y[k]))) o << sx(se.x[k]) << ',' << sy(se.y[k]) << ' ';
    }
    o << "\"/>\n";
  }

  // Legend.
  o << "<g class=\"legend\">\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = top + 10 + 20.0 * static_cast<double>(s);
    o << "<line x1=\"" << left + pw + 14 << "\" x2=\"" << left + pw + 38 << "\" y1=\"" << y << "\" y2=\"" << y << "\" stroke=\""
      << kPalette[s % std::size(kPalette)] << "\" stroke-width=\"2.5\"/><text x=\"" << left + pw + 44 << "\" y=\"" << y + 4
      << "\">" << escape(series[s].label) << "</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

void write_svg(const std::string& path, const PlotSpec& spec, const std::vector<Series>& series) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << render_svg(spec, series);
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace mtk
