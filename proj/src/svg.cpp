#include "krlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace krlab::svg {

namespace {

constexpr double kPanelW = 420.0;
constexpr double kPanelH = 320.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 34.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Axis {
  bool log = true;
  double lo = 0.0;
  double hi = 1.0;

  double map(double v) const { return log ? std::log10(v) : v; }

  void fit(const std::vector<double>& values) {
    double a = std::numeric_limits<double>::infinity();
    double b = -a;
    for (double v : values) {
      if (!std::isfinite(v) || (log && v <= 0.0)) continue;
      a = std::min(a, map(v));
      b = std::max(b, map(v));
    }
    if (!std::isfinite(a)) {
      a = 0.0;
      b = 1.0;
    }
    if (b - a < 1e-9) {
      a -= 0.5;
      b += 0.5;
    }
    const double pad = 0.05 * (b - a);
    lo = a - pad;
    hi = b + pad;
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::ceil(lo); e <= hi; e += 1.0) out.push_back(e);
      if (out.size() < 2) out = {lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo)};
    } else {
      for (int k = 0; k <= 4; ++k) out.push_back(lo + (hi - lo) * k / 4.0);
    }
    return out;
  }

  double unmap(double v) const { return log ? std::pow(10.0, v) : v; }
};

void render_panel(std::ostringstream& out, const Panel& p, double x0) {
  Axis ax{p.log_x};
  Axis ay{p.log_y};
  std::vector<double> xs, ys;
  for (const auto& s : p.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
    ys.insert(ys.end(), s.lower.begin(), s.lower.end());
    ys.insert(ys.end(), s.upper.begin(), s.upper.end());
  }
  ax.fit(xs);
  ay.fit(ys);

  const double pw = kPanelW - kLeft - kRight;
  const double ph = kPanelH - kTop - kBottom;
  const auto px = [&](double v) { return x0 + kLeft + (ax.map(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
  const auto py = [&](double v) { return kTop + ph - (ay.map(v) - ay.lo) / (ay.hi - ay.lo) * ph; };
  const auto valid = [&](double xv, double yv) {
    return std::isfinite(xv) && std::isfinite(yv) && (!p.log_x || xv > 0.0) && (!p.log_y || yv > 0.0);
  };

  out << "<text x=\"" << num(x0 + kLeft + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(p.title) << "</text>\n";
  out << "<rect x=\"" << num(x0 + kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (double t : ax.ticks()) {
    const double x = x0 + kLeft + (t - ax.lo) / (ax.hi - ax.lo) * pw;
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(kTop + ph + 5) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\" font-size=\"11\">"
        << tick_label(ax.unmap(t)) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = kTop + ph - (t - ay.lo) / (ay.hi - ay.lo) * ph;
    out << "<line x1=\"" << num(x0 + kLeft - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x0 + kLeft)
        << "\" y2=\"" << num(y) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << num(x0 + kLeft - 8) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(ay.unmap(t)) << "</text>\n";
  }
  out << "<text x=\"" << num(x0 + kLeft + pw / 2) << "\" y=\"" << num(kPanelH - 10)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.x_label) << "</text>\n";
  out << "<text transform=\"translate(" << num(x0 + 16) << "," << num(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.y_label) << "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const Series& s = p.series[k];
    const char* color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    if (s.lower.size() == s.x.size() && s.upper.size() == s.x.size() && !s.x.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (valid(s.x[i], s.upper[i])) pts += num(px(s.x[i])) + "," + num(py(s.upper[i])) + " ";
      for (std::size_t i = s.x.size(); i-- > 0;)
        if (valid(s.x[i], s.lower[i])) pts += num(px(s.x[i])) + "," + num(py(s.lower[i])) + " ";
      out << "<polygon points=\"" << pts << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (valid(s.x[i], s.y[i])) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (valid(s.x[i], s.y[i]))
        out << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\"" << color
            << "\"/>\n";
    const double ly = kTop + 14.0 + 16.0 * static_cast<double>(k);
    out << "<rect x=\"" << num(x0 + kLeft + 8) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/>\n";
    out << "<text x=\"" << num(x0 + kLeft + 22) << "\" y=\"" << num(ly) << "\" font-size=\"11\">" << escape(s.label)
        << "</text>\n";
  }
}

}  // namespace

std::string render(const std::vector<Panel>& panels) {
  if (panels.empty()) throw std::invalid_argument("svg::render: no panels");
  std::ostringstream out;
  const double width = kPanelW * static_cast<double>(panels.size());
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(kPanelH)
      << "\" viewBox=\"0 0 " << num(width) << " " << num(kPanelH) << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < panels.size(); ++k) render_panel(out, panels[k], kPanelW * static_cast<double>(k));
  out << "</svg>\n";
  return out.str();
}

void write(const std::string& path, const std::vector<Panel>& panels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << render(panels);
}

}  // namespace krlab::svg
