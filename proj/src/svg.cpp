#include "pidld/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pidld/csv.hpp"  // IoError

namespace pidld {

namespace {

constexpr int kMarginLeft = 72;
constexpr int kMarginRight = 24;
constexpr int kMarginTop = 44;
constexpr int kMarginBottom = 58;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
                          "#17becf", "#bcbd22"};
constexpr int kPaletteSize = 10;

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  void pad_if_flat() {
    if (!valid()) {
      lo = 0.0;
      hi = 1.0;
    } else if (lo == hi) {
      const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

// Round tick spacing to 1/2/5 times a power of ten.
std::vector<double> nice_ticks(double lo, double hi, int target) {
  std::vector<double> ticks;
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  double step = std::pow(10.0, std::floor(std::log10(span / target)));
  const double err = span / (target * step);
  if (err >= 7.5) step *= 10.0;
  else if (err >= 3.5) step *= 5.0;
  else if (err >= 1.5) step *= 2.0;
  const double first = std::ceil(lo / step) * step;
  for (double t = first; t <= hi + step * 1e-9; t += step) {
    ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  }
  return ticks;
}

class SvgDoc {
 public:
  SvgDoc(const std::string& path, int width, int height,
         const std::vector<std::string>& comments)
      : path_(path), width_(width), height_(height) {
    body_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    for (const auto& c : comments) {
      body_ << "<!-- " << xml_escape(c) << " -->\n";
    }
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
          << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
          << height << "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
    body_ << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\""
          << height << "\" fill=\"#ffffff\"/>\n";
  }

  std::ostringstream& out() { return body_; }

  void finish() {
    body_ << "</svg>\n";
    std::ofstream f(path_, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path_);
    f << body_.str();
    f.flush();
    if (!f) throw IoError("write failed: " + path_);
  }

  int width() const { return width_; }
  int height() const { return height_; }

 private:
  std::string path_;
  int width_;
  int height_;
  std::ostringstream body_;
};

struct PlotArea {
  double x0, y0, x1, y1;  // pixel corners (y0 top)
  double data_x0, data_x1, data_y0, data_y1;
  bool log_y = false;

  double px(double x) const {
    return x0 + (x - data_x0) / (data_x1 - data_x0) * (x1 - x0);
  }
  double py(double y) const {
    const double v = log_y ? std::log10(y) : y;
    return y1 - (v - data_y0) / (data_y1 - data_y0) * (y1 - y0);
  }
};

void draw_frame_and_ticks(SvgDoc& doc, const PlotArea& area,
                          const std::string& title, const std::string& x_label,
                          const std::string& y_label) {
  auto& o = doc.out();
  // Gridlines + ticks.
  const std::vector<double> xticks = nice_ticks(area.data_x0, area.data_x1, 8);
  std::vector<double> yticks;
  if (area.log_y) {
    for (double e = std::ceil(area.data_y0); e <= std::floor(area.data_y1) + 1e-9; e += 1.0) {
      yticks.push_back(e);
    }
    if (yticks.size() < 2) yticks = nice_ticks(area.data_y0, area.data_y1, 6);
  } else {
    yticks = nice_ticks(area.data_y0, area.data_y1, 6);
  }
  for (double t : xticks) {
    const double x = area.px(t);
    o << "<line x1=\"" << fmt2(x) << "\" y1=\"" << fmt2(area.y0) << "\" x2=\""
      << fmt2(x) << "\" y2=\"" << fmt2(area.y1)
      << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    o << "<line x1=\"" << fmt2(x) << "\" y1=\"" << fmt2(area.y1) << "\" x2=\""
      << fmt2(x) << "\" y2=\"" << fmt2(area.y1 + 5)
      << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    o << "<text x=\"" << fmt2(x) << "\" y=\"" << fmt2(area.y1 + 20)
      << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\">"
      << xml_escape(fmtg(t)) << "</text>\n";
  }
  for (double t : yticks) {
    const double data_val = area.log_y ? std::pow(10.0, t) : t;
    // py() applies the log transform itself, so feed it the data-space value.
    const double y = area.log_y
                         ? area.y1 - (t - area.data_y0) /
                                         (area.data_y1 - area.data_y0) *
                                         (area.y1 - area.y0)
                         : area.py(t);
    o << "<line x1=\"" << fmt2(area.x0) << "\" y1=\"" << fmt2(y) << "\" x2=\""
      << fmt2(area.x1) << "\" y2=\"" << fmt2(y)
      << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    o << "<line x1=\"" << fmt2(area.x0 - 5) << "\" y1=\"" << fmt2(y)
      << "\" x2=\"" << fmt2(area.x0) << "\" y2=\"" << fmt2(y)
      << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    o << "<text x=\"" << fmt2(area.x0 - 8) << "\" y=\"" << fmt2(y + 4)
      << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#333333\">"
      << xml_escape(fmtg(data_val)) << "</text>\n";
  }
  // Frame.
  o << "<rect x=\"" << fmt2(area.x0) << "\" y=\"" << fmt2(area.y0)
    << "\" width=\"" << fmt2(area.x1 - area.x0) << "\" height=\""
    << fmt2(area.y1 - area.y0)
    << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  // Labels.
  o << "<text x=\"" << fmt2((area.x0 + area.x1) / 2) << "\" y=\"22\""
    << " font-size=\"15\" text-anchor=\"middle\" fill=\"#111111\">"
    << xml_escape(title) << "</text>\n";
  o << "<text x=\"" << fmt2((area.x0 + area.x1) / 2) << "\" y=\""
    << fmt2(area.y1 + 42)
    << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111111\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << fmt2((area.y0 + area.y1) / 2)
    << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111111\""
    << " transform=\"rotate(-90 18 " << fmt2((area.y0 + area.y1) / 2) << ")\">"
    << xml_escape(y_label) << "</text>\n";
}

struct Rgb {
  double r, g, b;
};

std::string ramp_color(double t) {
  // Diverging blue -> pale yellow -> red.
  static const Rgb stops[3] = {{0x2c, 0x7b, 0xb6}, {0xff, 0xff, 0xbf}, {0xd7, 0x19, 0x1c}};
  t = std::clamp(t, 0.0, 1.0);
  const int seg = t < 0.5 ? 0 : 1;
  const double u = (t - 0.5 * seg) * 2.0;
  const Rgb& a = stops[seg];
  const Rgb& b = stops[seg + 1];
  char buf[10];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(a.r + (b.r - a.r) * u)),
                static_cast<int>(std::lround(a.g + (b.g - a.g) * u)),
                static_cast<int>(std::lround(a.b + (b.b - a.b) * u)));
  return buf;
}

}  // namespace

void render_line_chart(const std::string& path, const ChartStyle& style,
                       const std::vector<Series>& series,
                       const std::vector<std::string>& comments) {
  SvgDoc doc(path, style.width, style.height, comments);
  Range xr, yr;
  for (const auto& s : series) {
    if (s.xs.size() != s.ys.size()) {
      throw std::invalid_argument("series '" + s.name + "' has mismatched x/y lengths");
    }
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (style.log_y && !(s.ys[i] > 0.0)) continue;
      xr.add(s.xs[i]);
      yr.add(style.log_y ? std::log10(s.ys[i]) : s.ys[i]);
    }
  }
  xr.pad_if_flat();
  yr.pad_if_flat();
  PlotArea area{static_cast<double>(kMarginLeft), static_cast<double>(kMarginTop),
                static_cast<double>(style.width - kMarginRight),
                static_cast<double>(style.height - kMarginBottom),
                xr.lo, xr.hi, yr.lo, yr.hi, style.log_y};
  draw_frame_and_ticks(doc, area, style.title, style.x_label, style.y_label);
  auto& o = doc.out();
  o << "<clipPath id=\"plot\"><rect x=\"" << fmt2(area.x0) << "\" y=\""
    << fmt2(area.y0) << "\" width=\"" << fmt2(area.x1 - area.x0)
    << "\" height=\"" << fmt2(area.y1 - area.y0) << "\"/></clipPath>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % kPaletteSize];
    o << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" clip-path=\"url(#plot)\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (style.log_y && !(s.ys[i] > 0.0)) continue;
      if (!first) o << ' ';
      o << fmt2(area.px(s.xs[i])) << ',' << fmt2(area.py(s.ys[i]));
      first = false;
    }
    o << "\"/>\n";
  }
  // Legend, top-right inside the plot.
  const double lx = area.x1 - 180;
  double ly = area.y0 + 14;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % kPaletteSize];
    o << "<line x1=\"" << fmt2(lx) << "\" y1=\"" << fmt2(ly - 4) << "\" x2=\""
      << fmt2(lx + 22) << "\" y2=\"" << fmt2(ly - 4) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt2(lx + 28) << "\" y=\"" << fmt2(ly)
      << "\" font-size=\"12\" fill=\"#111111\">" << xml_escape(series[k].name)
      << "</text>\n";
    ly += 17;
  }
  doc.finish();
}

void render_heatmap(const std::string& path, const HeatmapStyle& style,
                    const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<double>& values,
                    const std::vector<Series>& overlays,
                    const std::vector<std::string>& comments) {
  if (xs.empty() || ys.empty() || values.size() != xs.size() * ys.size()) {
    throw std::invalid_argument("heatmap values must be ys.size() x xs.size()");
  }
  SvgDoc doc(path, style.width, style.height, comments);
  const double dx = xs.size() > 1 ? xs[1] - xs[0] : 1.0;
  const double dy = ys.size() > 1 ? ys[1] - ys[0] : 1.0;
  PlotArea area{static_cast<double>(kMarginLeft), static_cast<double>(kMarginTop),
                static_cast<double>(style.width - kMarginRight - 70),
                static_cast<double>(style.height - kMarginBottom),
                xs.front() - dx / 2, xs.back() + dx / 2,
                ys.front() - dy / 2, ys.back() + dy / 2, false};
  auto& o = doc.out();
  const double span = style.v_max - style.v_min;
  for (std::size_t r = 0; r < ys.size(); ++r) {
    for (std::size_t c = 0; c < xs.size(); ++c) {
      const double v = values[r * xs.size() + c];
      const double t = span > 0 ? (v - style.v_min) / span : 0.5;
      const double x = area.px(xs[c] - dx / 2);
      const double y = area.py(ys[r] + dy / 2);
      const double w = area.px(xs[c] + dx / 2) - x;
      const double h = area.py(ys[r] - dy / 2) - y;
      o << "<rect x=\"" << fmt2(x) << "\" y=\"" << fmt2(y) << "\" width=\""
        << fmt2(w) << "\" height=\"" << fmt2(h) << "\" fill=\""
        << ramp_color(t) << "\"/>\n";
    }
  }
  o << "<clipPath id=\"plot\"><rect x=\"" << fmt2(area.x0) << "\" y=\""
    << fmt2(area.y0) << "\" width=\"" << fmt2(area.x1 - area.x0)
    << "\" height=\"" << fmt2(area.y1 - area.y0) << "\"/></clipPath>\n";
  for (std::size_t k = 0; k < overlays.size(); ++k) {
    const auto& s = overlays[k];
    o << "<polyline fill=\"none\" stroke=\"#000000\" stroke-width=\"2\""
      << " stroke-dasharray=\"6 3\" clip-path=\"url(#plot)\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (i) o << ' ';
      o << fmt2(area.px(s.xs[i])) << ',' << fmt2(area.py(s.ys[i]));
    }
    o << "\"/>\n";
    o << "<text x=\"" << fmt2(area.x0 + 10) << "\" y=\""
      << fmt2(area.y0 + 18 + 16 * static_cast<double>(k))
      << "\" font-size=\"12\" fill=\"#000000\">" << xml_escape(s.name)
      << "</text>\n";
  }
  draw_frame_and_ticks(doc, area, style.title, style.x_label, style.y_label);
  // Color bar.
  const double bar_x = area.x1 + 18;
  const double bar_w = 16;
  const int bar_steps = 64;
  for (int i = 0; i < bar_steps; ++i) {
    const double t0 = static_cast<double>(i) / bar_steps;
    const double y_top = area.y1 - (area.y1 - area.y0) * (i + 1.0) / bar_steps;
    const double h = (area.y1 - area.y0) / bar_steps + 0.5;
    o << "<rect x=\"" << fmt2(bar_x) << "\" y=\"" << fmt2(y_top) << "\" width=\""
      << fmt2(bar_w) << "\" height=\"" << fmt2(h) << "\" fill=\""
      << ramp_color(t0) << "\"/>\n";
  }
  o << "<rect x=\"" << fmt2(bar_x) << "\" y=\"" << fmt2(area.y0) << "\" width=\""
    << fmt2(bar_w) << "\" height=\"" << fmt2(area.y1 - area.y0)
    << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  o << "<text x=\"" << fmt2(bar_x + bar_w + 4) << "\" y=\"" << fmt2(area.y1 + 4)
    << "\" font-size=\"11\" fill=\"#333333\">" << xml_escape(fmtg(style.v_min))
    << "</text>\n";
  o << "<text x=\"" << fmt2(bar_x + bar_w + 4) << "\" y=\"" << fmt2(area.y0 + 8)
    << "\" font-size=\"11\" fill=\"#333333\">" << xml_escape(fmtg(style.v_max))
    << "</text>\n";
  o << "<text x=\"" << fmt2(bar_x + bar_w / 2) << "\" y=\"" << fmt2(area.y0 - 8)
    << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\">"
    << xml_escape(style.value_label) << "</text>\n";
  doc.finish();
}

}  // namespace pidld
