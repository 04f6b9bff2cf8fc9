#include "ddace/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ddace {

namespace {

std::string num(double v) {
  // Two decimals are plenty for drawing coordinates.
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

SvgCanvas::SvgCanvas(double width, double height) : width_(width), height_(height) {}

void SvgCanvas::polyline(const std::vector<Vec2>& pts, const std::string& color,
                         double stroke_width, bool dashed) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
    << num(stroke_width) << "\"";
  if (dashed) s << " stroke-dasharray=\"6 4\"";
  s << " points=\"";
  for (const Vec2& p : pts) s << num(p.x) << "," << num(p.y) << " ";
  s << "\"/>\n";
  body_ += s.str();
}

void SvgCanvas::circle(Vec2 center, double radius, const std::string& fill,
                       const std::string& stroke) {
  std::ostringstream s;
  s << "<circle cx=\"" << num(center.x) << "\" cy=\"" << num(center.y)
    << "\" r=\"" << num(radius) << "\" fill=\"" << fill << "\" stroke=\""
    << stroke << "\"/>\n";
  body_ += s.str();
}

void SvgCanvas::rect(Vec2 corner, double w, double h, const std::string& fill,
                     const std::string& stroke) {
  std::ostringstream s;
  s << "<rect x=\"" << num(corner.x) << "\" y=\"" << num(corner.y)
    << "\" width=\"" << num(w) << "\" height=\"" << num(h) << "\" fill=\""
    << fill << "\" stroke=\"" << stroke << "\"/>\n";
  body_ += s.str();
}

void SvgCanvas::line(Vec2 a, Vec2 b, const std::string& color, double stroke_width) {
  std::ostringstream s;
  s << "<line x1=\"" << num(a.x) << "\" y1=\"" << num(a.y) << "\" x2=\""
    << num(b.x) << "\" y2=\"" << num(b.y) << "\" stroke=\"" << color
    << "\" stroke-width=\"" << num(stroke_width) << "\"/>\n";
  body_ += s.str();
}

void SvgCanvas::text(Vec2 pos, const std::string& s, double size,
                     const std::string& color) {
  std::ostringstream o;
  o << "<text x=\"" << num(pos.x) << "\" y=\"" << num(pos.y)
    << "\" font-size=\"" << num(size) << "\" font-family=\"sans-serif\" fill=\""
    << color << "\">" << s << "</text>\n";
  body_ += o.str();
}

std::string SvgCanvas::finish() const {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_)
    << "\" height=\"" << num(height_) << "\" viewBox=\"0 0 " << num(width_)
    << " " << num(height_) << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << body_;
  s << "</svg>\n";
  return s.str();
}

void SvgCanvas::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write svg " + path);
  out << finish();
}

const std::string& series_color(size_t index) {
  static const std::vector<std::string> palette = {
      "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
      "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#aec7e8", "#98df8a"};
  return palette[index % palette.size()];
}

void render_loss_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                       bool log_y, const std::string& path) {
  const double w = 640, h = 420, ml = 60, mr = 20, mt = 24, mb = 40;
  SvgCanvas svg(w, h);

  size_t max_len = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [name, values] : series) {
    max_len = std::max(max_len, values.size());
    for (double v : values) {
      double y = log_y ? std::log10(std::max(v, 1e-12)) : v;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;

  auto map = [&](double epoch, double value) {
    double y = log_y ? std::log10(std::max(value, 1e-12)) : value;
    return Vec2{ml + (w - ml - mr) * epoch / double(std::max<size_t>(max_len - 1, 1)),
                h - mb - (h - mt - mb) * (y - lo) / (hi - lo)};
  };

  svg.line({ml, h - mb}, {w - mr, h - mb}, "#333", 1.0);
  svg.line({ml, mt}, {ml, h - mb}, "#333", 1.0);
  svg.text({w / 2 - 20, h - 10}, "epoch", 12);
  svg.text({8, mt + 6}, log_y ? "log10 loss" : "loss", 12);

  size_t idx = 0;
  for (const auto& [name, values] : series) {
    std::vector<Vec2> pts;
    for (size_t e = 0; e < values.size(); ++e) {
      pts.push_back(map(double(e), values[e]));
    }
    if (!pts.empty()) svg.polyline(pts, series_color(idx), 1.5);
    svg.text({w - mr - 150, mt + 14.0 * double(idx + 1)}, name, 11,
             series_color(idx));
    ++idx;
  }
  svg.save(path);
}

}  // namespace ddace
