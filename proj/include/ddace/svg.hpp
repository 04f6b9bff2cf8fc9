#pragma once

#include <string>
#include <vector>

#include "ddace/geometry.hpp"

namespace ddace {

/// Minimal static-SVG builder; coordinates are mapped by the caller.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void polyline(const std::vector<Vec2>& pts, const std::string& color,
                double stroke_width, bool dashed = false);
  void circle(Vec2 center, double radius, const std::string& fill,
              const std::string& stroke = "none");
  void rect(Vec2 corner, double w, double h, const std::string& fill,
            const std::string& stroke = "none");
  void line(Vec2 a, Vec2 b, const std::string& color, double stroke_width);
  void text(Vec2 pos, const std::string& s, double size,
            const std::string& color = "#333");

  std::string finish() const;
  void save(const std::string& path) const;

 private:
  double width_, height_;
  std::string body_;
};

/// Fixed palette for per-robot colors.
const std::string& series_color(size_t index);

/// Multi-series line chart (used for loss curves); y may be log-scaled.
void render_loss_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                       bool log_y, const std::string& path);

}  // namespace ddace
