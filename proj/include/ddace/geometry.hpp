#pragma once

#include <cmath>
#include <vector>

#include "ddace/common.hpp"

namespace ddace {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 rotate(Vec2 v, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}
inline Vec2 lerp(Vec2 a, Vec2 b, double t) {
  return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
}

using Polyline = std::vector<Vec2>;

double arc_length(const Polyline& p);

/// Point at arclength s along the polyline (clamped to the endpoints).
Vec2 point_at_arclength(const Polyline& p, double s);

/// Resample to m points, uniform in the original index parameter.
/// Endpoints are preserved exactly. Throws InputError when the input has
/// fewer than 2 points or m < 2.
Polyline resample_by_index(const Polyline& p, int m);

/// Resample to m points, uniform in arclength.
Polyline resample_by_arclength(const Polyline& p, int m);

constexpr double kChordEpsilon = 1e-6;

/// Similarity transform tying a start->end chord to the canonical frame
/// (start at origin, chord along +x, unit chord length).
struct ChordFrame {
  Vec2 start{};
  double theta = 0.0;  // chord orientation in the world frame
  double scale = 1.0;  // chord length

  static ChordFrame from_chord(Vec2 start, Vec2 end);

  Vec2 to_canonical(Vec2 p) const {
    return rotate(p - start, -theta) * (1.0 / scale);
  }
  Vec2 to_world(Vec2 p) const { return rotate(p * scale, theta) + start; }
};

}  // namespace ddace
