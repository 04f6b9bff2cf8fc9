#include "ddace/geometry.hpp"

#include <string>

namespace ddace {

double arc_length(const Polyline& p) {
  double total = 0.0;
  for (size_t i = 1; i < p.size(); ++i) total += dist(p[i - 1], p[i]);
  return total;
}

Vec2 point_at_arclength(const Polyline& p, double s) {
  if (p.empty()) throw InputError("point_at_arclength: empty polyline");
  if (s <= 0.0) return p.front();
  double acc = 0.0;
  for (size_t i = 1; i < p.size(); ++i) {
    double seg = dist(p[i - 1], p[i]);
    if (acc + seg >= s && seg > 0.0) {
      return lerp(p[i - 1], p[i], (s - acc) / seg);
    }
    acc += seg;
  }
  return p.back();
}

Polyline resample_by_index(const Polyline& p, int m) {
  if (p.size() < 2) throw InputError("resample: need at least 2 points");
  if (m < 2) throw InputError("resample: need m >= 2");
  Polyline out;
  out.reserve(size_t(m));
  const double last = double(p.size() - 1);
  for (int j = 0; j < m; ++j) {
    double u = last * double(j) / double(m - 1);
    size_t i = size_t(u);
    if (i >= p.size() - 1) {
      out.push_back(p.back());
    } else {
      out.push_back(lerp(p[i], p[i + 1], u - double(i)));
    }
  }
  out.front() = p.front();
  out.back() = p.back();
  return out;
}

Polyline resample_by_arclength(const Polyline& p, int m) {
  if (p.size() < 2) throw InputError("resample: need at least 2 points");
  if (m < 2) throw InputError("resample: need m >= 2");
  const double total = arc_length(p);
  Polyline out;
  out.reserve(size_t(m));
  for (int j = 0; j < m; ++j) {
    out.push_back(point_at_arclength(p, total * double(j) / double(m - 1)));
  }
  out.front() = p.front();
  out.back() = p.back();
  return out;
}

ChordFrame ChordFrame::from_chord(Vec2 start, Vec2 end) {
  const double chord = dist(start, end);
  if (chord <= kChordEpsilon) {
    throw InputError("degenerate chord: |end - start| = " +
                     format_double(chord));
  }
  ChordFrame f;
  f.start = start;
  f.theta = std::atan2(end.y - start.y, end.x - start.x);
  f.scale = chord;
  return f;
}

}  // namespace ddace
