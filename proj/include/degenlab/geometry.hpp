#pragma once
// Planar polygonal domains with a degeneracy point at the origin: the
// geometric condition near 0, the observed boundary portion (x.nu > 0) and
// truncated domains with a ball around the origin removed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace degenlab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a truncation arc cannot be closed against the boundary.
class TopologyError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

/// One boundary edge of the polygon, from vertex `start` to vertex `end`.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string tag;
};

struct DomainSpec {
  std::vector<Vec2> vertices;  // counter-clockwise
  std::vector<Segment> segments;
  bool contains_origin_on_boundary = true;
  double R0 = 0.4;
  double M_radius = 2.0;  // Omega is inside B(0, M_radius - 1)
};

inline constexpr double kOriginTolerance = 1e-12;
inline constexpr double kZeroClassTolerance = 1e-10;

// ---------------------------------------------------------------------------
// Elementary polygon queries

inline double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += cross(p, q);
  }
  return 0.5 * a;
}

inline double polygon_area(const DomainSpec& d) { return std::abs(signed_area(d.vertices)); }

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

inline double distance_to_boundary(const std::vector<Vec2>& poly, Vec2 p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i)
    d = std::min(d, point_segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  return d;
}

/// Even-odd rule; points on the boundary may go either way.
inline bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

namespace detail {

inline int orient_sign(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

inline bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int d1 = orient_sign(q1, q2, p1);
  const int d2 = orient_sign(q1, q2, p2);
  const int d3 = orient_sign(p1, p2, q1);
  const int d4 = orient_sign(p1, p2, q2);
  if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) return true;
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

inline std::vector<Segment> default_segments(std::size_t n, const std::vector<std::string>& tags) {
  std::vector<Segment> segs;
  segs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    segs.push_back({i, (i + 1) % n, i < tags.size() ? tags[i] : "e" + std::to_string(i)});
  return segs;
}

}  // namespace detail

inline double max_vertex_norm(const DomainSpec& d) {
  double m = 0.0;
  for (const Vec2& v : d.vertices) m = std::max(m, norm(v));
  return m;
}

inline double diameter(const DomainSpec& d) {
  double m = 0.0;
  for (const Vec2& a : d.vertices)
    for (const Vec2& b : d.vertices) m = std::max(m, norm(a - b));
  return m;
}

/// Outward unit normal of polygon edge i (counter-clockwise orientation).
inline Vec2 edge_normal(const DomainSpec& d, std::size_t i) {
  const Vec2 a = d.vertices[d.segments[i].start];
  const Vec2 b = d.vertices[d.segments[i].end];
  const Vec2 e = b - a;
  const double len = norm(e);
  return {e.y / len, -e.x / len};
}

inline Vec2 edge_midpoint(const DomainSpec& d, std::size_t i) {
  return 0.5 * (d.vertices[d.segments[i].start] + d.vertices[d.segments[i].end]);
}

/// Throws GeometryError naming the first violated invariant.
inline void validate(const DomainSpec& d) {
  const std::size_t n = d.vertices.size();
  if (n < 3) throw GeometryError("domain needs at least 3 vertices");
  if (d.segments.size() != n) throw GeometryError("domain needs exactly one segment per polygon edge");
  for (std::size_t i = 0; i < n; ++i) {
    if (d.segments[i].start != i || d.segments[i].end != (i + 1) % n)
      throw GeometryError("segment " + std::to_string(i) + " does not follow the vertex order");
    if (norm(d.vertices[(i + 1) % n] - d.vertices[i]) == 0.0)
      throw GeometryError("degenerate polygon: repeated vertex " + std::to_string(i));
  }
  if (!(d.R0 > 0.0)) throw GeometryError("R0 must be positive");
  if (!(d.M_radius > 0.0)) throw GeometryError("M_radius must be positive");
  const double area = signed_area(d.vertices);
  if (!(area > 0.0)) throw GeometryError("polygon is degenerate or not counter-clockwise");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (detail::segments_intersect(d.vertices[i], d.vertices[(i + 1) % n], d.vertices[j],
                                     d.vertices[(j + 1) % n]))
        throw GeometryError("polygon is not simple: edges " + std::to_string(i) + " and " +
                            std::to_string(j) + " intersect");
    }
  }
  for (const Vec2& v : d.vertices)
    if (norm(v) > d.M_radius - 1.0 + 1e-12) throw GeometryError("vertex lies outside B(0, M_radius - 1)");
  if (d.contains_origin_on_boundary && distance_to_boundary(d.vertices, {0.0, 0.0}) > kOriginTolerance)
    throw GeometryError("origin is not on the boundary");
}

/// Builds a validated domain from vertices; M_radius defaults to 1 + max |v|.
inline DomainSpec make_domain(std::vector<Vec2> vertices, double R0, std::vector<std::string> tags = {},
                              std::optional<double> M_radius = std::nullopt,
                              bool contains_origin_on_boundary = true) {
  DomainSpec d;
  d.vertices = std::move(vertices);
  d.segments = detail::default_segments(d.vertices.size(), tags);
  d.R0 = R0;
  d.contains_origin_on_boundary = contains_origin_on_boundary;
  d.M_radius = M_radius ? *M_radius : 1.0 + max_vertex_norm(d);
  validate(d);
  return d;
}

enum class DomainKind { flat_bottom_rect, notched_polygon, custom };

using DomainParams = std::map<std::string, double>;

namespace detail {
inline double param(const DomainParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}
}  // namespace detail

/// Oscillating boundary x2 = |x1|^16 sin(1/|x1|) on [-half_width, half_width],
/// closed by a box of the given height. Violates the sign condition near 0.
inline DomainSpec oscillating_domain(int samples_per_side = 2000, double half_width = 0.6,
                                     double height = 0.8, double R0 = 0.5) {
  std::vector<Vec2> v;
  const auto curve = [](double x1) {
    const double a = std::abs(x1);
    return a == 0.0 ? 0.0 : std::pow(a, 16.0) * std::sin(1.0 / a);
  };
  for (int i = -samples_per_side; i <= samples_per_side; ++i) {
    const double x1 = half_width * static_cast<double>(i) / samples_per_side;
    v.push_back({x1, curve(x1)});
  }
  v.push_back({half_width, height});
  v.push_back({-half_width, height});
  return make_domain(std::move(v), R0);
}

/// Canonical domains with the origin at the midpoint of a flat bottom edge.
/// flat_bottom_rect: width, height, R0. notched_polygon additionally takes
/// notch_width and notch_depth (rectangular notch cut from the top edge).
/// custom: vertex list in params as x0,y0,x1,y1,... plus R0.
inline DomainSpec build_canonical_domain(DomainKind kind, const DomainParams& params) {
  const double R0 = detail::param(params, "R0", 0.4);
  switch (kind) {
    case DomainKind::flat_bottom_rect: {
      const double w = detail::param(params, "width", 1.0);
      const double h = detail::param(params, "height", 1.0);
      if (!(w > 0.0) || !(h > 0.0)) throw GeometryError("rectangle width and height must be positive");
      return make_domain({{-0.5 * w, 0.0}, {0.5 * w, 0.0}, {0.5 * w, h}, {-0.5 * w, h}}, R0,
                         {"bottom", "right", "top", "left"});
    }
    case DomainKind::notched_polygon: {
      const double w = detail::param(params, "width", 1.0);
      const double h = detail::param(params, "height", 1.0);
      const double nw = detail::param(params, "notch_width", 0.3 * w);
      const double nd = detail::param(params, "notch_depth", 0.3 * h);
      if (!(w > 0.0) || !(h > 0.0)) throw GeometryError("polygon width and height must be positive");
      if (!(nw > 0.0 && nw < w) || !(nd > 0.0 && nd < h))
        throw GeometryError("notch must fit strictly inside the rectangle");
      return make_domain({{-0.5 * w, 0.0},
                          {0.5 * w, 0.0},
                          {0.5 * w, h},
                          {0.5 * nw, h},
                          {0.5 * nw, h - nd},
                          {-0.5 * nw, h - nd},
                          {-0.5 * nw, h},
                          {-0.5 * w, h}},
                         R0,
                         {"bottom", "right", "top_right", "notch_right", "notch_bottom", "notch_left",
                          "top_left", "left"});
    }
    case DomainKind::custom: {
      std::vector<Vec2> v;
      for (int i = 0;; ++i) {
        const auto x = params.find("x" + std::to_string(i));
        const auto y = params.find("y" + std::to_string(i));
        if (x == params.end() || y == params.end()) break;
        v.push_back({x->second, y->second});
      }
      return make_domain(std::move(v), R0);
    }
  }
  throw GeometryError("unknown domain kind");
}

// ---------------------------------------------------------------------------
// Boundary classification

struct BoundaryClassification {
  std::vector<std::size_t> gamma_plus;
  std::vector<std::size_t> gamma_zero;
  std::vector<std::size_t> gamma_minus;
  std::vector<double> x_dot_nu;  // per edge, at the midpoint
  bool condition_holds = false;
  double sup_x_dot_nu = 0.0;
  double min_gamma_plus_x_dot_nu = 0.0;
  /// Gamma+ approaches x.nu = 0 somewhere (min over Gamma+ below 0.01).
  bool weak_observation_sign = false;
};

inline BoundaryClassification classify_boundary(const DomainSpec& d, double tol = kZeroClassTolerance) {
  if (!(tol > 0.0)) throw GeometryError("classification tolerance must be positive");
  validate(d);
  BoundaryClassification c;
  c.condition_holds = true;
  c.sup_x_dot_nu = -std::numeric_limits<double>::infinity();
  c.min_gamma_plus_x_dot_nu = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.segments.size(); ++i) {
    // x.nu is constant along a straight edge, so the midpoint value is exact.
    const double xn = dot(edge_midpoint(d, i), edge_normal(d, i));
    c.x_dot_nu.push_back(xn);
    c.sup_x_dot_nu = std::max(c.sup_x_dot_nu, xn);
    if (xn > tol) {
      c.gamma_plus.push_back(i);
      c.min_gamma_plus_x_dot_nu = std::min(c.min_gamma_plus_x_dot_nu, xn);
    } else if (xn < -tol) {
      c.gamma_minus.push_back(i);
    } else {
      c.gamma_zero.push_back(i);
    }
    const Vec2 a = d.vertices[d.segments[i].start];
    const Vec2 b = d.vertices[d.segments[i].end];
    const bool touches_ball = point_segment_distance({0.0, 0.0}, a, b) < d.R0;
    if (touches_ball && xn > tol) c.condition_holds = false;
  }
  if (c.gamma_plus.empty()) c.min_gamma_plus_x_dot_nu = 0.0;
  c.weak_observation_sign = !c.gamma_plus.empty() && c.min_gamma_plus_x_dot_nu < 0.01;
  return c;
}

inline std::vector<std::string> gamma_plus_tags(const DomainSpec& d, const BoundaryClassification& c) {
  std::vector<std::string> tags;
  for (std::size_t i : c.gamma_plus) tags.push_back(d.segments[i].tag);
  return tags;
}

// ---------------------------------------------------------------------------
// Truncation

struct TruncationSpec {
  double delta = 0.05;
  int arc_segments = 32;
};

/// Upper bound for admissible truncation radii.
inline double delta0(const DomainSpec& d) { return std::min({1.0, d.R0, d.M_radius}) / 16.0; }

/// Returns a polygon approximating Omega - B(0, delta): the part of the
/// boundary inside the ball is replaced by a regular polyline arc of
/// `arc_segments` edges tagged "arc". A domain that already avoids the
/// (polyline) ball is returned unchanged.
inline DomainSpec truncate_domain(const DomainSpec& d, const TruncationSpec& spec) {
  validate(d);
  if (spec.arc_segments < 8) throw GeometryError("arc_segments must be at least 8");
  if (!(spec.delta > 0.0) || !(spec.delta < delta0(d)))
    throw GeometryError("delta must lie in (0, delta0) with delta0 = " + std::to_string(delta0(d)));

  const double delta = spec.delta;
  const double polyline_radius = delta * std::cos(std::numbers::pi / spec.arc_segments);
  if (!d.contains_origin_on_boundary &&
      distance_to_boundary(d.vertices, {0.0, 0.0}) >= polyline_radius * (1.0 - 1e-12))
    return d;

  const std::size_t n = d.vertices.size();
  const auto inside = [&](Vec2 p) { return norm(p) < delta; };

  // Crossing of edge i with the circle: parameter in [0, 1] where |a + t(b - a)| = delta.
  const auto crossing = [&](std::size_t i, bool entering) {
    const Vec2 a = d.vertices[i];
    const Vec2 e = d.vertices[(i + 1) % n] - a;
    const double qa = dot(e, e);
    const double qb = 2.0 * dot(a, e);
    const double qc = dot(a, a) - delta * delta;
    const double disc = std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc));
    const double t = entering ? (-qb - disc) / (2.0 * qa) : (-qb + disc) / (2.0 * qa);
    return a + std::clamp(t, 0.0, 1.0) * e;
  };

  // Locate the single run of boundary inside the ball. Vertices exactly on
  // the circle count as outside.
  std::optional<std::size_t> enter_edge, exit_edge;
  int entries = 0, exits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = d.vertices[i];
    const Vec2 b = d.vertices[(i + 1) % n];
    const bool ia = inside(a), ib = inside(b);
    if (!ia && ib) {
      enter_edge = i;
      ++entries;
    } else if (ia && !ib) {
      exit_edge = i;
      ++exits;
    } else if (!ia && !ib && point_segment_distance({0.0, 0.0}, a, b) < delta) {
      // Edge dips through the ball without a vertex inside (e.g. the flat
      // edge through the origin).
      enter_edge = i;
      exit_edge = i;
      ++entries;
      ++exits;
    }
  }
  if (entries != 1 || exits != 1 || !enter_edge || !exit_edge)
    throw TopologyError("ball B(0, delta) does not meet the boundary in a single cap");

  const Vec2 p_in = crossing(*enter_edge, true);
  const Vec2 p_out = crossing(*exit_edge, false);
  const double th_in = std::atan2(p_in.y, p_in.x);
  const double th_out = std::atan2(p_out.y, p_out.x);
  double span = th_in - th_out;  // clockwise sweep through the interior
  while (span <= 0.0) span += 2.0 * std::numbers::pi;

  // Check the arc actually runs through the interior.
  const double mid_angle = th_in - 0.5 * span;
  if (!point_in_polygon(d.vertices, {delta * std::cos(mid_angle), delta * std::sin(mid_angle)}))
    throw TopologyError("truncation arc leaves the domain");

  std::vector<Vec2> verts;
  std::vector<std::string> tags;
  // Walk from the vertex after the exit edge around to the enter edge.
  std::size_t i = (*exit_edge + 1) % n;
  verts.push_back(p_out);
  tags.push_back(d.segments[*exit_edge].tag);
  for (;;) {
    const Vec2 v = d.vertices[i];
    if (norm(v - verts.back()) > 1e-14) {
      verts.push_back(v);
      tags.push_back(d.segments[i].tag);
    } else {
      tags.back() = d.segments[i].tag;
    }
    if (i == *enter_edge) break;
    i = (i + 1) % n;
  }
  if (norm(p_in - verts.back()) > 1e-14) {
    verts.push_back(p_in);
    tags.push_back("arc");
  } else {
    tags.back() = "arc";
  }
  for (int k = 1; k < spec.arc_segments; ++k) {
    const double th = th_in - span * static_cast<double>(k) / spec.arc_segments;
    verts.push_back({delta * std::cos(th), delta * std::sin(th)});
    tags.push_back("arc");
  }
  // Last arc edge closes onto p_out (verts[0]).

  DomainSpec out;
  out.vertices = std::move(verts);
  out.segments = detail::default_segments(out.vertices.size(), tags);
  out.R0 = d.R0;
  out.M_radius = d.M_radius;
  out.contains_origin_on_boundary = false;
  validate(out);
  return out;
}

/// FNV-1a over the vertex coordinates, segment tags and R0; identifies the
/// domain in report metadata.
inline std::uint64_t domain_hash(const DomainSpec& d) {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Vec2& v : d.vertices) {
    mix(&v.x, sizeof v.x);
    mix(&v.y, sizeof v.y);
  }
  for (const Segment& s : d.segments) mix(s.tag.data(), s.tag.size());
  mix(&d.R0, sizeof d.R0);
  return h;
}

}  // namespace degenlab
