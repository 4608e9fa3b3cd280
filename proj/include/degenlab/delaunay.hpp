#pragma once
// Incremental Bowyer-Watson Delaunay triangulation of a planar point set.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "geometry.hpp"

namespace degenlab {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline long double orient2d(Vec2 a, Vec2 b, Vec2 c) {
  return (static_cast<long double>(b.x) - a.x) * (static_cast<long double>(c.y) - a.y) -
         (static_cast<long double>(b.y) - a.y) * (static_cast<long double>(c.x) - a.x);
}

/// Positive iff d lies strictly inside the circumcircle of the
/// counter-clockwise triangle (a, b, c).
inline long double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const long double adx = static_cast<long double>(a.x) - d.x, ady = static_cast<long double>(a.y) - d.y;
  const long double bdx = static_cast<long double>(b.x) - d.x, bdy = static_cast<long double>(b.y) - d.y;
  const long double cdx = static_cast<long double>(c.x) - d.x, cdy = static_cast<long double>(c.y) - d.y;
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

}  // namespace detail

/// Counter-clockwise triangles over the input points (indices into `points`).
/// Insertion order is the input order; callers pass spatially coherent
/// orderings so the walking point location stays short.
inline std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Vec2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw MeshError("Delaunay triangulation needs at least 3 points");

  double xmin = points[0].x, xmax = xmin, ymin = points[0].y, ymax = ymin;
  for (const Vec2& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double span = std::max(xmax - xmin, ymax - ymin);
  const Vec2 c{0.5 * (xmin + xmax), 0.5 * (ymin + ymax)};
  std::vector<Vec2> pts = points;
  pts.push_back({c.x - 40.0 * span, c.y - 30.0 * span});
  pts.push_back({c.x + 40.0 * span, c.y - 30.0 * span});
  pts.push_back({c.x, c.y + 40.0 * span});

  std::vector<std::array<int, 3>> tri{{n, n + 1, n + 2}};
  std::vector<std::array<int, 3>> nbr{{-1, -1, -1}};  // nbr[t][i] is opposite vertex i
  std::vector<char> alive{1};
  std::vector<int> mark{-1};
  std::vector<int> cavity, stack, fresh;
  struct BoundaryEdge {
    int a, b, outer;
  };
  std::vector<BoundaryEdge> boundary;
  std::unordered_map<int, int> by_start, by_end;
  int last = 0;

  for (int p = 0; p < n; ++p) {
    const Vec2 q = pts[p];
    // Walk to the triangle containing q.
    int t = last;
    if (!alive[t]) {
      for (t = static_cast<int>(tri.size()) - 1; t >= 0 && !alive[t]; --t) {
      }
    }
    for (int steps = 0;; ++steps) {
      if (steps > 4 * static_cast<int>(tri.size()) + 16) throw MeshError("point location failed");
      bool moved = false;
      for (int k = 0; k < 3; ++k) {
        const int e = (k + steps) % 3;
        const Vec2 a = pts[tri[t][(e + 1) % 3]];
        const Vec2 b = pts[tri[t][(e + 2) % 3]];
        if (detail::orient2d(a, b, q) < 0.0L && nbr[t][e] >= 0) {
          t = nbr[t][e];
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }

    // Grow the cavity over the connected set of triangles whose circumcircle holds q.
    cavity.clear();
    stack.assign(1, t);
    mark[t] = p;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      cavity.push_back(u);
      for (int e = 0; e < 3; ++e) {
        const int v = nbr[u][e];
        if (v < 0 || mark[v] == p) continue;
        const auto& tv = tri[v];
        if (detail::incircle(pts[tv[0]], pts[tv[1]], pts[tv[2]], q) > 0.0L) {
          mark[v] = p;
          stack.push_back(v);
        }
      }
    }

    boundary.clear();
    for (int u : cavity) {
      for (int e = 0; e < 3; ++e) {
        const int v = nbr[u][e];
        if (v >= 0 && mark[v] == p && alive[v]) continue;
        boundary.push_back({tri[u][(e + 1) % 3], tri[u][(e + 2) % 3], v});
      }
    }
    for (int u : cavity) alive[u] = 0;

    fresh.clear();
    by_start.clear();
    by_end.clear();
    for (const BoundaryEdge& be : boundary) {
      if (detail::orient2d(pts[be.a], pts[be.b], q) <= 0.0L)
        throw MeshError("Delaunay cavity is not star-shaped (degenerate input)");
      const int id = static_cast<int>(tri.size());
      tri.push_back({be.a, be.b, p});
      nbr.push_back({-1, -1, be.outer});
      alive.push_back(1);
      mark.push_back(-1);
      if (be.outer >= 0) {
        for (int e = 0; e < 3; ++e) {
          const auto& to = tri[be.outer];
          if (to[(e + 1) % 3] == be.b && to[(e + 2) % 3] == be.a) nbr[be.outer][e] = id;
        }
      }
      by_start[be.a] = id;
      by_end[be.b] = id;
      fresh.push_back(id);
    }
    for (int id : fresh) {
      const int a = tri[id][0], b = tri[id][1];
      // Edge (b, p) is opposite vertex a; its twin is the fresh triangle starting at b.
      nbr[id][0] = by_start.at(b);
      // Edge (p, a) is opposite vertex b; its twin is the fresh triangle ending at a.
      nbr[id][1] = by_end.at(a);
    }
    last = fresh.back();
  }

  std::vector<std::array<int, 3>> out;
  for (std::size_t t = 0; t < tri.size(); ++t) {
    if (!alive[t]) continue;
    const auto& v = tri[t];
    if (v[0] >= n || v[1] >= n || v[2] >= n) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace degenlab
