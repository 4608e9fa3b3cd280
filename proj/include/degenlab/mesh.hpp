#pragma once
// Conforming P1 triangulations of DomainSpec polygons, graded toward the
// degeneracy point, and submeshes realizing truncated domains.
//
// Nodes are laid out on concentric rings centred at the origin. Ring spacing
// and in-ring spacing both follow the size function
//   s(r) = 0.55 h * clamp((r / l)^(g - 1), 1/32, 1)
// with l the grading length (R0 by default) and g the grading exponent, so
// ring layers double as the admissible truncation radii of the submesh. The
// 0.55 factor keeps Delaunay element diameters below h.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "delaunay.hpp"
#include "geometry.hpp"

namespace degenlab {

struct BoundaryEdge {
  std::array<int, 2> nodes{};  // ordered so the domain lies to the left
  Vec2 normal;                 // outward unit normal
  std::string tag;
  int triangle = -1;           // the adjacent triangle
};

struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<char> dirichlet_mask;          // 1 on the boundary
  std::vector<BoundaryEdge> boundary_edges;
  std::optional<std::vector<int>> parent_map;  // node index in the parent mesh
  std::vector<double> ring_radii;              // graded layers around the origin
  double min_origin_distance = 0.0;
  double snapped_delta = 0.0;  // truncation radius for submeshes, else 0

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_triangles() const { return triangles.size(); }
};

struct MeshOptions {
  double h = 0.1;
  double grading_exponent = 1.0;
  std::optional<double> grading_length;  // defaults to the domain's R0
  std::uint32_t jitter_seed = 12345;
};

inline double triangle_area(const Mesh& m, std::size_t t) {
  const auto& v = m.triangles[t];
  return 0.5 * cross(m.nodes[v[1]] - m.nodes[v[0]], m.nodes[v[2]] - m.nodes[v[0]]);
}

inline double mesh_area(const Mesh& m) {
  double a = 0.0;
  for (std::size_t t = 0; t < m.triangles.size(); ++t) a += triangle_area(m, t);
  return a;
}

inline double max_element_diameter(const Mesh& m, double away_from_origin = 0.0) {
  double d = 0.0;
  for (const auto& v : m.triangles) {
    const Vec2 a = m.nodes[v[0]], b = m.nodes[v[1]], c = m.nodes[v[2]];
    if (std::min({norm(a), norm(b), norm(c)}) < away_from_origin) continue;
    d = std::max({d, norm(b - a), norm(c - b), norm(a - c)});
  }
  return d;
}

inline constexpr double kNodeSpacingFactor = 0.55;

namespace detail {

struct SizeField {
  double h;
  double exponent;
  double length;
  double floor_ratio = 1.0 / 32.0;

  double operator()(double r) const {
    if (exponent == 1.0) return h;
    const double ratio = std::pow(r / length, exponent - 1.0);
    return h * std::clamp(ratio, floor_ratio, 1.0);
  }
};

inline std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (hi << 32) | lo;
}

/// Angular intervals (counter-clockwise, start < end) where the circle of
/// radius r lies inside the polygon.
inline std::vector<std::pair<double, double>> circle_inside_intervals(const std::vector<Vec2>& poly,
                                                                      double r) {
  std::vector<double> angles;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 e = poly[(i + 1) % n] - a;
    const double qa = dot(e, e), qb = 2.0 * dot(a, e), qc = dot(a, a) - r * r;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    for (double t : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
      if (t < -1e-14 || t > 1.0 + 1e-14) continue;
      const Vec2 p = a + t * e;
      double th = std::atan2(p.y, p.x);
      if (th < 0.0) th += 2.0 * std::numbers::pi;
      angles.push_back(th);
    }
  }
  std::sort(angles.begin(), angles.end());
  std::vector<double> uniq;
  for (double a : angles)
    if (uniq.empty() || a - uniq.back() > 1e-12) uniq.push_back(a);
  std::vector<std::pair<double, double>> out;
  if (uniq.empty()) {
    if (point_in_polygon(poly, {r, 0.0})) out.push_back({0.0, 2.0 * std::numbers::pi});
    return out;
  }
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    const double a = uniq[i];
    double b = i + 1 < uniq.size() ? uniq[i + 1] : uniq[0] + 2.0 * std::numbers::pi;
    const double mid = 0.5 * (a + b);
    if (point_in_polygon(poly, {r * std::cos(mid), r * std::sin(mid)})) out.push_back({a, b});
  }
  return out;
}

}  // namespace detail

/// Builds a conforming triangulation with graded rings around the origin.
/// Throws MeshError when the origin is a polygon vertex (a node would sit on
/// the degeneracy point) or when boundary recovery fails.
inline Mesh generate_mesh(const DomainSpec& domain, const MeshOptions& opt) {
  validate(domain);
  if (!(opt.h > 0.0)) throw MeshError("mesh size h must be positive");
  if (!(opt.grading_exponent >= 1.0)) throw MeshError("grading exponent must be >= 1");
  for (const Vec2& v : domain.vertices)
    if (norm(v) < 1e-12) throw MeshError("origin is a polygon vertex; no node may sit at the degeneracy point");

  const detail::SizeField size{kNodeSpacingFactor * opt.h, opt.grading_exponent, opt.grading_length.value_or(domain.R0)};
  const auto& poly = domain.vertices;
  const std::size_t nv = poly.size();
  const double rmax = max_vertex_norm(domain);

  // Ring radii: first ring at half the smallest spacing.
  std::vector<double> rings;
  for (double r = 0.5 * size(0.0);;) {
    if (r > rmax) break;
    rings.push_back(r);
    r += size(r + 0.5 * size(r));
  }

  // Boundary nodes per polygon edge.
  std::vector<Vec2> bnodes;
  struct BSeg {
    int a, b;
    std::size_t edge;
  };
  std::vector<BSeg> bsegs;
  std::vector<int> vertex_node(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    vertex_node[i] = static_cast<int>(bnodes.size());
    bnodes.push_back(poly[i]);
  }
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % nv];
    const Vec2 e = b - a;
    const double len = norm(e);
    std::vector<double> params;
    const bool radial = std::abs(cross(e, a)) / len < 1e-12;
    if (radial) {
      // Edge on a line through the origin: nodes at the ring radii keep the
      // ring layers aligned with the boundary.
      const double t0 = -dot(a, e) / (len * len);  // parameter of the origin
      for (double r : rings)
        for (double t : {t0 - r / len, t0 + r / len})
          if (t > 0.0 && t < 1.0) params.push_back(t);
      std::sort(params.begin(), params.end());
      // Drop ring nodes that crowd the edge end points.
      std::vector<double> kept;
      for (double t : params) {
        const Vec2 p = a + t * e;
        const double s = size(norm(p));
        if (norm(p - a) < 0.5 * s || norm(p - b) < 0.5 * s) continue;
        kept.push_back(t);
      }
      params = std::move(kept);
    } else {
      // Equidistribute the size metric along the edge.
      const int fine = 2048;
      std::vector<double> cum(fine + 1, 0.0);
      for (int k = 0; k < fine; ++k) {
        const Vec2 p = a + ((k + 0.5) / fine) * e;
        cum[k + 1] = cum[k] + (len / fine) / size(norm(p));
      }
      const int count = std::max(1, static_cast<int>(std::lround(cum[fine])));
      for (int j = 1; j < count; ++j) {
        const double target = cum[fine] * j / count;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const int k = static_cast<int>(it - cum.begin());
        const double frac = (target - cum[k - 1]) / (cum[k] - cum[k - 1]);
        params.push_back((k - 1 + frac) / fine);
      }
    }
    int prev = vertex_node[i];
    for (double t : params) {
      const int id = static_cast<int>(bnodes.size());
      bnodes.push_back(a + t * e);
      bsegs.push_back({prev, id, i});
      prev = id;
    }
    bsegs.push_back({prev, vertex_node[(i + 1) % nv], i});
  }

  // Interior ring nodes, filtered so every boundary subsegment stays a
  // Gabriel edge (hence a Delaunay edge).
  std::mt19937 rng(opt.jitter_seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::vector<Vec2> inodes;
  const auto blocked = [&](Vec2 p, double s) {
    if (distance_to_boundary(poly, p) < 0.45 * s) return true;
    for (const BSeg& bs : bsegs) {
      const Vec2 m = 0.5 * (bnodes[bs.a] + bnodes[bs.b]);
      const double rad = 0.5 * norm(bnodes[bs.b] - bnodes[bs.a]);
      if (norm(p - m) < 1.1 * rad) return true;
    }
    return false;
  };
  for (double r : rings) {
    const double s = size(r);
    for (const auto& [t0, t1] : detail::circle_inside_intervals(poly, r)) {
      const double arc = r * (t1 - t0);
      const int segs = std::max(1, static_cast<int>(std::lround(arc / s)));
      const bool full_circle = t1 - t0 >= 2.0 * std::numbers::pi - 1e-12;
      std::vector<double> fractions;
      if (full_circle) {
        for (int k = 0; k < segs; ++k) fractions.push_back(k + jitter(rng));
      } else if (segs == 1) {
        fractions.push_back(0.5);  // a single arc segment still gets its midpoint
      } else {
        for (int k = 1; k < segs; ++k) fractions.push_back(k + jitter(rng));
      }
      for (double f : fractions) {
        const double th = t0 + (t1 - t0) * f / std::max(segs, 1);
        const Vec2 p{r * std::cos(th), r * std::sin(th)};
        if (!point_in_polygon(poly, p) || blocked(p, s)) continue;
        inodes.push_back(p);
      }
    }
  }

  Mesh mesh;
  mesh.nodes = bnodes;
  mesh.nodes.insert(mesh.nodes.end(), inodes.begin(), inodes.end());
  mesh.ring_radii = rings;

  // Insert in order of distance from the origin for short point-location walks.
  std::vector<int> order(mesh.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norm(mesh.nodes[a]) < norm(mesh.nodes[b]); });
  std::vector<Vec2> sorted(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = mesh.nodes[order[i]];
  const auto raw = delaunay_triangulate(sorted);

  for (const auto& t : raw) {
    const std::array<int, 3> v{order[t[0]], order[t[1]], order[t[2]]};
    const Vec2 c = (1.0 / 3.0) * (mesh.nodes[v[0]] + mesh.nodes[v[1]] + mesh.nodes[v[2]]);
    if (!point_in_polygon(poly, c)) continue;
    mesh.triangles.push_back(v);
  }

  // Edge incidence; every boundary subsegment must appear exactly once.
  std::map<std::uint64_t, std::vector<int>> edge_tris;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (triangle_area(mesh, t) <= 0.0) throw MeshError("non-positive triangle area");
    const auto& v = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) edge_tris[detail::edge_key(v[k], v[(k + 1) % 3])].push_back(static_cast<int>(t));
  }
  std::set<std::uint64_t> boundary_keys;
  mesh.dirichlet_mask.assign(mesh.nodes.size(), 0);
  for (const BSeg& bs : bsegs) {
    const auto key = detail::edge_key(bs.a, bs.b);
    const auto it = edge_tris.find(key);
    if (it == edge_tris.end() || it->second.size() != 1)
      throw MeshError("boundary recovery failed on polygon edge " + std::to_string(bs.edge));
    boundary_keys.insert(key);
    mesh.boundary_edges.push_back(
        {{bs.a, bs.b}, edge_normal(domain, bs.edge), domain.segments[bs.edge].tag, it->second.front()});
    mesh.dirichlet_mask[bs.a] = 1;
    mesh.dirichlet_mask[bs.b] = 1;
  }
  for (const auto& [key, tris] : edge_tris) {
    if (tris.size() == 2) continue;
    if (tris.size() == 1 && boundary_keys.count(key)) continue;
    throw MeshError("triangulation is not conforming");
  }

  mesh.min_origin_distance = std::numeric_limits<double>::infinity();
  for (const Vec2& p : mesh.nodes) mesh.min_origin_distance = std::min(mesh.min_origin_distance, norm(p));
  if (mesh.min_origin_distance <= 0.0) throw MeshError("a node coincides with the origin");
  return mesh;
}

/// Ring radius nearest to delta.
inline double snap_delta(const Mesh& mesh, double delta) {
  if (mesh.ring_radii.empty()) throw MeshError("mesh carries no ring layers");
  double best = mesh.ring_radii.front();
  for (double r : mesh.ring_radii)
    if (std::abs(r - delta) < std::abs(best - delta)) best = r;
  return best;
}

/// Submesh realizing Omega_delta: triangles with every node at |x| >= r,
/// r the ring layer nearest delta. Node coordinates are copied bitwise and
/// parent_map records the injection into the parent.
inline Mesh make_submesh(const Mesh& parent, double delta) {
  if (!(delta > 0.0)) throw MeshError("truncation radius must be positive");
  const double r = snap_delta(parent, delta);
  const double cut = r * (1.0 - 1e-9);
  const double on_ring = r * (1.0 + 1e-9);

  std::vector<char> keep_tri(parent.triangles.size(), 0);
  std::size_t removed = 0;
  for (std::size_t t = 0; t < parent.triangles.size(); ++t) {
    const auto& v = parent.triangles[t];
    keep_tri[t] = norm(parent.nodes[v[0]]) >= cut && norm(parent.nodes[v[1]]) >= cut &&
                  norm(parent.nodes[v[2]]) >= cut;
    removed += !keep_tri[t];
  }
  if (removed == 0)
    throw MeshError("truncation radius lies inside the innermost mesh layer; no triangles removed");

  std::vector<int> local(parent.nodes.size(), -1);
  Mesh sub;
  sub.ring_radii = parent.ring_radii;
  sub.snapped_delta = r;
  std::vector<int> pmap;
  for (std::size_t t = 0; t < parent.triangles.size(); ++t) {
    if (!keep_tri[t]) continue;
    std::array<int, 3> v{};
    for (int k = 0; k < 3; ++k) {
      const int p = parent.triangles[t][k];
      if (local[p] < 0) {
        local[p] = static_cast<int>(sub.nodes.size());
        sub.nodes.push_back(parent.nodes[p]);
        pmap.push_back(p);
      }
      v[k] = local[p];
    }
    sub.triangles.push_back(v);
  }

  // Nodes shared with removed triangles must sit on the cut ring, so removed
  // triangles only touch Dirichlet nodes of the submesh.
  for (std::size_t t = 0; t < parent.triangles.size(); ++t) {
    if (keep_tri[t]) continue;
    for (int p : parent.triangles[t])
      if (local[p] >= 0 && norm(parent.nodes[p]) > on_ring)
        throw MeshError("truncation layer is not a clean ring cut of the mesh");
  }

  std::map<std::uint64_t, std::vector<int>> edge_tris;
  for (std::size_t t = 0; t < sub.triangles.size(); ++t) {
    const auto& v = sub.triangles[t];
    for (int k = 0; k < 3; ++k) edge_tris[detail::edge_key(v[k], v[(k + 1) % 3])].push_back(static_cast<int>(t));
  }
  std::map<std::uint64_t, const BoundaryEdge*> parent_boundary;
  for (const BoundaryEdge& be : parent.boundary_edges)
    parent_boundary[detail::edge_key(be.nodes[0], be.nodes[1])] = &be;

  sub.dirichlet_mask.assign(sub.nodes.size(), 0);
  for (std::size_t t = 0; t < sub.triangles.size(); ++t) {
    const auto& v = sub.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = v[k], b = v[(k + 1) % 3];
      if (edge_tris[detail::edge_key(a, b)].size() != 1) continue;
      const auto pit = parent_boundary.find(detail::edge_key(pmap[a], pmap[b]));
      BoundaryEdge be;
      be.nodes = {a, b};
      be.triangle = static_cast<int>(t);
      if (pit != parent_boundary.end()) {
        be.normal = pit->second->normal;
        be.tag = pit->second->tag;
      } else {
        if (norm(sub.nodes[a]) > on_ring || norm(sub.nodes[b]) > on_ring)
          throw MeshError("cut boundary leaves the truncation ring");
        const Vec2 e = sub.nodes[b] - sub.nodes[a];
        const double len = norm(e);
        be.normal = {e.y / len, -e.x / len};
        be.tag = "arc";
      }
      sub.boundary_edges.push_back(be);
      sub.dirichlet_mask[a] = 1;
      sub.dirichlet_mask[b] = 1;
    }
  }
  sub.parent_map = std::move(pmap);
  sub.min_origin_distance = std::numeric_limits<double>::infinity();
  for (const Vec2& p : sub.nodes) sub.min_origin_distance = std::min(sub.min_origin_distance, norm(p));
  return sub;
}

}  // namespace degenlab
