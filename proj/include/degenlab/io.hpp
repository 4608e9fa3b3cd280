#pragma once
// Text serialization: CSV tables, JSON documents for domains and meshes, and
// coordinate-format matrix dumps. All floating-point text uses 17
// significant digits so values round-trip exactly.

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "assembly.hpp"
#include "geometry.hpp"
#include "mesh.hpp"
#include "spectral.hpp"

namespace degenlab {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using CsvCell = std::variant<double, long long, std::string>;

inline std::string csv_cell(const CsvCell& c) {
  if (const double* d = std::get_if<double>(&c)) return format_double(*d);
  if (const long long* i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

/// Comma-delimited, LF line endings, header first.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<CsvCell>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw IoError("CSV row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
    out << '\n';
  }
}

inline void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Domains

inline json domain_to_json(const DomainSpec& d) {
  json verts = json::array();
  for (const Vec2& v : d.vertices) verts.push_back({v.x, v.y});
  json tags = json::array();
  for (const Segment& s : d.segments) tags.push_back(s.tag);
  return {{"vertices", verts},
          {"tags", tags},
          {"R0", d.R0},
          {"M_radius", d.M_radius},
          {"contains_origin_on_boundary", d.contains_origin_on_boundary}};
}

inline DomainSpec domain_from_json(const json& j) {
  if (!j.is_object() || !j.contains("vertices")) throw IoError("domain document needs a 'vertices' array");
  std::vector<Vec2> verts;
  for (const json& v : j.at("vertices")) {
    if (!v.is_array() || v.size() != 2) throw IoError("domain vertices must be [x, y] pairs");
    verts.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  std::vector<std::string> tags;
  if (j.contains("tags")) tags = j.at("tags").get<std::vector<std::string>>();
  if (!j.contains("R0")) throw IoError("domain document needs 'R0'");
  std::optional<double> M;
  if (j.contains("M_radius")) M = j.at("M_radius").get<double>();
  return make_domain(std::move(verts), j.at("R0").get<double>(), tags, M,
                     j.value("contains_origin_on_boundary", true));
}

// ---------------------------------------------------------------------------
// Meshes and matrices

inline json mesh_to_json(const Mesh& m) {
  json nodes = json::array(), tris = json::array(), edges = json::array(), tags = json::array();
  for (const Vec2& p : m.nodes) nodes.push_back({p.x, p.y});
  for (const auto& t : m.triangles) tris.push_back({t[0], t[1], t[2]});
  for (const BoundaryEdge& e : m.boundary_edges) {
    edges.push_back({e.nodes[0], e.nodes[1]});
    tags.push_back(e.tag);
  }
  return {{"nodes", nodes}, {"triangles", tris}, {"boundary_edges", edges}, {"tags", tags}};
}

/// One "row,col,value" line per stored entry, zero-based, column-major order.
inline void write_coo(const std::filesystem::path& path, const SparseMatrix& A) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "row,col,value\n";
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      out << it.row() << ',' << it.col() << ',' << format_double(it.value()) << '\n';
}

inline void write_spectrum_csv(const std::filesystem::path& path, const SpectralBasis& b) {
  std::vector<std::vector<CsvCell>> rows;
  for (int n = 0; n < b.m(); ++n) rows.push_back({static_cast<long long>(n + 1), b.lambdas[n], b.residuals[n]});
  write_csv(path, {"n", "lambda", "residual"}, rows);
}

}  // namespace degenlab
