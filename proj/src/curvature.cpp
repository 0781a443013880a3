#include "curvmf/curvature.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace curvmf {

Field constant_field(const IntrinsicMesh& mesh, double c) { return Field::Constant(mesh.vertex_count, c); }

Field azimuthal_cosine_field(const IntrinsicMesh& mesh, double a, double b, int m) {
  if (mesh.azimuth.empty()) throw std::invalid_argument("azimuthal_cosine needs a surface of revolution");
  Field f(mesh.vertex_count);
  for (int v = 0; v < mesh.vertex_count; ++v) f[v] = a + b * std::cos(m * mesh.azimuth[v]);
  return f;
}

Field cap_bump_field(const IntrinsicMesh& mesh, int center_vertex, double radius, double height) {
  if (center_vertex < 0 || center_vertex >= mesh.vertex_count) throw std::invalid_argument("cap_bump center out of range");
  if (!(radius > 0)) throw std::invalid_argument("cap_bump radius must be positive");
  const int src[1] = {center_vertex};
  const std::vector<double> d = edge_distance(mesh, src);
  Field f = Field::Zero(mesh.vertex_count);
  for (int v = 0; v < mesh.vertex_count; ++v) {
    const double s = d[v] / radius;
    if (s < 1.0) f[v] = height * (1.0 - s * s) * (1.0 - s * s);
  }
  return f;
}

Field read_vertex_csv(std::istream& in, int vertex_count) {
  Field f = Field::Constant(vertex_count, std::nan(""));
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_s, val_s;
    if (!std::getline(ls, id_s, ',') || !std::getline(ls, val_s)) {
      throw std::invalid_argument("malformed CSV row " + std::to_string(row));
    }
    std::size_t used = 0;
    long id;
    double value;
    try {
      id = std::stol(id_s, &used);
      value = std::stod(val_s);
    } catch (const std::exception&) {
      if (row == 1) continue;  // header
      throw std::invalid_argument("malformed CSV row " + std::to_string(row));
    }
    if (id < 0 || id >= vertex_count) throw std::invalid_argument("vertex id out of range in row " + std::to_string(row));
    if (!std::isnan(f[id])) throw std::invalid_argument("duplicate vertex id " + std::to_string(id));
    f[id] = value;
  }
  for (int v = 0; v < vertex_count; ++v) {
    if (std::isnan(f[v])) throw std::invalid_argument("missing value for vertex " + std::to_string(v));
  }
  return f;
}

}  // namespace curvmf
