#include "curvmf/operators.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

namespace curvmf {

double triangle_area(double a, double b, double c) {
  // Kahan's ordering for Heron's formula
  if (a < b) std::swap(a, b);
  if (a < c) std::swap(a, c);
  if (b < c) std::swap(b, c);
  const double p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
  return 0.25 * std::sqrt(std::max(p, 0.0));
}

double corner_angle(const IntrinsicMesh& mesh, int f, int c) {
  const double a = mesh.opposite_length(f, c);
  const double b = mesh.opposite_length(f, (c + 1) % 3);
  const double d = mesh.opposite_length(f, (c + 2) % 3);
  const double area = triangle_area(a, b, d);
  return std::atan2(4.0 * area, b * b + d * d - a * a);
}

Field OperatorSet::restrict_to_boundary(const Field& f) const {
  Field out(boundary_count());
  for (int i = 0; i < boundary_count(); ++i) out[i] = f[boundary_vertices[i]];
  return out;
}

OperatorSet assemble_operators(const IntrinsicMesh& mesh) {
  const int nv = mesh.vertex_count;
  OperatorSet ops;
  ops.vertex_areas = Field::Zero(nv);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);

  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.triangles[f];
    const double l0 = mesh.opposite_length(f, 0), l1 = mesh.opposite_length(f, 1), l2 = mesh.opposite_length(f, 2);
    const double area = triangle_area(l0, l1, l2);
    const std::array<double, 3> len{l0, l1, l2};
    double min_angle = std::numbers::pi;
    for (int c = 0; c < 3; ++c) {
      ops.vertex_areas[t[c]] += area / 3.0;
      const double a = len[c], b = len[(c + 1) % 3], d = len[(c + 2) % 3];
      const double num = b * b + d * d - a * a;
      min_angle = std::min(min_angle, std::atan2(4.0 * area, num));
      // half cotangent of the angle at corner c, attached to the opposite edge
      const double w = 0.5 * num / (4.0 * area);
      const int i = t[(c + 1) % 3], j = t[(c + 2) % 3];
      trips.emplace_back(i, j, -w);
      trips.emplace_back(j, i, -w);
      trips.emplace_back(i, i, w);
      trips.emplace_back(j, j, w);
    }
    if (min_angle < OperatorSet::degenerate_angle) ops.degenerate_faces.push_back(f);
  }
  ops.stiffness.resize(nv, nv);
  ops.stiffness.setFromTriplets(trips.begin(), trips.end());
  ops.stiffness.makeCompressed();

  ops.boundary_index.assign(nv, -1);
  for (const auto& loop : mesh.boundary_loops) {
    for (int v : loop) {
      ops.boundary_index[v] = static_cast<int>(ops.boundary_vertices.size());
      ops.boundary_vertices.push_back(v);
    }
  }
  ops.boundary_weights = Field::Zero(ops.boundary_count());
  for (const auto& loop : mesh.boundary_loops) {
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int a = loop[i], b = loop[(i + 1) % n];
      std::array<int, 2> key{std::min(a, b), std::max(a, b)};
      auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
      const double l = mesh.edge_lengths[it - mesh.edges.begin()];
      ops.boundary_weights[ops.boundary_index[a]] += 0.5 * l;
      ops.boundary_weights[ops.boundary_index[b]] += 0.5 * l;
    }
  }
  ops.total_area = integrate_interior(ops, Field::Ones(nv));
  ops.total_boundary = integrate_boundary(ops, Field::Ones(ops.boundary_count()));
  return ops;
}

double dirichlet_energy(const OperatorSet& ops, const Field& u) {
  if (u.size() != ops.vertex_count()) throw std::invalid_argument("dirichlet_energy: dimension mismatch");
  return u.dot(ops.stiffness * u);
}

double integrate_interior(const OperatorSet& ops, const Field& f) {
  if (f.size() != ops.vertex_areas.size()) throw std::invalid_argument("integrate_interior: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) s += f[i] * ops.vertex_areas[i];
  return s;
}

double integrate_boundary(const OperatorSet& ops, const Field& f) {
  if (f.size() != ops.boundary_weights.size()) throw std::invalid_argument("integrate_boundary: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) s += f[i] * ops.boundary_weights[i];
  return s;
}

int euler_characteristic(const IntrinsicMesh& mesh) { return mesh.euler_characteristic(); }

BackgroundReport background_check(const IntrinsicMesh& mesh) {
  BackgroundReport r;
  r.chi = mesh.euler_characteristic();
  std::vector<double> angle_sum(mesh.vertex_count, 0.0);
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) angle_sum[mesh.triangles[f][c]] += corner_angle(mesh, f, c);
  }
  std::vector<char> on_boundary(mesh.vertex_count, 0);
  for (const auto& loop : mesh.boundary_loops) {
    for (int v : loop) on_boundary[v] = 1;
  }
  r.vertex_defect.resize(mesh.vertex_count);
  for (int v = 0; v < mesh.vertex_count; ++v) {
    const double full = on_boundary[v] ? std::numbers::pi : 2.0 * std::numbers::pi;
    r.vertex_defect[v] = full - angle_sum[v];
    (on_boundary[v] ? r.boundary_defect : r.interior_defect) += r.vertex_defect[v];
  }
  r.residual = std::abs(r.interior_defect + r.boundary_defect - 2.0 * std::numbers::pi * r.chi);
  return r;
}

void write_coo_csv(const Eigen::SparseMatrix<double>& m, std::ostream& out) {
  out << "row,col,value\n" << std::setprecision(17);
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      out << it.row() << ',' << it.col() << ',' << it.value() << '\n';
    }
  }
}

}  // namespace curvmf
