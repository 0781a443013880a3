#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "curvmf/mesh.hpp"

namespace curvmf {

using Field = Eigen::VectorXd;

/// Linear P1 quantities on an intrinsic mesh. Boundary fields are indexed by
/// position in boundary_vertices (loops concatenated in order).
struct OperatorSet {
  Eigen::SparseMatrix<double> stiffness;
  Field vertex_areas;
  std::vector<int> boundary_vertices;
  /// boundary_index[v] is the slot of v in boundary_vertices, or -1.
  std::vector<int> boundary_index;
  Field boundary_weights;
  double total_area = 0.0;
  double total_boundary = 0.0;
  /// Faces whose smallest angle is below degenerate_angle.
  std::vector<int> degenerate_faces;

  static constexpr double degenerate_angle = 1e-3;

  int vertex_count() const { return static_cast<int>(vertex_areas.size()); }
  int boundary_count() const { return static_cast<int>(boundary_vertices.size()); }

  /// Restriction of a vertex field to the boundary slots.
  Field restrict_to_boundary(const Field& f) const;
};

OperatorSet assemble_operators(const IntrinsicMesh& mesh);

/// u^T S u, i.e. the integral of |grad u|^2 (no factor 1/2).
double dirichlet_energy(const OperatorSet& ops, const Field& u);
double integrate_interior(const OperatorSet& ops, const Field& f);
double integrate_boundary(const OperatorSet& ops, const Field& f);

int euler_characteristic(const IntrinsicMesh& mesh);

/// Corner angle at corner c of face f, from edge lengths.
double corner_angle(const IntrinsicMesh& mesh, int f, int c);
double triangle_area(double a, double b, double c);

struct BackgroundReport {
  int chi = 0;
  double interior_defect = 0.0;  // sum of 2pi - angle sum at interior vertices
  double boundary_defect = 0.0;  // sum of pi - angle sum at boundary vertices
  double residual = 0.0;         // |interior + boundary - 2 pi chi|
  std::vector<double> vertex_defect;
};

BackgroundReport background_check(const IntrinsicMesh& mesh);

/// Coordinate list with header row,col,value.
void write_coo_csv(const Eigen::SparseMatrix<double>& m, std::ostream& out);

}  // namespace curvmf
