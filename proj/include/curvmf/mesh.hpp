#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvmf {

class MeshError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Triangulated surface with boundary described purely by its connectivity and
/// edge lengths. Positions, when present, are only used for export and for
/// evaluating coordinate-based curvature families.
struct IntrinsicMesh {
  std::string name;
  int vertex_count = 0;
  std::vector<std::array<int, 3>> triangles;
  /// Unique undirected edges, stored with v0 < v1.
  std::vector<std::array<int, 2>> edges;
  std::vector<double> edge_lengths;
  /// face_edges[f][c] is the edge opposite corner c of triangle f.
  std::vector<std::array<int, 3>> face_edges;
  /// Closed boundary cycles, ordered along the induced orientation.
  std::vector<std::vector<int>> boundary_loops;
  /// Optional 3D positions (hemisphere and cylinder only).
  std::vector<std::array<double, 3>> embedding;
  /// Optional rotational coordinate in [0, 2pi) per vertex.
  std::vector<double> azimuth;

  int edge_count() const { return static_cast<int>(edges.size()); }
  int face_count() const { return static_cast<int>(triangles.size()); }
  bool has_embedding() const { return !embedding.empty(); }

  /// Length of the edge opposite corner c of face f.
  double opposite_length(int f, int c) const { return edge_lengths[face_edges[f][c]]; }

  int euler_characteristic() const { return vertex_count - edge_count() + face_count(); }
  double max_edge_length() const;
  /// Edge ids incident to exactly one face.
  std::vector<int> boundary_edges() const;
  bool is_boundary_vertex(int v) const;
};

/// Assemble an IntrinsicMesh from triangles and a length oracle. The oracle is
/// called once per unique edge with (v0, v1), v0 < v1. Runs validate().
template <class LengthFn>
IntrinsicMesh build_mesh(std::string name, int vertex_count, std::vector<std::array<int, 3>> triangles,
                         LengthFn&& length_of);

/// Checks the structural invariants: strict triangle inequality on every face,
/// manifold edges, consistent winding, connectivity and boundary loop partition.
/// Throws MeshError naming the offending face or edge.
void validate(const IntrinsicMesh& mesh);

/// Discrete rotation of order k acting on vertex indices.
struct SymmetryOrbits {
  int order = 0;
  std::vector<int> orbit_map;
  std::vector<std::vector<int>> classes;

  /// (u o orbit_map), i.e. result[v] = u[orbit_map[v]].
  std::vector<double> pull_back(std::span<const double> u) const;
};

/// Throws MeshError unless orbit_map has order k, preserves the boundary and
/// maps every edge to an edge with a bit-identical length.
void validate(const IntrinsicMesh& mesh, const SymmetryOrbits& orbits);

struct HemisphereMesh {
  IntrinsicMesh mesh;
  SymmetryOrbits orbits;
};

/// Unit upper hemisphere, 2^refinement latitude rings, azimuthal counts
/// divisible by k. One sector is built and replicated by index arithmetic so
/// the k-fold rotation is an exact index permutation.
HemisphereMesh gen_hemisphere(int k, int refinement);

/// Flat [0, length] x S^1(2pi) with periodic identification in the circular
/// direction. Two boundary loops at the ends.
IntrinsicMesh gen_flat_cylinder(double length, int n_axial, int n_circ);

/// Hyperbolic pair of pants with geodesic boundary of the given lengths, built
/// from two right-angled hexagons and refined by geodesic midpoint subdivision.
IntrinsicMesh gen_pair_of_pants(std::array<double, 3> boundary_lengths, int refinement);

/// Shortest-path distance along edges from the given source vertices.
std::vector<double> edge_distance(const IntrinsicMesh& mesh, std::span<const int> sources);

void write_off(const IntrinsicMesh& mesh, std::ostream& out);
/// Header: edge_id,v0,v1,length
void write_edge_csv(const IntrinsicMesh& mesh, std::ostream& out);

}  // namespace curvmf

#include "curvmf/mesh_build.inl"
