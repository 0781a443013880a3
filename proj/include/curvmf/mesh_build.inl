#pragma once

#include <utility>

namespace curvmf {

namespace detail {
/// Fills edges and face_edges from triangles.
void index_edges(IntrinsicMesh& mesh);
/// Extracts boundary loops from the oriented boundary edges.
void extract_boundary_loops(IntrinsicMesh& mesh);
}  // namespace detail

template <class LengthFn>
IntrinsicMesh build_mesh(std::string name, int vertex_count, std::vector<std::array<int, 3>> triangles,
                         LengthFn&& length_of) {
  IntrinsicMesh mesh;
  mesh.name = std::move(name);
  mesh.vertex_count = vertex_count;
  mesh.triangles = std::move(triangles);
  detail::index_edges(mesh);
  mesh.edge_lengths.resize(mesh.edges.size());
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    mesh.edge_lengths[e] = length_of(mesh.edges[e][0], mesh.edges[e][1]);
  }
  detail::extract_boundary_loops(mesh);
  validate(mesh);
  return mesh;
}

}  // namespace curvmf
