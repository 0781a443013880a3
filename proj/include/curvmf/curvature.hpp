#pragma once

#include <iosfwd>
#include <string>

#include "curvmf/mesh.hpp"
#include "curvmf/operators.hpp"

namespace curvmf {

Field constant_field(const IntrinsicMesh& mesh, double c);
/// a + b cos(m * azimuth). Needs mesh.azimuth.
Field azimuthal_cosine_field(const IntrinsicMesh& mesh, double a, double b, int m);
/// height * (1 - (d / radius)^2)^2 inside the edge-distance ball around
/// center_vertex, 0 outside.
Field cap_bump_field(const IntrinsicMesh& mesh, int center_vertex, double radius, double height);

/// Reads "vertex_id,value" rows (a header line is skipped) into a vertex
/// field. Every vertex must appear exactly once.
Field read_vertex_csv(std::istream& in, int vertex_count);

}  // namespace curvmf
