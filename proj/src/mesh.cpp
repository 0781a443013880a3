#include "curvmf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <queue>
#include <sstream>
#include <tuple>

namespace curvmf {

namespace {

constexpr double kPi = std::numbers::pi;

std::string face_str(const IntrinsicMesh& mesh, int f) {
  std::ostringstream os;
  const auto& t = mesh.triangles[f];
  os << "face " << f << " (" << t[0] << ", " << t[1] << ", " << t[2] << ")";
  return os.str();
}

}  // namespace

namespace detail {

void index_edges(IntrinsicMesh& mesh) {
  std::vector<std::array<int, 2>> all;
  all.reserve(mesh.triangles.size() * 3);
  for (const auto& t : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      int a = t[(c + 1) % 3], b = t[(c + 2) % 3];
      all.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  mesh.edges = std::move(all);
  mesh.face_edges.resize(mesh.triangles.size());
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    for (int c = 0; c < 3; ++c) {
      int a = t[(c + 1) % 3], b = t[(c + 2) % 3];
      std::array<int, 2> key{std::min(a, b), std::max(a, b)};
      auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
      mesh.face_edges[f][c] = static_cast<int>(it - mesh.edges.begin());
    }
  }
}

void extract_boundary_loops(IntrinsicMesh& mesh) {
  std::vector<int> face_count(mesh.edges.size(), 0);
  for (const auto& fe : mesh.face_edges) {
    for (int e : fe) ++face_count[e];
  }
  std::vector<int> next(mesh.vertex_count, -1);
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    for (int c = 0; c < 3; ++c) {
      if (face_count[mesh.face_edges[f][c]] != 1) continue;
      int a = t[(c + 1) % 3], b = t[(c + 2) % 3];
      if (next[a] != -1) {
        throw MeshError("boundary is not a manifold curve at vertex " + std::to_string(a));
      }
      next[a] = b;
    }
  }
  mesh.boundary_loops.clear();
  std::vector<char> seen(mesh.vertex_count, 0);
  for (int v = 0; v < mesh.vertex_count; ++v) {
    if (next[v] == -1 || seen[v]) continue;
    std::vector<int> loop;
    int w = v;
    while (!seen[w]) {
      seen[w] = 1;
      loop.push_back(w);
      w = next[w];
      if (w == -1) throw MeshError("open boundary chain through vertex " + std::to_string(v));
    }
    if (w != v) throw MeshError("boundary chains merge at vertex " + std::to_string(w));
    mesh.boundary_loops.push_back(std::move(loop));
  }
}

}  // namespace detail

double IntrinsicMesh::max_edge_length() const {
  return edge_lengths.empty() ? 0.0 : *std::max_element(edge_lengths.begin(), edge_lengths.end());
}

std::vector<int> IntrinsicMesh::boundary_edges() const {
  std::vector<int> count(edges.size(), 0);
  for (const auto& fe : face_edges) {
    for (int e : fe) ++count[e];
  }
  std::vector<int> out;
  for (std::size_t e = 0; e < count.size(); ++e) {
    if (count[e] == 1) out.push_back(static_cast<int>(e));
  }
  return out;
}

bool IntrinsicMesh::is_boundary_vertex(int v) const {
  for (const auto& loop : boundary_loops) {
    if (std::find(loop.begin(), loop.end(), v) != loop.end()) return true;
  }
  return false;
}

void validate(const IntrinsicMesh& mesh) {
  const int nv = mesh.vertex_count;
  if (nv <= 0 || mesh.triangles.empty()) throw MeshError("empty mesh");
  if (mesh.edge_lengths.size() != mesh.edges.size() || mesh.face_edges.size() != mesh.triangles.size()) {
    throw MeshError("edge tables out of sync with triangles");
  }
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.triangles[f];
    for (int c = 0; c < 3; ++c) {
      if (t[c] < 0 || t[c] >= nv) throw MeshError("vertex index out of range in " + face_str(mesh, f));
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw MeshError("repeated vertex in " + face_str(mesh, f));
    const double a = mesh.opposite_length(f, 0), b = mesh.opposite_length(f, 1), c = mesh.opposite_length(f, 2);
    if (!(a > 0 && b > 0 && c > 0) || !std::isfinite(a + b + c)) {
      throw MeshError("non-positive edge length in " + face_str(mesh, f));
    }
    if (!(a < b + c && b < a + c && c < a + b)) {
      throw MeshError("triangle inequality violated in " + face_str(mesh, f));
    }
  }

  std::map<std::pair<int, int>, int> directed;
  std::vector<int> incidence(mesh.edges.size(), 0);
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.triangles[f];
    for (int c = 0; c < 3; ++c) {
      auto key = std::make_pair(t[(c + 1) % 3], t[(c + 2) % 3]);
      if (!directed.emplace(key, f).second) {
        throw MeshError("inconsistent winding or duplicated edge at " + face_str(mesh, f));
      }
      if (++incidence[mesh.face_edges[f][c]] > 2) {
        throw MeshError("non-manifold edge at " + face_str(mesh, f));
      }
    }
  }

  // connectivity
  std::vector<std::vector<int>> adj(nv);
  for (const auto& e : mesh.edges) {
    adj[e[0]].push_back(e[1]);
    adj[e[1]].push_back(e[0]);
  }
  std::vector<char> seen(nv, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  if (reached != nv) throw MeshError("mesh is not connected");

  std::size_t loop_edges = 0;
  for (const auto& loop : mesh.boundary_loops) {
    if (loop.size() < 3) throw MeshError("boundary loop with fewer than three vertices");
    for (std::size_t i = 0; i < loop.size(); ++i) {
      int a = loop[i], b = loop[(i + 1) % loop.size()];
      std::array<int, 2> key{std::min(a, b), std::max(a, b)};
      auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
      if (it == mesh.edges.end() || *it != key || incidence[it - mesh.edges.begin()] != 1) {
        throw MeshError("boundary loop step " + std::to_string(a) + "->" + std::to_string(b) +
                        " is not a boundary edge");
      }
    }
    loop_edges += loop.size();
  }
  if (loop_edges != mesh.boundary_edges().size()) throw MeshError("boundary loops do not cover boundary edges");
}

std::vector<double> SymmetryOrbits::pull_back(std::span<const double> u) const {
  std::vector<double> out(u.size());
  for (std::size_t v = 0; v < u.size(); ++v) out[v] = u[orbit_map[v]];
  return out;
}

void validate(const IntrinsicMesh& mesh, const SymmetryOrbits& orbits) {
  const int nv = mesh.vertex_count;
  if (orbits.order < 2) throw MeshError("symmetry order must be at least 2");
  if (static_cast<int>(orbits.orbit_map.size()) != nv) throw MeshError("orbit map has wrong size");
  for (int v = 0; v < nv; ++v) {
    int w = v;
    for (int i = 0; i < orbits.order; ++i) w = orbits.orbit_map[w];
    if (w != v) throw MeshError("orbit map is not of order k at vertex " + std::to_string(v));
    if (mesh.is_boundary_vertex(v) != mesh.is_boundary_vertex(orbits.orbit_map[v])) {
      throw MeshError("orbit map does not preserve the boundary at vertex " + std::to_string(v));
    }
  }
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    int a = orbits.orbit_map[mesh.edges[e][0]], b = orbits.orbit_map[mesh.edges[e][1]];
    std::array<int, 2> key{std::min(a, b), std::max(a, b)};
    auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
    if (it == mesh.edges.end() || *it != key) throw MeshError("orbit map does not preserve edges");
    if (mesh.edge_lengths[it - mesh.edges.begin()] != mesh.edge_lengths[e]) {
      throw MeshError("edge length not invariant under orbit map at edge " + std::to_string(e));
    }
  }
}

// ---------------------------------------------------------------------------
// hemisphere

HemisphereMesh gen_hemisphere(int k, int refinement) {
  if (k < 2) throw MeshError("symmetry order k must be >= 2");
  if (refinement < 1) throw MeshError("hemisphere refinement must be >= 1");
  if (refinement > 12) throw MeshError("hemisphere refinement too large");
  const int rings = 1 << refinement;

  // per-sector counts s_i, ring i has k * s_i vertices; ring 0 is the pole
  std::vector<int> per_sector(rings + 1, 0), offset(rings + 1, 0);
  std::vector<double> theta(rings + 1);
  int nv = 1;
  const int min_sector = (3 + k - 1) / k;
  for (int i = 1; i <= rings; ++i) {
    theta[i] = 0.5 * kPi * i / rings;
    double target = 4.0 * rings * std::sin(theta[i]) / k;
    per_sector[i] = std::max(min_sector, static_cast<int>(std::ceil(target - 1e-9)));
    offset[i] = nv;
    nv += k * per_sector[i];
  }
  theta[0] = 0.0;

  auto index = [&](int ring, int sector, int j) {
    if (ring == 0) return 0;
    if (j == per_sector[ring]) {
      j = 0;
      sector = (sector + 1) % k;
    }
    return offset[ring] + sector * per_sector[ring] + j;
  };
  // fractional position of a vertex inside its sector, and its sector
  auto locate = [&](int v, int& ring, int& sector, double& frac) {
    if (v == 0) {
      ring = 0;
      sector = 0;
      frac = 0.0;
      return;
    }
    ring = static_cast<int>(std::upper_bound(offset.begin() + 1, offset.end(), v) - offset.begin()) - 1;
    int local = v - offset[ring];
    sector = local / per_sector[ring];
    frac = static_cast<double>(local % per_sector[ring]) / per_sector[ring];
  };

  std::vector<std::array<int, 3>> tris;
  for (int q = 0; q < k; ++q) {
    for (int j = 0; j < per_sector[1]; ++j) {
      tris.push_back({0, index(1, q, j), index(1, q, j + 1)});
    }
    for (int i = 1; i < rings; ++i) {
      const int sa = per_sector[i], sb = per_sector[i + 1];
      int a = 0, b = 0;
      while (a < sa || b < sb) {
        bool advance_inner;
        if (a == sa) advance_inner = false;
        else if (b == sb) advance_inner = true;
        else advance_inner = static_cast<long>(a + 1) * sb <= static_cast<long>(b + 1) * sa;
        if (advance_inner) {
          tris.push_back({index(i, q, a), index(i + 1, q, b), index(i, q, a + 1)});
          ++a;
        } else {
          tris.push_back({index(i, q, a), index(i + 1, q, b), index(i + 1, q, b + 1)});
          ++b;
        }
      }
    }
  }

  const double sector_angle = 2.0 * kPi / k;
  auto length = [&](int v0, int v1) {
    int r0, q0, r1, q1;
    double f0, f1;
    locate(v0, r0, q0, f0);
    locate(v1, r1, q1, f1);
    if (std::tie(r0, f0) > std::tie(r1, f1)) {
      std::swap(r0, r1);
      std::swap(q0, q1);
      std::swap(f0, f1);
    }
    const double t0 = theta[r0], t1 = theta[r1];
    if (r0 == 0 || r1 == 0) return std::abs(t1 - t0);
    // sector difference reduced to a canonical representative so that every
    // rotated copy of an edge evaluates the identical expression
    int dq = ((q1 - q0) % k + k) % k;
    if (2 * dq > k) dq -= k;
    const double dphi = sector_angle * ((dq + f1) - f0);
    const double x = std::sin(t0) - std::sin(t1) * std::cos(dphi);
    const double y = std::sin(t1) * std::sin(dphi);
    const double z = std::cos(t0) - std::cos(t1);
    const double chord = std::sqrt(x * x + y * y + z * z);
    return 2.0 * std::asin(std::min(1.0, 0.5 * chord));
  };

  HemisphereMesh out;
  out.mesh = build_mesh("hemisphere", nv, std::move(tris), length);
  auto& mesh = out.mesh;
  mesh.embedding.resize(nv);
  mesh.azimuth.resize(nv);
  for (int v = 0; v < nv; ++v) {
    int r, q;
    double f;
    locate(v, r, q, f);
    const double phi = sector_angle * (q + f);
    mesh.azimuth[v] = phi;
    mesh.embedding[v] = {std::sin(theta[r]) * std::cos(phi), std::sin(theta[r]) * std::sin(phi), std::cos(theta[r])};
  }

  out.orbits.order = k;
  out.orbits.orbit_map.resize(nv);
  out.orbits.orbit_map[0] = 0;
  out.orbits.classes.push_back({0});
  for (int i = 1; i <= rings; ++i) {
    for (int q = 0; q < k; ++q) {
      for (int j = 0; j < per_sector[i]; ++j) {
        out.orbits.orbit_map[index(i, q, j)] = index(i, (q + 1) % k, j);
      }
    }
    for (int j = 0; j < per_sector[i]; ++j) {
      std::vector<int> cls;
      for (int q = 0; q < k; ++q) cls.push_back(index(i, q, j));
      out.orbits.classes.push_back(std::move(cls));
    }
  }
  validate(mesh, out.orbits);
  return out;
}

// ---------------------------------------------------------------------------
// cylinder

IntrinsicMesh gen_flat_cylinder(double length, int n_axial, int n_circ) {
  if (!(length > 0) || !std::isfinite(length)) throw MeshError("cylinder length must be positive");
  if (n_axial < 1) throw MeshError("cylinder needs n_axial >= 1");
  if (n_circ < 3) throw MeshError("cylinder needs n_circ >= 3");
  const int nv = (n_axial + 1) * n_circ;
  auto index = [n_circ](int i, int j) { return i * n_circ + (j % n_circ); };
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * n_axial * n_circ);
  for (int i = 0; i < n_axial; ++i) {
    for (int j = 0; j < n_circ; ++j) {
      const int p00 = index(i, j), p01 = index(i, j + 1), p10 = index(i + 1, j), p11 = index(i + 1, j + 1);
      tris.push_back({p00, p01, p11});
      tris.push_back({p00, p11, p10});
    }
  }
  const double dx = length / n_axial;
  const double dy = 2.0 * kPi / n_circ;
  const double diag = std::hypot(dx, dy);
  auto edge_length = [&](int a, int b) {
    const bool same_ring = (a / n_circ) == (b / n_circ);
    const bool same_column = (a % n_circ) == (b % n_circ);
    if (same_ring) return dy;
    if (same_column) return dx;
    return diag;
  };
  IntrinsicMesh mesh = build_mesh("cylinder", nv, std::move(tris), edge_length);
  mesh.embedding.resize(nv);
  mesh.azimuth.resize(nv);
  for (int i = 0; i <= n_axial; ++i) {
    for (int j = 0; j < n_circ; ++j) {
      const double y = dy * j;
      mesh.azimuth[index(i, j)] = y;
      mesh.embedding[index(i, j)] = {std::cos(y), std::sin(y), dx * i};
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// pair of pants

namespace {

struct Lorentz {
  double x = 0, y = 0, t = 0;
  Lorentz operator+(const Lorentz& o) const { return {x + o.x, y + o.y, t + o.t}; }
  Lorentz operator-(const Lorentz& o) const { return {x - o.x, y - o.y, t - o.t}; }
  Lorentz operator*(double s) const { return {x * s, y * s, t * s}; }
};

double minkowski(const Lorentz& a, const Lorentz& b) { return a.x * b.x + a.y * b.y - a.t * b.t; }

Lorentz to_hyperboloid(const Lorentz& p) { return p * (1.0 / std::sqrt(-minkowski(p, p))); }

double hyperbolic_distance(const Lorentz& p, const Lorentz& q) {
  const Lorentz d = p - q;
  const double s = std::sqrt(std::max(0.0, minkowski(d, d)));
  return 2.0 * std::asinh(0.5 * s);
}

}  // namespace

IntrinsicMesh gen_pair_of_pants(std::array<double, 3> boundary_lengths, int refinement) {
  for (double l : boundary_lengths) {
    if (!(l > 0) || !std::isfinite(l)) throw MeshError("pair of pants boundary lengths must be positive");
  }
  if (refinement < 1) throw MeshError("pair of pants refinement must be >= 1");
  if (refinement > 9) throw MeshError("pair of pants refinement too large");

  // Right-angled hexagon with alternate sides a_i = l_i / 2; b_i is the side
  // opposite a_i. Walk order: a1, b3, a2, b1, a3, b2.
  std::array<double, 3> a{0.5 * boundary_lengths[0], 0.5 * boundary_lengths[1], 0.5 * boundary_lengths[2]};
  auto opposite = [&](int i) {
    const double ai = a[i], aj = a[(i + 1) % 3], ak = a[(i + 2) % 3];
    return std::acosh((std::cosh(aj) * std::cosh(ak) + std::cosh(ai)) / (std::sinh(aj) * std::sinh(ak)));
  };
  const std::array<double, 6> sides{a[0], opposite(2), a[1], opposite(0), a[2], opposite(1)};

  std::vector<Lorentz> pts;
  Lorentz p{0, 0, 1}, dir{1, 0, 0}, normal{0, 1, 0};
  for (double d : sides) {
    pts.push_back(p);
    const Lorentz np = p * std::cosh(d) + dir * std::sinh(d);
    const Lorentz nd = p * std::sinh(d) + dir * std::cosh(d);
    p = np;
    dir = normal;
    normal = nd * -1.0;
  }
  if (hyperbolic_distance(p, pts[0]) > 1e-8) throw MeshError("right-angled hexagon failed to close");

  Lorentz sum{};
  for (const auto& q : pts) sum = sum + q;
  pts.push_back(to_hyperboloid(sum));

  // side bitmask per vertex; sides 0, 2, 4 are boundary, 1, 3, 5 are seams
  std::vector<unsigned> tag(7, 0u);
  for (int i = 0; i < 6; ++i) tag[i] = (1u << i) | (1u << ((i + 5) % 6));
  std::vector<std::array<int, 3>> tris;
  for (int i = 0; i < 6; ++i) tris.push_back({6, i, (i + 1) % 6});

  for (int level = 0; level < refinement; ++level) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int u, int v) {
      auto key = std::make_pair(std::min(u, v), std::max(u, v));
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      int id = static_cast<int>(pts.size());
      pts.push_back(to_hyperboloid(pts[u] + pts[v]));
      tag.push_back(tag[u] & tag[v]);
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  const unsigned seam_mask = (1u << 1) | (1u << 3) | (1u << 5);
  const int nh = static_cast<int>(pts.size());
  std::vector<int> mirror(nh);
  std::vector<int> origin(nh);
  for (int v = 0; v < nh; ++v) origin[v] = v;
  int nv = nh;
  for (int v = 0; v < nh; ++v) {
    if (tag[v] & seam_mask) {
      mirror[v] = v;
    } else {
      mirror[v] = nv++;
      origin.push_back(v);
    }
  }
  std::vector<std::array<int, 3>> all = tris;
  for (const auto& t : tris) all.push_back({mirror[t[0]], mirror[t[2]], mirror[t[1]]});

  IntrinsicMesh mesh = build_mesh("pair_of_pants", nv, std::move(all), [&](int u, int v) {
    return hyperbolic_distance(pts[origin[u]], pts[origin[v]]);
  });

  // order loops so that loop i has length boundary_lengths[i]
  std::array<std::vector<int>, 3> ordered;
  for (auto& loop : mesh.boundary_loops) {
    int side = -1;
    for (int v : loop) {
      unsigned t = tag[origin[v]] & ~seam_mask;
      for (int s = 0; s < 3; ++s) {
        if (t & (1u << (2 * s))) side = s;
      }
      if (side >= 0) break;
    }
    if (side < 0 || !ordered[side].empty()) throw MeshError("could not identify pair of pants boundary loops");
    ordered[side] = std::move(loop);
  }
  mesh.boundary_loops.assign(ordered.begin(), ordered.end());
  return mesh;
}

// ---------------------------------------------------------------------------

std::vector<double> edge_distance(const IntrinsicMesh& mesh, std::span<const int> sources) {
  std::vector<std::vector<std::pair<int, double>>> adj(mesh.vertex_count);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    adj[mesh.edges[e][0]].emplace_back(mesh.edges[e][1], mesh.edge_lengths[e]);
    adj[mesh.edges[e][1]].emplace_back(mesh.edges[e][0], mesh.edge_lengths[e]);
  }
  std::vector<double> dist(mesh.vertex_count, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (int s : sources) {
    dist[s] = 0.0;
    heap.emplace(0.0, s);
  }
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    for (auto [w, l] : adj[v]) {
      if (d + l < dist[w]) {
        dist[w] = d + l;
        heap.emplace(dist[w], w);
      }
    }
  }
  return dist;
}

void write_off(const IntrinsicMesh& mesh, std::ostream& out) {
  if (!mesh.has_embedding()) throw MeshError("mesh '" + mesh.name + "' has no embedding to export");
  out << "OFF\n" << mesh.vertex_count << ' ' << mesh.face_count() << " 0\n";
  out << std::setprecision(17);
  for (const auto& p : mesh.embedding) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_edge_csv(const IntrinsicMesh& mesh, std::ostream& out) {
  out << "edge_id,v0,v1,length\n" << std::setprecision(17);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    out << e << ',' << mesh.edges[e][0] << ',' << mesh.edges[e][1] << ',' << mesh.edge_lengths[e] << '\n';
  }
}

}  // namespace curvmf
