#include "ct/mesh.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ct {

namespace {

std::shared_ptr<const MeshTopology> build_topology(const std::vector<Vec3>& vertices,
                                                   std::vector<std::array<int, 3>> faces) {
  const int n = static_cast<int>(vertices.size());
  auto topo = std::make_shared<MeshTopology>();
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n) throw std::out_of_range("face index out of range: " + std::to_string(f[k]));
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw std::invalid_argument("face with repeated vertex indices");
  }
  topo->faces = std::move(faces);

  // undirected union of face sides, deduplicated, lexicographic
  std::set<std::array<int, 2>> edge_set;
  for (const auto& f : topo->faces) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      edge_set.insert({std::min(a, b), std::max(a, b)});
    }
  }
  topo->edges.assign(edge_set.begin(), edge_set.end());
  topo->rest_edge_lengths.reserve(topo->edges.size());
  for (const auto& e : topo->edges) {
    double len = (vertices[static_cast<std::size_t>(e[0])] - vertices[static_cast<std::size_t>(e[1])]).norm();
    if (!(len > 0)) throw std::invalid_argument("zero-length edge between vertices " + std::to_string(e[0]) +
                                                " and " + std::to_string(e[1]));
    topo->rest_edge_lengths.push_back(len);
  }

  // face adjacency + bending pairs across interior edges
  std::map<std::array<int, 2>, std::vector<std::pair<int, int>>> edge_faces;  // edge -> (face, opposite slot)
  for (int fi = 0; fi < static_cast<int>(topo->faces.size()); ++fi) {
    const auto& f = topo->faces[static_cast<std::size_t>(fi)];
    for (int k = 0; k < 3; ++k) {
      int a = f[(k + 1) % 3], b = f[(k + 2) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back({fi, k});
    }
  }
  topo->face_adjacency.assign(topo->faces.size(), {-1, -1, -1});
  for (const auto& [edge, incident] : edge_faces) {
    if (incident.size() > 2)
      throw std::invalid_argument("non-manifold edge (" + std::to_string(edge[0]) + "," +
                                  std::to_string(edge[1]) + ")");
    if (incident.size() == 2) {
      auto [fa, ka] = incident[0];
      auto [fb, kb] = incident[1];
      topo->face_adjacency[static_cast<std::size_t>(fa)][static_cast<std::size_t>(ka)] = fb;
      topo->face_adjacency[static_cast<std::size_t>(fb)][static_cast<std::size_t>(kb)] = fa;
      int va = topo->faces[static_cast<std::size_t>(fa)][static_cast<std::size_t>(ka)];
      int vb = topo->faces[static_cast<std::size_t>(fb)][static_cast<std::size_t>(kb)];
      topo->bending_pairs.push_back({std::min(va, vb), std::max(va, vb)});
      topo->rest_bending_lengths.push_back(
          (vertices[static_cast<std::size_t>(va)] - vertices[static_cast<std::size_t>(vb)]).norm());
    }
  }

  topo->vertex_neighbors.assign(static_cast<std::size_t>(n), {});
  for (const auto& e : topo->edges) {
    topo->vertex_neighbors[static_cast<std::size_t>(e[0])].push_back(e[1]);
    topo->vertex_neighbors[static_cast<std::size_t>(e[1])].push_back(e[0]);
  }
  for (auto& nb : topo->vertex_neighbors) std::sort(nb.begin(), nb.end());
  return topo;
}

}  // namespace

AugmentedMesh::AugmentedMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces)
    : vertices_(std::move(vertices)), velocities_(vertices_.size(), Vec3::Zero()) {
  topo_ = build_topology(vertices_, std::move(faces));
}

std::array<Vec3, 3> AugmentedMesh::face_vertices(int face_id) const {
  if (face_id < 0 || face_id >= static_cast<int>(face_count()))
    throw std::out_of_range("face id out of range: " + std::to_string(face_id));
  const auto& f = topo_->faces[static_cast<std::size_t>(face_id)];
  return {vertices_[static_cast<std::size_t>(f[0])], vertices_[static_cast<std::size_t>(f[1])],
          vertices_[static_cast<std::size_t>(f[2])]};
}

Vec3 AugmentedMesh::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& v : vertices_) c += v;
  return vertices_.empty() ? c : Vec3(c / static_cast<double>(vertices_.size()));
}

AugmentedMesh AugmentedMesh::with_state(std::vector<Vec3> vertices, std::vector<Vec3> velocities) const {
  if (vertices.size() != vertices_.size() || velocities.size() != vertices_.size())
    throw std::invalid_argument("state size does not match mesh");
  AugmentedMesh out;
  out.vertices_ = std::move(vertices);
  out.velocities_ = std::move(velocities);
  out.topo_ = topo_;
  return out;
}

AugmentedMesh AugmentedMesh::translated(const Vec3& offset) const {
  std::vector<Vec3> v = vertices_;
  for (auto& p : v) p += offset;
  return with_state(std::move(v), velocities_);
}

// ---------------------------------------------------------------------------
// Delaunay (Bowyer-Watson on the best-fit plane)
// ---------------------------------------------------------------------------

namespace {

struct Tri2 {
  int a, b, c;
};

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// > 0 when p lies strictly inside the circumcircle of (a,b,c)
bool in_circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& p, double tol) {
  Eigen::Vector2d da = a - p, db = b - p, dc = c - p;
  double det = (da.squaredNorm()) * (db.x() * dc.y() - db.y() * dc.x()) -
               (db.squaredNorm()) * (da.x() * dc.y() - da.y() * dc.x()) +
               (dc.squaredNorm()) * (da.x() * db.y() - da.y() * db.x());
  double o = orient2d(a, b, c);
  return (o > 0 ? det : -det) > tol;
}

std::vector<std::array<int, 3>> delaunay2d(const std::vector<Eigen::Vector2d>& pts) {
  const int n = static_cast<int>(pts.size());
  Eigen::Vector2d lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double span = std::max((hi - lo).maxCoeff(), 1e-12);
  Eigen::Vector2d mid = 0.5 * (lo + hi);

  std::vector<Eigen::Vector2d> v(pts);
  int s0 = n, s1 = n + 1, s2 = n + 2;
  v.push_back(mid + Eigen::Vector2d(-30 * span, -10 * span));
  v.push_back(mid + Eigen::Vector2d(30 * span, -10 * span));
  v.push_back(mid + Eigen::Vector2d(0, 40 * span));
  // on-circle ties resolved as "outside": any triangulation of cocircular
  // points is acceptable
  const double tol = 1e-12 * span * span * span * span;

  std::vector<Tri2> tris = {{s0, s1, s2}};
  for (int i = 0; i < n; ++i) {
    std::vector<Tri2> keep;
    std::map<std::array<int, 2>, int> boundary_count;
    std::vector<std::array<int, 2>> cavity_edges;
    for (const auto& t : tris) {
      if (in_circumcircle(v[static_cast<std::size_t>(t.a)], v[static_cast<std::size_t>(t.b)],
                          v[static_cast<std::size_t>(t.c)], v[static_cast<std::size_t>(i)], tol)) {
        const int e[3][2] = {{t.a, t.b}, {t.b, t.c}, {t.c, t.a}};
        for (auto& ed : e) {
          std::array<int, 2> key = {std::min(ed[0], ed[1]), std::max(ed[0], ed[1])};
          boundary_count[key]++;
          cavity_edges.push_back({ed[0], ed[1]});
        }
      } else {
        keep.push_back(t);
      }
    }
    for (const auto& ed : cavity_edges) {
      std::array<int, 2> key = {std::min(ed[0], ed[1]), std::max(ed[0], ed[1])};
      if (boundary_count[key] != 1) continue;  // interior cavity edge
      Tri2 t{ed[0], ed[1], i};
      if (orient2d(v[static_cast<std::size_t>(t.a)], v[static_cast<std::size_t>(t.b)],
                   v[static_cast<std::size_t>(t.c)]) < 0)
        std::swap(t.b, t.c);
      keep.push_back(t);
    }
    tris = std::move(keep);
  }

  std::vector<std::array<int, 3>> out;
  for (const auto& t : tris) {
    if (t.a >= n || t.b >= n || t.c >= n) continue;
    out.push_back({t.a, t.b, t.c});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

AugmentedMesh delaunay_mesh_from_points(const std::vector<Vec3>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw std::invalid_argument("delaunay needs at least 3 points, got " + std::to_string(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((points[static_cast<std::size_t>(i)] - points[static_cast<std::size_t>(j)]).norm() < 1e-12)
        throw std::invalid_argument("duplicate points " + std::to_string(i) + " and " + std::to_string(j));

  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= n;
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);  // eigenvalues ascending
  double scale2 = es.eigenvalues()(2);
  if (scale2 <= 0 || es.eigenvalues()(1) <= 1e-16 * scale2)
    throw std::invalid_argument("points are collinear after best-fit plane projection");
  Vec3 axis_u = es.eigenvectors().col(2);
  Vec3 axis_v = es.eigenvectors().col(1);
  // deterministic sign convention
  if (axis_u(0) < 0 || (axis_u(0) == 0 && axis_u(1) < 0)) axis_u = -axis_u;
  if (axis_v(0) < 0 || (axis_v(0) == 0 && axis_v(1) < 0)) axis_v = -axis_v;

  std::vector<Eigen::Vector2d> pts2;
  pts2.reserve(static_cast<std::size_t>(n));
  for (const auto& p : points) pts2.emplace_back(axis_u.dot(p - mean), axis_v.dot(p - mean));

  auto faces = delaunay2d(pts2);
  if (faces.empty()) throw std::invalid_argument("degenerate point set: triangulation is empty");
  return AugmentedMesh(points, std::move(faces));
}

// ---------------------------------------------------------------------------
// Procrustes registration and barycentric geometry
// ---------------------------------------------------------------------------

FaceFrame face_rotation(const std::array<Vec3, 3>& rest_vertices,
                        const std::array<Vec3, 3>& deformed_vertices) {
  auto area = [](const std::array<Vec3, 3>& t) {
    return 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm();
  };
  if (area(rest_vertices) <= 1e-12 || area(deformed_vertices) <= 1e-12) {
    std::ostringstream os;
    os << "degenerate triangle in rotation registration (rest area " << area(rest_vertices)
       << ", deformed area " << area(deformed_vertices) << ")";
    throw std::invalid_argument(os.str());
  }
  Vec3 rc = (rest_vertices[0] + rest_vertices[1] + rest_vertices[2]) / 3.0;
  Vec3 dc = (deformed_vertices[0] + deformed_vertices[1] + deformed_vertices[2]) / 3.0;
  Mat3 m = Mat3::Zero();  // cross-covariance sum a_i b_i^T
  for (int i = 0; i < 3; ++i) m += (rest_vertices[static_cast<std::size_t>(i)] - rc) *
                                   (deformed_vertices[static_cast<std::size_t>(i)] - dc).transpose();
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double d = (svd.matrixV() * svd.matrixU().transpose()).determinant();
  Mat3 corr = Vec3(1, 1, d < 0 ? -1 : 1).asDiagonal();
  FaceFrame out;
  out.rotation = svd.matrixV() * corr * svd.matrixU().transpose();
  return out;
}

Vec3 barycentric_point(const std::array<Vec3, 3>& tri, const BarycentricCoord& bc) {
  return bc.b1 * tri[0] + bc.b2 * tri[1] + bc.b3 * tri[2];
}

Vec3 barycentric_to_world(const AugmentedMesh& mesh, int face_id, const BarycentricCoord& bc) {
  return barycentric_point(mesh.face_vertices(face_id), bc);
}

BarycentricCoord world_to_barycentric(const std::array<Vec3, 3>& tri, const Vec3& p) {
  Vec3 e1 = tri[1] - tri[0], e2 = tri[2] - tri[0], q = p - tri[0];
  double a = e1.dot(e1), b = e1.dot(e2), c = e2.dot(e2);
  double det = a * c - b * b;
  if (std::abs(det) < 1e-24) throw std::invalid_argument("degenerate triangle in barycentric solve");
  double beta = (c * e1.dot(q) - b * e2.dot(q)) / det;
  double gamma = (a * e2.dot(q) - b * e1.dot(q)) / det;
  return BarycentricCoord{1.0 - beta - gamma, beta, gamma};
}

std::pair<int, BarycentricCoord> reassign_face(const AugmentedMesh& mesh, int face_id,
                                               const BarycentricCoord& bc) {
  double lowest = std::min({bc.b1, bc.b2, bc.b3});
  if (lowest >= 0) return {face_id, bc};
  int k = 0;  // most-negative weight; ties pick the lowest index
  for (int i = 1; i < 3; ++i)
    if (bc[i] < bc[k]) k = i;

  int neighbor = mesh.topology().face_adjacency[static_cast<std::size_t>(face_id)][static_cast<std::size_t>(k)];
  if (neighbor < 0) {
    BarycentricCoord clamped = bc;
    for (int i = 0; i < 3; ++i) clamped[i] = std::max(0.0, clamped[i]);
    clamped.normalize();
    return {face_id, clamped};
  }
  Vec3 p = barycentric_to_world(mesh, face_id, bc);
  return {neighbor, world_to_barycentric(mesh.face_vertices(neighbor), p)};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string mesh_to_json(const AugmentedMesh& mesh) {
  nlohmann::ordered_json j;
  auto& jv = j["vertices"] = nlohmann::ordered_json::array();
  for (const auto& v : mesh.vertices()) jv.push_back({v.x(), v.y(), v.z()});
  auto& jw = j["velocities"] = nlohmann::ordered_json::array();
  for (const auto& v : mesh.velocities()) jw.push_back({v.x(), v.y(), v.z()});
  auto& jf = j["faces"] = nlohmann::ordered_json::array();
  for (const auto& f : mesh.topology().faces) jf.push_back({f[0], f[1], f[2]});
  return j.dump();
}

AugmentedMesh mesh_from_json(const std::string& json_text) {
  auto j = nlohmann::json::parse(json_text);
  std::vector<Vec3> vertices, velocities;
  for (const auto& v : j.at("vertices")) vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
  for (const auto& v : j.at("velocities")) velocities.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
  if (velocities.size() != vertices.size()) throw std::invalid_argument("velocities/vertices size mismatch");
  std::vector<std::array<int, 3>> faces;
  for (const auto& f : j.at("faces")) faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
  AugmentedMesh mesh(vertices, faces);  // constructor validates indices
  return mesh.with_state(std::move(vertices), std::move(velocities));
}

void save_mesh(const std::string& path, const AugmentedMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << mesh_to_json(mesh) << "\n";
}

AugmentedMesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return mesh_from_json(ss.str());
}

}  // namespace ct
