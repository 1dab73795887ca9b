#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <string>
#include <vector>

namespace ct {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Barycentric weights. Sum to 1; individual weights may go negative while a
// point slides over a face boundary during optimization.
struct BarycentricCoord {
  double b1 = 1.0 / 3, b2 = 1.0 / 3, b3 = 1.0 / 3;

  double sum() const { return b1 + b2 + b3; }
  double operator[](int i) const { return i == 0 ? b1 : (i == 1 ? b2 : b3); }
  double& operator[](int i) { return i == 0 ? b1 : (i == 1 ? b2 : b3); }
  void normalize() {
    double s = sum();
    b1 /= s;
    b2 /= s;
    b3 /= s;
  }
};

// Rigid rotation taking a face's rest configuration onto its deformed one.
struct FaceFrame {
  Mat3 rotation = Mat3::Identity();
};

// Connectivity and rest quantities, fixed for the lifetime of a trajectory.
// Shared between all deformed states of one cloth.
struct MeshTopology {
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<int, 2>> edges;           // unique, sorted pairs, lexicographic order
  std::vector<double> rest_edge_lengths;           // per edge, captured at construction
  std::vector<std::array<int, 2>> bending_pairs;   // opposite vertices across interior edges
  std::vector<double> rest_bending_lengths;
  std::vector<std::array<int, 3>> face_adjacency;  // neighbor face across edge opposite vertex k, -1 at boundary
  std::vector<std::vector<int>> vertex_neighbors;  // per vertex, sorted
};

// Cloth state: positions + velocities over a fixed triangular topology.
// Deformation produces a new value sharing the topology.
class AugmentedMesh {
 public:
  AugmentedMesh() = default;
  // Captures edges, rest lengths and adjacency from `vertices`.
  AugmentedMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t face_count() const { return topo_->faces.size(); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Vec3>& velocities() const { return velocities_; }
  const MeshTopology& topology() const { return *topo_; }
  const std::shared_ptr<const MeshTopology>& topology_ptr() const { return topo_; }

  std::array<Vec3, 3> face_vertices(int face_id) const;
  Vec3 centroid() const;

  // New state with the same topology (and the original rest quantities).
  AugmentedMesh with_state(std::vector<Vec3> vertices, std::vector<Vec3> velocities) const;
  AugmentedMesh translated(const Vec3& offset) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Vec3> velocities_;
  std::shared_ptr<const MeshTopology> topo_;
};

// 2D Delaunay triangulation of the points projected onto their best-fit
// plane, lifted back to 3D. Throws on collinear/duplicate input.
AugmentedMesh delaunay_mesh_from_points(const std::vector<Vec3>& points);

// Orthogonal Procrustes over a single triangle: the rotation with det = +1
// minimizing sum |R (rest_i - rest_mean) - (deformed_i - deformed_mean)|^2.
FaceFrame face_rotation(const std::array<Vec3, 3>& rest_vertices,
                        const std::array<Vec3, 3>& deformed_vertices);

Vec3 barycentric_to_world(const AugmentedMesh& mesh, int face_id, const BarycentricCoord& bc);
Vec3 barycentric_point(const std::array<Vec3, 3>& tri, const BarycentricCoord& bc);

// Barycentric coordinates of `p` w.r.t. the plane of `tri` (in-plane part).
BarycentricCoord world_to_barycentric(const std::array<Vec3, 3>& tri, const Vec3& p);

// If min(bc) < 0, moves the assignment to the neighbor face across the edge
// opposite the most-negative weight (ties: lowest index), re-solving the
// coordinates for the same world point. At a boundary with no neighbor,
// clamps negatives to zero and renormalizes.
std::pair<int, BarycentricCoord> reassign_face(const AugmentedMesh& mesh, int face_id,
                                               const BarycentricCoord& bc);

// JSON (de)serialization; loader rejects out-of-range face indices.
std::string mesh_to_json(const AugmentedMesh& mesh);
AugmentedMesh mesh_from_json(const std::string& json_text);
void save_mesh(const std::string& path, const AugmentedMesh& mesh);
AugmentedMesh load_mesh(const std::string& path);

}  // namespace ct
