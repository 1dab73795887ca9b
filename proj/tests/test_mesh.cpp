#include <random>

#include "ct/mesh.hpp"
#include "doctest.h"
#include "test_utils.hpp"

using namespace ct;

TEST_CASE("delaunay of a unit square gives 2 triangles and 5 edges") {
  AugmentedMesh m = testing::unit_square_mesh();
  CHECK(m.face_count() == 2);
  CHECK(m.topology().edges.size() == 5);
  CHECK(m.vertex_count() == 4);
  for (double l : m.topology().rest_edge_lengths) CHECK(l > 0);
}

TEST_CASE("delaunay of 3 points is a single triangle") {
  std::vector<Vec3> pts = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}};
  AugmentedMesh m = delaunay_mesh_from_points(pts);
  CHECK(m.face_count() == 1);
  CHECK(m.topology().edges.size() == 3);
}

TEST_CASE("delaunay of a 3x3 grid satisfies the empty-circumcircle property") {
  std::vector<Vec3> pts;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) pts.emplace_back(0.1 * x, 0.1 * y, 0.0);
  AugmentedMesh m = delaunay_mesh_from_points(pts);
  CHECK(m.face_count() == 8);

  // brute-force circumcircle check on every face against every point
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    auto tri = m.face_vertices(static_cast<int>(f));
    Eigen::Vector2d a(tri[0].x(), tri[0].y()), b(tri[1].x(), tri[1].y()), c(tri[2].x(), tri[2].y());
    // circumcenter via perpendicular bisector intersection
    Eigen::Matrix2d lhs;
    lhs << (b - a).transpose(), (c - a).transpose();
    Eigen::Vector2d rhs(0.5 * (b.squaredNorm() - a.squaredNorm()), 0.5 * (c.squaredNorm() - a.squaredNorm()));
    Eigen::Vector2d center = lhs.colPivHouseholderQr().solve(rhs);
    double r = (a - center).norm();
    for (const auto& p : pts) {
      double d = (Eigen::Vector2d(p.x(), p.y()) - center).norm();
      CHECK(d >= r - 1e-9);
    }
  }
}

TEST_CASE("delaunay projects onto the best-fit plane for tilted inputs") {
  std::mt19937_64 rng(11);
  Mat3 rot = testing::random_rotation(rng);
  std::vector<Vec3> pts;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) pts.push_back(rot * Vec3(0.05 * x, 0.05 * y, 0.0) + Vec3(0.3, -0.2, 0.5));
  AugmentedMesh m = delaunay_mesh_from_points(pts);
  CHECK(m.face_count() == 18);
  CHECK(m.vertices() == pts);  // faces index the original 3D points
}

TEST_CASE("delaunay rejects degenerate input") {
  CHECK_THROWS_AS(delaunay_mesh_from_points({{0, 0, 0}, {1, 0, 0}}), std::invalid_argument);
  CHECK_THROWS_WITH_AS(delaunay_mesh_from_points({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}}),
                       doctest::Contains("collinear"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(delaunay_mesh_from_points({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}}),
                       doctest::Contains("duplicate"), std::invalid_argument);
}

TEST_CASE("face_rotation recovers a known rotation") {
  std::array<Vec3, 3> rest = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.15, 0)};
  SUBCASE("identity") {
    FaceFrame f = face_rotation(rest, rest);
    CHECK((f.rotation - Mat3::Identity()).norm() < 1e-12);
  }
  SUBCASE("sampled rotations") {
    std::mt19937_64 rng(42);
    for (int k = 0; k < 20; ++k) {
      Mat3 r = testing::random_rotation(rng);
      std::array<Vec3, 3> deformed;
      for (int i = 0; i < 3; ++i) deformed[static_cast<std::size_t>(i)] = r * rest[static_cast<std::size_t>(i)] + Vec3(0.2, 0.1, -0.4);
      FaceFrame f = face_rotation(rest, deformed);
      CHECK((f.rotation - r).norm() < 1e-6);
      CHECK(std::abs(f.rotation.determinant() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("face_rotation with noise matches the Horn quaternion oracle") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1e-3);
  std::array<Vec3, 3> rest = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0.02, 0.12, 0)};
  for (int k = 0; k < 20; ++k) {
    Mat3 r = testing::random_rotation(rng);
    std::array<Vec3, 3> deformed;
    for (int i = 0; i < 3; ++i)
      deformed[static_cast<std::size_t>(i)] = r * rest[static_cast<std::size_t>(i)] + Vec3(noise(rng), noise(rng), noise(rng));
    Mat3 ours = face_rotation(rest, deformed).rotation;
    Mat3 oracle = testing::horn_procrustes(rest, deformed);
    CHECK((ours - oracle).norm() < 1e-6);
    CHECK((ours * ours.transpose() - Mat3::Identity()).norm() < 1e-9);
  }
}

TEST_CASE("face_rotation is left-equivariant") {
  std::mt19937_64 rng(99);
  std::array<Vec3, 3> rest = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0.03, 0.09, 0.01)};
  std::array<Vec3, 3> deformed = {Vec3(0.01, 0, 0.02), Vec3(0.11, 0.01, 0), Vec3(0.02, 0.1, 0.03)};
  for (int k = 0; k < 10; ++k) {
    Mat3 q = testing::random_rotation(rng);
    std::array<Vec3, 3> rotated;
    for (int i = 0; i < 3; ++i) rotated[static_cast<std::size_t>(i)] = q * deformed[static_cast<std::size_t>(i)];
    Mat3 lhs = face_rotation(rest, rotated).rotation;
    Mat3 rhs = q * face_rotation(rest, deformed).rotation;
    CHECK((lhs - rhs).norm() < 1e-6);
  }
}

TEST_CASE("face_rotation rejects degenerate triangles") {
  std::array<Vec3, 3> rest = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.1, 0)};
  std::array<Vec3, 3> flat = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0.2, 0, 0)};
  CHECK_THROWS_AS(face_rotation(rest, flat), std::invalid_argument);
}

TEST_CASE("barycentric_to_world basics") {
  AugmentedMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{{0, 1, 2}}});
  CHECK((barycentric_to_world(m, 0, {1, 0, 0}) - Vec3(0, 0, 0)).norm() == 0.0);
  Vec3 centroid = barycentric_to_world(m, 0, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK((centroid - Vec3(1.0 / 3, 1.0 / 3, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(barycentric_to_world(m, 5, {1, 0, 0}), std::out_of_range);
}

TEST_CASE("barycentric matches the matrix-product oracle on random triangles") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 50; ++k) {
    std::array<Vec3, 3> tri = {Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)),
                               Vec3(u(rng), u(rng), u(rng))};
    BarycentricCoord bc{u(rng), u(rng), 0};
    bc.b3 = 1.0 - bc.b1 - bc.b2;
    Eigen::Matrix3d v;
    v.col(0) = tri[0];
    v.col(1) = tri[1];
    v.col(2) = tri[2];
    Vec3 oracle = v * Vec3(bc.b1, bc.b2, bc.b3);
    CHECK((barycentric_point(tri, bc) - oracle).norm() < 1e-12);
  }
}

TEST_CASE("world_to_barycentric inverts barycentric_point for in-plane points") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  std::array<Vec3, 3> tri = {Vec3(0.1, 0.2, 0.3), Vec3(0.4, 0.2, 0.1), Vec3(0.2, 0.5, 0.4)};
  for (int k = 0; k < 50; ++k) {
    BarycentricCoord bc{u(rng), u(rng), 0};
    bc.b3 = 1.0 - bc.b1 - bc.b2;
    Vec3 p = barycentric_point(tri, bc);
    BarycentricCoord back = world_to_barycentric(tri, p);
    CHECK((barycentric_point(tri, back) - p).norm() < 1e-9);
    CHECK(std::abs(back.sum() - 1.0) < 1e-9);
    CHECK(std::abs(back.b1 - bc.b1) < 1e-9);
  }
}

TEST_CASE("reassign_face moves across the shared edge and preserves the point") {
  AugmentedMesh m = testing::unit_square_mesh();
  // find a face and a negative-weight coordinate pointing into its neighbor
  for (int f = 0; f < 2; ++f) {
    for (int k = 0; k < 3; ++k) {
      if (m.topology().face_adjacency[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)] < 0) continue;
      BarycentricCoord bc{0.6, 0.6, 0.6};
      bc[k] = -0.2;
      double excess = bc.sum() - 1.0;
      bc[(k + 1) % 3] -= excess;  // keep the sum at 1
      Vec3 p = barycentric_to_world(m, f, bc);
      auto [nf, nbc] = reassign_face(m, f, bc);
      CHECK(nf == m.topology().face_adjacency[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)]);
      CHECK((barycentric_to_world(m, nf, nbc) - p).norm() < 1e-9);
    }
  }
}

TEST_CASE("reassign_face leaves non-negative coordinates unchanged") {
  AugmentedMesh m = testing::unit_square_mesh();
  auto [f, bc] = reassign_face(m, 0, {0.2, 0.3, 0.5});
  CHECK(f == 0);
  CHECK(bc.b1 == 0.2);
}

TEST_CASE("reassign_face clamps and renormalizes at a boundary") {
  AugmentedMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{{0, 1, 2}}});
  auto [f, bc] = reassign_face(m, 0, {-0.1, 0.6, 0.5});
  CHECK(f == 0);
  CHECK(bc.b1 == 0.0);
  CHECK(bc.b2 == doctest::Approx(6.0 / 11).epsilon(1e-12));
  CHECK(bc.b3 == doctest::Approx(5.0 / 11).epsilon(1e-12));
}

TEST_CASE("mesh json round trip rejects bad indices") {
  AugmentedMesh m = testing::unit_square_mesh();
  std::string j = mesh_to_json(m);
  AugmentedMesh back = mesh_from_json(j);
  CHECK(back.vertex_count() == m.vertex_count());
  CHECK(back.topology().faces == m.topology().faces);

  std::string bad = j;
  auto pos = bad.find("\"faces\"");
  REQUIRE(pos != std::string::npos);
  bad.replace(bad.find('[', pos) + 1, 1, "[9");  // first face index out of range
  CHECK_THROWS(mesh_from_json(bad));
}

TEST_CASE("edge set and rest lengths survive deformation") {
  AugmentedMesh m = testing::unit_square_mesh();
  std::vector<Vec3> x = m.vertices();
  for (auto& p : x) p = 2.0 * p + Vec3(0, 0, 0.5);
  AugmentedMesh d = m.with_state(x, m.velocities());
  CHECK(&d.topology() == &m.topology());
  CHECK(d.topology().rest_edge_lengths == m.topology().rest_edge_lengths);
}
