#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "procalab/mesh.hpp"
#include "procalab/rng.hpp"

using namespace procalab;

namespace {

SpatialMesh flat_circle(int n, double dx = 1.0) {
  return build_mesh(1, {n}, {dx}, 1.0);
}

SpatialMesh variable_circle(int n) {
  Vec h(n);
  for (int i = 0; i < n; ++i) h[i] = 1.0 + 0.5 * std::sin(2.0 * M_PI * i / n) + 0.1 * i / n;
  return build_mesh(1, {n}, {1.0}, h);
}

}  // namespace

TEST_CASE("build_mesh counts cells") {
  const SpatialMesh circle = flat_circle(4);
  CHECK(circle.node_count() == 4);
  CHECK(circle.edge_count() == 4);
  CHECK(circle.face_count() == 0);

  const SpatialMesh torus = build_mesh(2, {4, 4}, {1.0}, 1.0);
  CHECK(torus.node_count() == 16);
  CHECK(torus.edge_count() == 32);
  CHECK(torus.face_count() == 16);
}

TEST_CASE("build_mesh stores a per-edge metric table") {
  Vec h(8);
  for (int i = 0; i < 8; ++i) h[i] = 1.0 + 0.1 * i;
  const SpatialMesh mesh = build_mesh(1, {8}, {0.5}, h);
  for (int i = 0; i < 8; ++i) CHECK(mesh.edge_metric(0, i) == h[i]);
}

TEST_CASE("build_mesh rejects bad input") {
  CHECK_THROWS(build_mesh(1, {2}, {1.0}, 1.0));
  CHECK_THROWS(build_mesh(1, {4}, {1.0}, -1.0));
  CHECK_THROWS(build_mesh(1, {4}, {1.0}, Vec(Vec::Zero(4))));
  CHECK_THROWS(build_mesh(3, {4, 4, 4}, {1.0}, 1.0));
}

TEST_CASE("flat circle Laplacian is the circulant [2,-1,0,-1]") {
  const HodgeComplex c = build_complex(flat_circle(4));
  const Mat lap(c.lap0);
  Mat expected(4, 4);
  expected << 2, -1, 0, -1, -1, 2, -1, 0, 0, -1, 2, -1, -1, 0, -1, 2;
  CHECK((lap - expected).norm() < 1e-14);
}

TEST_CASE("d1 d0 = 0 exactly") {
  for (const SpatialMesh& mesh :
       {build_mesh(2, {4, 4}, {1.0}, 1.0), build_mesh(2, {4, 6}, {0.7, 1.3}, 2.0)}) {
    const HodgeComplex c = build_complex(mesh);
    CHECK(Mat(SpMat(c.d1 * c.d0)).norm() == 0.0);
  }
}

TEST_CASE("derivative of a constant vanishes") {
  const HodgeComplex c = build_complex(flat_circle(4));
  const Vec ones = Vec::Ones(4);
  CHECK(Vec(c.d0 * ones).norm() == 0.0);
}

TEST_CASE("inner products match the Hodge pairing") {
  const HodgeComplex c = build_complex(flat_circle(4));
  FormField one = make_form(c.mesh, 0);
  one.values.setOnes();
  CHECK(inner_product(c, 0, one, one) == Catch::Approx(4.0));

  FormField e = make_form(c.mesh, 1);
  e.values[1] = 1.0;
  CHECK(inner_product(c, 1, e, e) == Catch::Approx(1.0));

  FormField f = make_form(c.mesh, 0), g = make_form(c.mesh, 0);
  for (int i = 0; i < 4; ++i) {
    f.values[i] = std::cos(2.0 * M_PI * i / 4);
    g.values[i] = std::sin(2.0 * M_PI * i / 4);
  }
  CHECK(std::abs(inner_product(c, 0, f, g)) < 1e-14);
  CHECK_THROWS(inner_product(c, 0, f, e));
}

TEST_CASE("d and delta are adjoint to each other") {
  Xorshift64Star rng(7);
  for (const SpatialMesh& mesh : {variable_circle(8), build_mesh(2, {4, 4}, {1.0}, 1.0),
                                  build_mesh(2, {6, 4}, {0.8, 1.1}, 1.7)}) {
    const HodgeComplex c = build_complex(mesh);
    for (int rep = 0; rep < 3; ++rep) {
      const Vec f = rng.vector(mesh.node_count());
      const Vec g = rng.vector(mesh.edge_count());
      const double lhs = inner_product(c, 1, Vec(c.d0 * f), g);
      const double rhs = inner_product(c, 0, f, Vec(c.delta1 * g));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0));
      if (mesh.dim == 2) {
        const Vec u = rng.vector(mesh.edge_count());
        const Vec v = rng.vector(mesh.face_count());
        const double l2 = inner_product(c, 2, Vec(c.d1 * u), v);
        const double r2 = inner_product(c, 1, u, Vec(c.delta2 * v));
        CHECK(std::abs(l2 - r2) <= 1e-12 * std::max(std::abs(l2), 1.0));
      }
    }
  }
}

TEST_CASE("Laplacian intertwines with d at matrix level") {
  for (const SpatialMesh& mesh : {flat_circle(4), variable_circle(8),
                                  build_mesh(2, {4, 4}, {1.0}, 1.0)}) {
    const HodgeComplex c = build_complex(mesh);
    const Mat lhs = Mat(SpMat(c.lap1 * c.d0));
    const Mat rhs = Mat(SpMat(c.d0 * c.lap0));
    CHECK((lhs - rhs).norm() <= 1e-13 * std::max(lhs.norm(), 1.0));
  }
}

TEST_CASE("Laplacians are positive semidefinite in the weighted product") {
  Xorshift64Star rng(21);
  const HodgeComplex c = build_complex(variable_circle(8));
  for (int rep = 0; rep < 8; ++rep) {
    const Vec f = rng.vector(8);
    CHECK(inner_product(c, 0, f, Vec(c.lap0 * f)) >= -1e-12);
    const Vec g = rng.vector(8);
    CHECK(inner_product(c, 1, g, Vec(c.lap1 * g)) >= -1e-12);
  }
}
