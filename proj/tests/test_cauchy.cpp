#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>

#include "procalab/cauchy.hpp"
#include "procalab/rng.hpp"
#include "procalab/spectral.hpp"

using namespace procalab;

namespace {

struct Lab {
  HodgeComplex c;
  Spectrum s0, s1;
  double m2;
};

Lab flat_lab(int n, double m2 = 1.0) {
  Lab l;
  l.c = build_complex(build_mesh(1, {n}, {1.0}, 1.0));
  l.s0 = eigendecompose(l.c, 0, m2);
  l.s1 = eigendecompose(l.c, 1, m2);
  l.m2 = m2;
  return l;
}

CauchyData random_admissible(const Lab& l, Xorshift64Star& rng) {
  return make_constrained(l.c, l.m2, rng.vector(l.c.mesh.edge_count()), std::nullopt,
                          rng.vector(l.c.mesh.edge_count()));
}

}  // namespace

TEST_CASE("zero generators give admissible zero data") {
  const Lab l = flat_lab(4);
  const Vec z = Vec::Zero(4);
  const CauchyData d = make_constrained(l.c, l.m2, z, std::nullopt, z);
  CHECK(d.admissible);
  CHECK(d.a0.norm() == 0.0);
  CHECK(d.pi1.norm() == 0.0);
}

TEST_CASE("unit generator data matches direct matrix evaluation") {
  const Lab l = flat_lab(4);
  Vec f1 = Vec::Zero(4);
  f1[0] = 1.0;
  const CauchyData d = make_constrained(l.c, l.m2, f1, std::nullopt, Vec(Vec::Zero(4)));
  CHECK((d.a0 - Vec(l.c.delta1 * f1)).norm() == 0.0);
  CHECK((d.pi1 - Vec(l.c.lap1 * f1 + f1)).norm() == 0.0);
  CHECK(d.r1 < 1e-12 * d.scale);
  CHECK(d.r2 < 1e-12 * d.scale);
  // two nonzero nodes of opposite sign in delta of a unit edge
  int nonzero = 0;
  for (int i = 0; i < 4; ++i) nonzero += std::abs(d.a0[i]) > 1e-14;
  CHECK(nonzero == 2);
  CHECK(std::abs(d.a0.sum()) < 1e-14);

  Vec a1 = Vec::Zero(4);
  a1[2] = 1.0;
  const CauchyData e = make_constrained(l.c, l.m2, Vec(Vec::Zero(4)), std::nullopt, a1);
  CHECK((e.pi0 + Vec(l.c.delta1 * a1)).norm() == 0.0);
  CHECK(e.a0.norm() == 0.0);
  CHECK(e.pi1.norm() == 0.0);
  CHECK(e.admissible);
}

TEST_CASE("constrained generators work on the torus with f2") {
  Xorshift64Star rng(3);
  const HodgeComplex c = build_complex(build_mesh(2, {4, 4}, {1.0}, 1.0));
  const Vec f1 = rng.vector(c.mesh.edge_count());
  const Vec f2 = rng.vector(c.mesh.face_count());
  const Vec a1 = rng.vector(c.mesh.edge_count());
  const CauchyData d = make_constrained(c, 1.0, f1, f2, a1);
  CHECK(d.r1 < 1e-10 * d.scale);
  CHECK(d.r2 < 1e-10 * d.scale);
}

TEST_CASE("evolution at t = 0 is the identity") {
  Xorshift64Star rng(5);
  const Lab l = flat_lab(8);
  const CauchyData d = random_admissible(l, rng);
  const CauchyData e = evolve_ultrastatic(l.c, d, 0.0, l.s0, l.s1);
  CHECK((e.a0 - d.a0).norm() < 1e-12 * d.scale);
  CHECK((e.pi0 - d.pi0).norm() < 1e-12 * d.scale);
  CHECK((e.a1 - d.a1).norm() < 1e-12 * d.scale);
  CHECK((e.pi1 - d.pi1).norm() < 1e-12 * d.scale);
}

TEST_CASE("evolution is a flow: evolve(t) then evolve(-t) is the identity") {
  Xorshift64Star rng(7);
  const Lab l = flat_lab(8);
  const CauchyData d = random_admissible(l, rng);
  const CauchyData e = evolve_ultrastatic(l.c, evolve_ultrastatic(l.c, d, 1.37, l.s0, l.s1), -1.37,
                                          l.s0, l.s1);
  CHECK((e.a1 - d.a1).norm() < 1e-10 * d.scale);
  CHECK((e.pi1 - d.pi1).norm() < 1e-10 * d.scale);
  CHECK((e.a0 - d.a0).norm() < 1e-10 * d.scale);
}

TEST_CASE("single-mode data oscillates at sqrt(lambda + m^2)") {
  // flat circle N = 4, m = 1: mode with lambda = 2 has frequency sqrt(3)
  const Lab l = flat_lab(4);
  int mode = -1;
  for (int i = 0; i < 4; ++i)
    if (std::abs(l.s1.eigenvalues[i] - 2.0) < 1e-9) mode = i;
  REQUIRE(mode >= 0);
  const Vec a1 = l.s1.eigenvectors.col(mode);
  // pure-position eigenmode datum: a1 free generator, pi1 = 0
  const CauchyData d = make_constrained(l.c, l.m2, Vec(Vec::Zero(4)), std::nullopt, a1);
  REQUIRE(d.admissible);
  const double t = 0.83;
  const CauchyData e = evolve_ultrastatic(l.c, d, t, l.s0, l.s1);
  CHECK((e.a1 - std::cos(std::sqrt(3.0) * t) * a1).norm() < 1e-10);
}

TEST_CASE("constraints propagate along the flow") {
  Xorshift64Star rng(9);
  const Lab l = flat_lab(8, 0.25);
  const CauchyData d = random_admissible(l, rng);
  for (double t : {0.3, 1.7, 5.0}) {
    const CauchyData e = evolve_ultrastatic(l.c, d, t, l.s0, l.s1);
    CHECK(e.r1 < 1e-9 * e.scale);
    CHECK(e.r2 < 1e-9 * e.scale);
  }
  CHECK_THROWS(evolve_ultrastatic(
      l.c, finish_cauchy_data(l.c, l.m2, rng.vector(8), rng.vector(8), rng.vector(8), rng.vector(8)),
      0.5, l.s0, l.s1));
}

TEST_CASE("symplectic form is antisymmetric and equal through both routes") {
  Xorshift64Star rng(11);
  const Lab l = flat_lab(8);
  const CauchyData a = random_admissible(l, rng);
  const CauchyData b = random_admissible(l, rng);
  CHECK(symplectic_form(l.c, a, a) == 0.0);
  const double s1 = symplectic_form(l.c, a, b);
  CHECK(std::abs(s1 + symplectic_form(l.c, b, a)) < 1e-14 * std::abs(s1));
  const double s2 = symplectic_form_sectors(l.c, a, b);
  CHECK(std::abs(s1 - s2) < 1e-10 * std::max(std::abs(s1), 1.0));
}

TEST_CASE("symplectic form is conserved by the flow") {
  Xorshift64Star rng(13);
  const Lab l = flat_lab(8);
  const CauchyData a = random_admissible(l, rng);
  const CauchyData b = random_admissible(l, rng);
  const double s0 = symplectic_form(l.c, a, b);
  for (double t : {0.3, 1.7}) {
    const CauchyData at = evolve_ultrastatic(l.c, a, t, l.s0, l.s1);
    const CauchyData bt = evolve_ultrastatic(l.c, b, t, l.s0, l.s1);
    CHECK(std::abs(symplectic_form(l.c, at, bt) - s0) < 1e-9 * std::max(std::abs(s0), 1.0));
  }
}

TEST_CASE("energy: zero data has zero energy") {
  const Lab l = flat_lab(8);
  const Vec z = Vec::Zero(8);
  const CauchyData d = make_constrained(l.c, l.m2, z, std::nullopt, z);
  const EnergyReport e = energy(l.c, l.m2, d);
  CHECK(e.density_form == 0.0);
  CHECK(e.spectral_form == 0.0);
}

TEST_CASE("energy routes agree on admissible data and the value is positive") {
  Xorshift64Star rng(17);
  const Lab l = flat_lab(8);
  Vec a1 = Vec::Zero(8);
  a1[3] = 1.0;
  const CauchyData unit = make_constrained(l.c, l.m2, Vec(Vec::Zero(8)), std::nullopt, a1);
  const EnergyReport e0 = energy(l.c, l.m2, unit);
  CHECK(e0.density_form > 0.0);
  CHECK(std::abs(e0.density_form - e0.spectral_form) < 1e-10 * e0.density_form);

  for (int rep = 0; rep < 5; ++rep) {
    const CauchyData d = random_admissible(l, rng);
    const EnergyReport e = energy(l.c, l.m2, d);
    CHECK(e.density_form > 0.0);
    CHECK(std::abs(e.density_form - e.spectral_form) < 1e-10 * e.density_form);
  }
}

TEST_CASE("energy is conserved by the flow") {
  Xorshift64Star rng(19);
  const Lab l = flat_lab(8);
  const CauchyData d = random_admissible(l, rng);
  const EnergyReport e0 = energy(l.c, l.m2, d);
  for (double t : {2.1, 5.0}) {
    const CauchyData dd = evolve_ultrastatic(l.c, d, t, l.s0, l.s1);
    const EnergyReport et = energy(l.c, l.m2, dd);
    CHECK(std::abs(et.density_form - e0.density_form) < 1e-10 * e0.density_form);
    CHECK(std::abs(et.spectral_form - e0.spectral_form) < 1e-10 * e0.density_form);
  }
}

TEST_CASE("energy equality fails off the constrained space") {
  Xorshift64Star rng(23);
  const Lab l = flat_lab(8);
  const CauchyData bad =
      finish_cauchy_data(l.c, l.m2, rng.vector(8), rng.vector(8), rng.vector(8), rng.vector(8));
  CHECK_FALSE(bad.admissible);
  CHECK_THROWS(energy(l.c, l.m2, bad));
  const EnergyReport e = energy(l.c, l.m2, bad, /*require_admissible=*/false);
  CHECK(std::abs(e.density_form - e.spectral_form) > 1e-3 * std::abs(e.density_form));
}

TEST_CASE("sigma has full rank on the spanning set of the constrained space") {
  const Lab l = flat_lab(8);
  const auto fam = constrained_spanning_set(l.c, l.m2);
  for (const CauchyData& d : fam) CHECK(d.admissible);
  const Mat gram = sigma_gram(l.c, fam);
  CHECK(numerical_rank(gram, 1e-9) == 2 * l.c.mesh.edge_count());

  const HodgeComplex torus = build_complex(build_mesh(2, {4, 4}, {1.0}, 1.0));
  const auto fam2 = constrained_spanning_set(torus, 1.0);
  CHECK(numerical_rank(sigma_gram(torus, fam2), 1e-9) == 2 * torus.mesh.edge_count());
}

TEST_CASE("leapfrog clock converges quadratically to the exact flow") {
  // single dt-refinement smoke test: evolve one spatial mode with the
  // time-stepped second difference (the assembled operator's ultrastatic
  // action) and compare against the exact oscillator at a fixed time
  const Lab l = flat_lab(8);
  int mode = -1;
  for (int i = 0; i < 8; ++i)
    if (std::abs(l.s1.eigenvalues[i] - 2.0) < 1e-9) mode = i;
  REQUIRE(mode >= 0);
  const Vec e = l.s1.eigenvectors.col(mode);
  const double omega = std::sqrt(3.0), t_final = 2.0;

  const auto leapfrog_error = [&](double dt) {
    const int steps = static_cast<int>(t_final / dt + 0.5);
    Vec prev = e;  // u(0) = e, exact u(-dt) = cos(omega dt) e starts the clock
    Vec cur = std::cos(omega * dt) * e;
    for (int k = 1; k < steps; ++k) {
      const Vec next = 2.0 * cur - prev - dt * dt * Vec(l.c.lap1 * cur + l.m2 * cur);
      prev = cur;
      cur = next;
    }
    return (cur - std::cos(omega * t_final) * e).norm();
  };

  const double e1 = leapfrog_error(0.2);
  const double e2 = leapfrog_error(0.1);
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.0);
}
