#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "procalab/mesh.hpp"
#include "procalab/spacetime.hpp"
#include "procalab/spectral.hpp"

namespace procalab {

// Constrained Cauchy quadruple (a0, pi0, a1, pi1). The stored residuals are
//   r1 = |pi0 + delta1 a1|,   r2 = |(lap0 + m^2) a0 - delta1 pi1|
// and the datum is admissible when both are below 1e-9 * scale.
struct CauchyData {
  Vec a0, pi0;  // 0-forms
  Vec a1, pi1;  // 1-forms
  double r1 = 0.0, r2 = 0.0;
  double scale = 0.0;
  bool admissible = false;
};

inline constexpr double kAdmissibleTol = 1e-9;

inline CauchyData finish_cauchy_data(const HodgeComplex& c, double mass_sq, Vec a0, Vec pi0,
                                     Vec a1, Vec pi1) {
  CauchyData d;
  d.a0 = std::move(a0);
  d.pi0 = std::move(pi0);
  d.a1 = std::move(a1);
  d.pi1 = std::move(pi1);
  if (d.a0.size() != c.mesh.node_count() || d.pi0.size() != c.mesh.node_count() ||
      d.a1.size() != c.mesh.edge_count() || d.pi1.size() != c.mesh.edge_count())
    throw std::invalid_argument("cauchy data does not match mesh");
  d.scale = std::max({d.a0.norm(), d.pi0.norm(), d.a1.norm(), d.pi1.norm(), 1e-300});
  d.r1 = (d.pi0 + c.delta1 * d.a1).norm();
  d.r2 = (c.lap0 * d.a0 + mass_sq * d.a0 - c.delta1 * d.pi1).norm();
  d.admissible = d.r1 < kAdmissibleTol * d.scale && d.r2 < kAdmissibleTol * d.scale;
  return d;
}

// Data built from free generators (f1, f2, a1): both constraints hold by
// construction, since delta1 (lap1 + m^2) = (lap0 + m^2) delta1 and
// delta1 delta2 = 0 at matrix level.
inline CauchyData make_constrained(const HodgeComplex& c, double mass_sq, const Vec& f1,
                                   const std::optional<Vec>& f2, const Vec& a1) {
  if (f1.size() != c.mesh.edge_count() || a1.size() != c.mesh.edge_count())
    throw std::invalid_argument("make_constrained: 1-form size mismatch");
  if (f2 && c.mesh.dim != 2) throw std::invalid_argument("make_constrained: f2 requires dim 2");
  Vec a0 = c.delta1 * f1;
  Vec pi1 = c.lap1 * f1 + mass_sq * f1;
  if (f2) {
    if (f2->size() != c.mesh.face_count()) throw std::invalid_argument("make_constrained: f2 size mismatch");
    pi1 += c.delta2 * (*f2);
  }
  Vec pi0 = -(c.delta1 * a1);
  return finish_cauchy_data(c, mass_sq, std::move(a0), std::move(pi0), a1, std::move(pi1));
}

// Spanning set of the constrained space: images of the canonical basis of
// (f1, f2, a1). Dimension of the constrained space itself is 2 * n_edges.
inline std::vector<CauchyData> constrained_spanning_set(const HodgeComplex& c, double mass_sq) {
  std::vector<CauchyData> out;
  const int n1 = c.mesh.edge_count(), n2 = c.mesh.face_count();
  const Vec z1 = Vec::Zero(n1);
  for (int i = 0; i < n1; ++i) {
    Vec f1 = Vec::Zero(n1);
    f1[i] = 1.0;
    out.push_back(make_constrained(c, mass_sq, f1, std::nullopt, z1));
  }
  for (int i = 0; i < n2; ++i) {
    Vec f2 = Vec::Zero(n2);
    f2[i] = 1.0;
    out.push_back(make_constrained(c, mass_sq, z1, f2, z1));
  }
  for (int i = 0; i < n1; ++i) {
    Vec a1 = Vec::Zero(n1);
    a1[i] = 1.0;
    out.push_back(make_constrained(c, mass_sq, z1, std::nullopt, a1));
  }
  return out;
}

// Exact spectral flow, no time stepping: per sector j,
//   a(t) = cos(t H) a + H^{-1} sin(t H) pi,  pi(t) = -H sin(t H) a + cos(t H) pi
// with H = (lap_j + m^2)^{1/2}. Constraints propagate because the flow
// commutes with delta through the spectral calculus.
inline CauchyData evolve_ultrastatic(const HodgeComplex& c, const CauchyData& d, double t,
                                     const Spectrum& s0, const Spectrum& s1) {
  if (!d.admissible) throw std::invalid_argument("evolve_ultrastatic: data violates the constraints");
  if (s0.mass_sq != s1.mass_sq) throw std::invalid_argument("evolve_ultrastatic: spectra mass mismatch");
  const auto cs = [t](double x) { return std::cos(t * std::sqrt(x)); };
  const auto sn_over = [t](double x) {
    const double w = std::sqrt(x);
    return std::sin(t * w) / w;
  };
  const auto w_sn = [t](double x) {
    const double w = std::sqrt(x);
    return -w * std::sin(t * w);
  };
  Vec a0 = apply_function(s0, cs, d.a0) + apply_function(s0, sn_over, d.pi0);
  Vec pi0 = apply_function(s0, w_sn, d.a0) + apply_function(s0, cs, d.pi0);
  Vec a1 = apply_function(s1, cs, d.a1) + apply_function(s1, sn_over, d.pi1);
  Vec pi1 = apply_function(s1, w_sn, d.a1) + apply_function(s1, cs, d.pi1);
  return finish_cauchy_data(c, s0.mass_sq, std::move(a0), std::move(pi0), std::move(a1),
                            std::move(pi1));
}

// Slice symplectic form, field-strength route:
//   sigma(A, A') = <a1, pi1' - d a0'> - <a1', pi1 - d a0>
inline double symplectic_form(const HodgeComplex& c, const CauchyData& a, const CauchyData& b) {
  const Vec fa = a.pi1 - c.d0 * a.a0;
  const Vec fb = b.pi1 - c.d0 * b.a0;
  return inner_product(c, 1, a.a1, fb) - inner_product(c, 1, b.a1, fa);
}

// Same form rearranged into the two Klein-Gordon sector forms with signs
// eta_0 = -1, eta_1 = +1; agrees with symplectic_form on admissible pairs.
inline double symplectic_form_sectors(const HodgeComplex& c, const CauchyData& a,
                                      const CauchyData& b) {
  const double s0 = inner_product(c, 0, a.a0, b.pi0) - inner_product(c, 0, b.a0, a.pi0);
  const double s1 = inner_product(c, 1, a.a1, b.pi1) - inner_product(c, 1, b.a1, a.pi1);
  return s1 - s0;
}

struct EnergyReport {
  double density_form = 0.0;   // integral of the nonnegative energy density
  double spectral_form = 0.0;  // sector difference of Klein-Gordon energies
};

inline EnergyReport energy(const HodgeComplex& c, double mass_sq, const CauchyData& d,
                           bool require_admissible = true) {
  if (require_admissible && !d.admissible)
    throw std::invalid_argument("energy: data violates the constraints");
  EnergyReport r;
  const Vec f = d.pi1 - c.d0 * d.a0;
  double e = inner_product(c, 1, f, f);
  if (c.mesh.dim == 2) {
    const Vec da1 = c.d1 * d.a1;
    e += inner_product(c, 2, da1, da1);
  }
  e += mass_sq * (inner_product(c, 1, d.a1, d.a1) + inner_product(c, 0, d.a0, d.a0));
  r.density_form = 0.5 * e;

  const auto sector = [&](int j, const Vec& a, const Vec& pi, const SpMat& lap) {
    return 0.5 * (inner_product(c, j, pi, pi) +
                  inner_product(c, j, a, Vec(lap * a + mass_sq * a)));
  };
  r.spectral_form = sector(1, d.a1, d.pi1, c.lap1) - sector(0, d.a0, d.pi0, c.lap0);
  return r;
}

// Gram matrix of the symplectic form over a family of data.
inline Mat sigma_gram(const HodgeComplex& c, const std::vector<CauchyData>& fam) {
  const int n = static_cast<int>(fam.size());
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = symplectic_form(c, fam[i], fam[j]);
  return m;
}

inline int numerical_rank(const Mat& m, double rel_tol = 1e-9) {
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec s = svd.singularValues();
  if (s.size() == 0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * s[0]) ++r;
  return r;
}

// Cauchy data of a section read off slice k: derivative components by central
// difference, A0 by the average of the two adjacent half-step values. For
// solutions of the assembled operators these reads satisfy the constraints
// exactly and make the slice symplectic form independent of k.
inline CauchyData read_cauchy_data(const SpacetimeGrid& g, const HodgeComplex& c,
                                   const Vec& section, int k) {
  if (k < 1 || k + 1 >= g.time_steps)
    throw std::invalid_argument("read_cauchy_data: slice must have both neighbours");
  Vec a1 = g.a1_slice(section, k);
  Vec pi1 = (Vec(g.a1_slice(section, k + 1)) - Vec(g.a1_slice(section, k - 1))) / (2.0 * g.dt);
  Vec a0 = 0.5 * (Vec(g.a0_slice(section, k)) + Vec(g.a0_slice(section, k - 1)));
  Vec pi0 = (Vec(g.a0_slice(section, k)) - Vec(g.a0_slice(section, k - 1))) / g.dt;
  return finish_cauchy_data(c, g.mass_sq, std::move(a0), std::move(pi0), std::move(a1),
                            std::move(pi1));
}

}  // namespace procalab
