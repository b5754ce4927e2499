#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "procalab/cauchy.hpp"
#include "procalab/green.hpp"
#include "procalab/mesh.hpp"
#include "procalab/spacetime.hpp"
#include "procalab/spectral.hpp"

namespace procalab {

using Complex = std::complex<double>;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;

enum class EvalMode { Proca, KgScalar, KgVector };

// Quasifree state of the constrained field on an ultrastatic grid. The
// covariance is carried by the slice data of causally solved sections:
//   omega_2(f, f') = mu(data G f, data G f') + (i/2) pairing(f, G f')
// with mu built from H^{+-1/2} = (lap_j + m^2)^{+-1/2} per sector and the
// sector signs eta_0 = -1, eta_1 = +1. The imaginary part always goes
// through the pairing route; the slice-read symplectic form is kept as an
// independent cross-check (see sigma_slice_audit).
struct QuasifreeState {
  const SpacetimeGrid* grid = nullptr;
  HodgeComplex complex;
  Spectrum spec0, spec1;
  Mat hp0, hm0, hp1, hm1;  // dense H^{+1/2}, H^{-1/2} per sector
  GreenSolver solver_p, solver_n;
  SpMat q;
  int ref_slice = 0;
  EvalMode mode = EvalMode::Proca;
};

inline QuasifreeState make_state(const SpacetimeGrid& grid, EvalMode mode = EvalMode::Proca) {
  if (!grid.ultrastatic()) throw std::invalid_argument("make_state: grid must be ultrastatic");
  QuasifreeState s;
  s.grid = &grid;
  SpatialMesh mesh = grid.mesh;
  mesh.metric = grid.h[0];
  s.complex = build_complex(mesh);
  s.spec0 = eigendecompose(s.complex, 0, grid.mass_sq);
  s.spec1 = eigendecompose(s.complex, 1, grid.mass_sq);
  const auto sqrt_fn = [](double x) { return std::sqrt(x); };
  const auto isqrt_fn = [](double x) { return 1.0 / std::sqrt(x); };
  s.hp0 = spectral_matrix(s.spec0, sqrt_fn);
  s.hm0 = spectral_matrix(s.spec0, isqrt_fn);
  s.hp1 = spectral_matrix(s.spec1, sqrt_fn);
  s.hm1 = spectral_matrix(s.spec1, isqrt_fn);
  s.solver_p = make_green_solver(grid, OperatorKind::Proca);
  s.solver_n = make_green_solver(grid, OperatorKind::KG);
  s.q = assemble_q(grid).mat;
  s.ref_slice = grid.time_steps / 2;
  s.mode = mode;
  return s;
}

// mu covariance on Cauchy data; positivity is a theorem on the constrained
// space only, so admissibility is enforced unless the caller opts out (the
// Klein-Gordon sector evaluations legitimately do).
inline double mu_form(const QuasifreeState& s, const CauchyData& a, const CauchyData& b,
                      bool require_admissible = true) {
  if (require_admissible && (!a.admissible || !b.admissible))
    throw std::invalid_argument("mu_form: data violates the constraints");
  const HodgeComplex& c = s.complex;
  const double sector0 =
      0.5 * (inner_product(c, 0, a.pi0, Vec(s.hm0 * b.pi0)) +
             inner_product(c, 0, a.a0, Vec(s.hp0 * b.a0)));
  const double sector1 =
      0.5 * (inner_product(c, 1, a.pi1, Vec(s.hm1 * b.pi1)) +
             inner_product(c, 1, a.a1, Vec(s.hp1 * b.a1)));
  return sector1 - sector0;
}

// sector pairings: pairing = pair1 - pair0 with the Lorentzian sign on the
// temporal components
inline double sector_pairing0(const SpacetimeGrid& g, const Vec& f, const Vec& h) {
  double acc = 0.0;
  for (int i = 0; i < g.a0_dim(); ++i) acc -= g.sec_w[i] * f[i] * h[i];
  return acc;
}
inline double sector_pairing1(const SpacetimeGrid& g, const Vec& f, const Vec& h) {
  double acc = 0.0;
  for (int i = g.a0_dim(); i < g.sec_dim(); ++i) acc += g.sec_w[i] * f[i] * h[i];
  return acc;
}

struct TwoPointReport {
  Complex value;
  double mu_part = 0.0;
  double sigma_part = 0.0;
  std::string provenance;
};

inline void check_margined(const QuasifreeState& s, const Vec& f, const char* who) {
  if (!is_margined(*s.grid, f, s.grid->margin))
    throw std::invalid_argument(std::string(who) + ": test section enters the margins");
}

inline TwoPointReport two_point(const QuasifreeState& s, const Vec& f, const Vec& fp) {
  check_margined(s, f, "two_point");
  check_margined(s, fp, "two_point");
  const SpacetimeGrid& g = *s.grid;
  TwoPointReport r;
  if (s.mode == EvalMode::Proca) {
    const Vec uf = causal_propagator(s.solver_p, f);
    const Vec up = causal_propagator(s.solver_p, fp);
    const CauchyData da = read_cauchy_data(g, s.complex, uf, s.ref_slice);
    const CauchyData db = read_cauchy_data(g, s.complex, up, s.ref_slice);
    // slice data of causal solutions is admissible by construction; the gate
    // is skipped so that null directions (operator images) evaluate to the
    // noise floor instead of tripping on their own roundoff
    r.mu_part = mu_form(s, da, db, /*require_admissible=*/false);
    r.sigma_part = lorentz_pairing(g, f, up);
    r.provenance = "proca: mu on solved slice data, sigma by pairing";
  } else {
    const Vec uf = causal_propagator(s.solver_n, f);
    const Vec up = causal_propagator(s.solver_n, fp);
    const CauchyData da = read_cauchy_data(g, s.complex, uf, s.ref_slice);
    const CauchyData db = read_cauchy_data(g, s.complex, up, s.ref_slice);
    if (s.mode == EvalMode::KgVector) {
      r.mu_part = 0.5 * (inner_product(s.complex, 1, da.pi1, Vec(s.hm1 * db.pi1)) +
                         inner_product(s.complex, 1, da.a1, Vec(s.hp1 * db.a1)));
      r.sigma_part = sector_pairing1(g, f, up);
      r.provenance = "kg vector sector";
    } else {
      r.mu_part = 0.5 * (inner_product(s.complex, 0, da.pi0, Vec(s.hm0 * db.pi0)) +
                         inner_product(s.complex, 0, da.a0, Vec(s.hp0 * db.a0)));
      r.sigma_part = sector_pairing0(g, f, up);
      r.provenance = "kg scalar sector";
    }
  }
  r.value = Complex(r.mu_part, 0.5 * r.sigma_part);
  return r;
}

// Audit of the slice-read symplectic form against the pairing route. The
// two routes agree in magnitude; the report records their relative sign so
// downstream consumers see the orientation actually realized.
struct SigmaAudit {
  double slice_value = 0.0;
  double pairing_value = 0.0;
  double sign = 0.0;            // sign(slice*pairing)
  double mismatch = 0.0;        // | |slice| - |pairing| | / max(|pairing|, eps)
};

inline SigmaAudit sigma_slice_audit(const QuasifreeState& s, const Vec& f, const Vec& fp) {
  const Vec uf = causal_propagator(s.solver_p, f);
  const Vec up = causal_propagator(s.solver_p, fp);
  const CauchyData da = read_cauchy_data(*s.grid, s.complex, uf, s.ref_slice);
  const CauchyData db = read_cauchy_data(*s.grid, s.complex, up, s.ref_slice);
  SigmaAudit a;
  a.slice_value = symplectic_form(s.complex, da, db);
  a.pairing_value = lorentz_pairing(*s.grid, f, up);
  a.sign = (a.slice_value * a.pairing_value) >= 0.0 ? 1.0 : -1.0;
  a.mismatch = std::abs(std::abs(a.slice_value) - std::abs(a.pairing_value)) /
               std::max(std::abs(a.pairing_value), 1e-300);
  return a;
}

// --- Klein-Gordon covariances on unconstrained sector data ---------------

struct KgData {
  VecC a, pi;  // complex j-form data, no constraints
};

namespace detail {

inline VecC apply_real(const Mat& m, const VecC& v) {
  return (m * v.real()).cast<Complex>() + Complex(0, 1) * (m * v.imag()).cast<Complex>();
}

// bilinear weighted product, no conjugation
inline Complex bilinear_ip(const Vec& w, const VecC& x, const VecC& y) {
  return x.cwiseProduct(w.cast<Complex>()).cwiseProduct(y).sum();
}

}  // namespace detail

inline Complex kg_covariance(const QuasifreeState& s, int sign, int j, const KgData& a,
                             const KgData& b) {
  if (j != 0 && j != 1) throw std::invalid_argument("kg_covariance: sector must be 0 or 1");
  const Vec& w = j == 0 ? s.complex.w0 : s.complex.w1;
  const Mat& hp = j == 0 ? s.hp0 : s.hp1;
  const Mat& hm = j == 0 ? s.hm0 : s.hm1;
  if (a.a.size() != w.size() || b.a.size() != w.size())
    throw std::invalid_argument("kg_covariance: sector data size mismatch");
  const auto ip = [&](const VecC& x, const VecC& y) { return detail::bilinear_ip(w, x, y); };
  // sigma_j(conj(A), B) with the bilinear slice form <a, pi'> - <a', pi>
  const Complex sig = ip(a.a.conjugate(), b.pi) - ip(b.a, a.pi.conjugate());
  const Complex mu = 0.5 * (ip(a.pi.conjugate(), detail::apply_real(hm, b.pi)) +
                            ip(a.a.conjugate(), detail::apply_real(hp, b.a)));
  if (sign > 0) return mu + Complex(0, 0.5) * sig;
  return mu - Complex(0, 0.5) * sig;
}

// --- Fewster-Pfenning style two-point function ----------------------------

// W(f, g): difference of the vector and scalar sector covariances evaluated
// on Klein-Gordon solved data; the equivalence check compares omega_2(f, f')
// against W(f, Q f').
inline Complex fp_w(const QuasifreeState& s, const Vec& f, const Vec& g) {
  const SpacetimeGrid& gr = *s.grid;
  const Vec uf = causal_propagator(s.solver_n, f);
  const Vec ug = causal_propagator(s.solver_n, g);
  const CauchyData da = read_cauchy_data(gr, s.complex, uf, s.ref_slice);
  const CauchyData db = read_cauchy_data(gr, s.complex, ug, s.ref_slice);
  const double mu1 = 0.5 * (inner_product(s.complex, 1, da.pi1, Vec(s.hm1 * db.pi1)) +
                            inner_product(s.complex, 1, da.a1, Vec(s.hp1 * db.a1)));
  const double mu0 = 0.5 * (inner_product(s.complex, 0, da.pi0, Vec(s.hm0 * db.pi0)) +
                            inner_product(s.complex, 0, da.a0, Vec(s.hp0 * db.a0)));
  const double sig = lorentz_pairing(gr, f, ug);
  return Complex(mu1 - mu0, 0.5 * sig);
}

struct FpReport {
  double residual = 0.0;  // |omega_2(f,f') - W(f, Q f')|
  double scale = 0.0;     // sqrt(|omega_2(f,f)| |omega_2(f',f')|)
};

inline FpReport fp_equivalence(const QuasifreeState& s, const Vec& f, const Vec& fp) {
  check_margined(s, f, "fp_equivalence");
  check_margined(s, fp, "fp_equivalence");
  FpReport r;
  const Complex lhs = two_point(s, f, fp).value;
  const Vec qfp = masked(*s.grid, Vec(s.q * fp), 1);
  const Complex rhs = fp_w(s, f, qfp);
  r.residual = std::abs(lhs - rhs);
  const double na = two_point(s, f, f).value.real();
  const double nb = two_point(s, fp, fp).value.real();
  r.scale = std::sqrt(std::abs(na) * std::abs(nb)) + 1e-300;
  return r;
}

// --- Wick expansion -------------------------------------------------------

// Cache of solved sections so n-point batteries reuse Green solves.
struct TwoPointCache {
  const QuasifreeState* state;
  std::vector<Vec> sections;
  std::vector<Vec> solved;
  std::vector<CauchyData> data;
};

inline TwoPointCache make_cache(const QuasifreeState& s, const std::vector<Vec>& sections) {
  TwoPointCache c;
  c.state = &s;
  c.sections = sections;
  for (const Vec& f : sections) {
    check_margined(s, f, "wick_n_point");
    c.solved.push_back(causal_propagator(s.solver_p, f));
    c.data.push_back(read_cauchy_data(*s.grid, s.complex, c.solved.back(), s.ref_slice));
  }
  return c;
}

inline Complex cached_two_point(const TwoPointCache& c, int i, int j) {
  const double mu = mu_form(*c.state, c.data[i], c.data[j]);
  const double sig = lorentz_pairing(*c.state->grid, c.sections[i], c.solved[j]);
  return Complex(mu, 0.5 * sig);
}

namespace detail {

inline Complex wick_sum(const TwoPointCache& c, std::vector<int>& idx) {
  if (idx.empty()) return Complex(1.0, 0.0);
  Complex acc(0.0, 0.0);
  const int first = idx.front();
  for (size_t p = 1; p < idx.size(); ++p) {
    const int partner = idx[p];
    std::vector<int> rest;
    for (size_t q = 1; q < idx.size(); ++q)
      if (q != p) rest.push_back(idx[q]);
    acc += cached_two_point(c, first, partner) * wick_sum(c, rest);
  }
  return acc;
}

}  // namespace detail

// Sum over perfect pairings (i_{2k-1} < i_{2k}) of products of two-point
// values; odd orders vanish identically.
inline Complex wick_n_point(const QuasifreeState& s, const std::vector<Vec>& sections) {
  if (sections.size() % 2 == 1) return Complex(0.0, 0.0);
  if (sections.empty()) return Complex(1.0, 0.0);
  TwoPointCache c = make_cache(s, sections);
  std::vector<int> idx(sections.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return detail::wick_sum(c, idx);
}

// --- Moller pullback ------------------------------------------------------

// Pulled-back evaluator on the target grid of R: omega'_2(f, h) =
// omega_2(R^dag f, R^dag h). The adjoint image of a margined section is
// margined up to truncated boundary rows, which the mask removes.
struct PulledBackState {
  const QuasifreeState* base = nullptr;
  const SpacetimeGrid* grid = nullptr;  // target grid (where test sections live)
  Mat radj;                             // target sections -> base sections
};

inline Complex two_point(const PulledBackState& s, const Vec& f, const Vec& h) {
  const Vec rf = masked(*s.base->grid, Vec(s.radj * f), s.base->grid->margin);
  const Vec rh = masked(*s.base->grid, Vec(s.radj * h), s.base->grid->margin);
  return two_point(*s.base, rf, rh).value;
}

// --- localization ---------------------------------------------------------

// T f = P (chi G f) for a temporal ramp chi: 0 before the window, 1 after.
// The image is supported in the window band and leaves the state invariant.
inline Vec localize(const QuasifreeState& s, const Vec& f, double t_a, double t_b) {
  check_margined(s, f, "localize");
  const SpacetimeGrid& g = *s.grid;
  const double t_lo = g.margin * g.dt, t_hi = (g.time_steps - 1 - g.margin) * g.dt;
  if (!(t_a < t_b) || t_a < t_lo || t_b > t_hi)
    throw std::invalid_argument("localize: window must sit strictly inside the margins");
  const ChiProfile chi = chi_smoothstep(t_a, t_b);
  Vec u = causal_propagator(s.solver_p, f);
  for (int k = 0; k + 1 < g.time_steps; ++k) {
    const double x = chi(g.time(k) + 0.5 * g.dt, 0);
    g.a0_slice(u, k) *= x;
  }
  for (int k = 0; k < g.time_steps; ++k) {
    const double x = chi(g.time(k), 0);
    g.a1_slice(u, k) *= x;
  }
  const SpMat p = assemble_proca(g).mat;
  // the image is supported in the window band, strictly inside the margins;
  // masking removes truncated boundary rows and margin-band solver dust
  return masked(g, Vec(p * u), g.margin);
}

// --- positive-frequency proxy ----------------------------------------------

struct FrequencySpectrum {
  Vec frequencies;            // angular frequency per bin
  Vec magnitudes;             // |X| per bin
  double negative_mass_ratio; // fraction of |X|^2 mass at negative frequency
};

inline Vec time_shift(const SpacetimeGrid& g, const Vec& f, int shift) {
  Vec out = Vec::Zero(g.sec_dim());
  for (int k = 0; k + 1 < g.time_steps; ++k) {
    const int src = k - shift;
    if (src >= 0 && src + 1 < g.time_steps) g.a0_slice(out, k) = g.a0_slice(f, src);
  }
  for (int k = 0; k < g.time_steps; ++k) {
    const int src = k - shift;
    if (src >= 0 && src < g.time_steps) g.a1_slice(out, k) = g.a1_slice(f, src);
  }
  return out;
}

// c(tau) = omega_2(f_tau, f') on an integer offset lattice, Hann-windowed
// discrete Fourier transform, mass ratio by frequency sign. The transform
// sign pairs with the commutator orientation realized by the pairing route
// and the future-supported retarded solver, under which a single mode of
// frequency omega contributes e^{+i omega tau} to c and must register at
// +omega: X(nu) = sum_j w_j c_j e^{-i nu tau_j}.
inline FrequencySpectrum positive_frequency_spectrum(const QuasifreeState& s, const Vec& f,
                                                     const Vec& fp, int n_tau) {
  const SpacetimeGrid& g = *s.grid;
  const int half = n_tau / 2;
  std::vector<Complex> c(n_tau);
  const Vec up = causal_propagator(s.solver_p, fp);
  const CauchyData db = read_cauchy_data(g, s.complex, up, s.ref_slice);
  for (int j = -half; j < n_tau - half; ++j) {
    const Vec fj = time_shift(g, f, j);
    if (!is_margined(g, fj, g.margin))
      throw std::invalid_argument("positive_frequency_spectrum: offsets exceed the margins");
    const Vec uj = causal_propagator(s.solver_p, fj);
    const CauchyData dj = read_cauchy_data(g, s.complex, uj, s.ref_slice);
    const double mu = mu_form(s, dj, db);
    const double sig = lorentz_pairing(g, fj, up);
    c[j + half] = Complex(mu, 0.5 * sig);
  }
  FrequencySpectrum out;
  out.frequencies.resize(n_tau);
  out.magnitudes.resize(n_tau);
  double neg = 0.0, tot = 0.0;
  for (int q = -half; q < n_tau - half; ++q) {
    const double nu = 2.0 * M_PI * q / (n_tau * g.dt);
    Complex x(0.0, 0.0);
    for (int j = 0; j < n_tau; ++j) {
      const double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * j / (n_tau - 1)));
      const double tau = (j - half) * g.dt;
      x += hann * c[j] * std::exp(Complex(0.0, -nu * tau));
    }
    out.frequencies[q + half] = nu;
    out.magnitudes[q + half] = std::abs(x);
    const double m2 = std::norm(x);
    tot += m2;
    if (nu < 0.0) neg += m2;
  }
  out.negative_mass_ratio = tot > 0.0 ? neg / tot : 0.0;
  return out;
}

// Hermitian Gram matrix of two-point values over a battery of real sections.
inline MatC two_point_gram(const QuasifreeState& s, const std::vector<Vec>& sections) {
  TwoPointCache c = make_cache(s, sections);
  const int n = static_cast<int>(sections.size());
  MatC m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cached_two_point(c, i, j);
  return m;
}

}  // namespace procalab
