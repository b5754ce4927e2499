#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

#include "procalab/mesh.hpp"

namespace procalab {

// Full spectrum of the weighted-symmetric Hodge Laplacian of degree j.
// Eigenvectors are orthonormal under the w_j inner product; functions of
// lap_j + m^2 act as V diag(fn(lambda + m^2)) V^sharp with V^sharp = V^T W.
struct Spectrum {
  int degree = 0;
  double mass_sq = 1.0;
  Vec eigenvalues;   // nondecreasing, kernel clamped to exact zero
  Mat eigenvectors;  // columns, W-orthonormal
  Vec w;             // inner-product weights of this degree
};

inline const SpMat& laplacian(const HodgeComplex& c, int degree) {
  switch (degree) {
    case 0: return c.lap0;
    case 1: return c.lap1;
    default: throw std::invalid_argument("laplacian: spectra exposed for degrees 0 and 1");
  }
}

namespace detail {

// degree-2 Laplacian (top forms, dim 2): d1 delta2 only; built on demand for
// the intertwining checks that step one degree up from j = 1.
inline SpMat laplacian2(const HodgeComplex& c) { return SpMat(c.d1 * c.delta2); }

inline Spectrum eigendecompose_weighted(const SpMat& lap, const Vec& w, int degree, double mass_sq) {
  const Vec ws = w.cwiseSqrt();
  // similarity transform to a plain-symmetric matrix: W^{1/2} L W^{-1/2}
  Mat b = ws.asDiagonal() * Mat(lap) * Vec(ws.cwiseInverse()).asDiagonal();
  b = 0.5 * (b + b.transpose());  // kill roundoff asymmetry
  Eigen::SelfAdjointEigenSolver<Mat> es(b);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecompose: solver failed to converge");
  Spectrum s;
  s.degree = degree;
  s.mass_sq = mass_sq;
  s.eigenvalues = es.eigenvalues();
  s.eigenvectors = Vec(ws.cwiseInverse()).asDiagonal() * es.eigenvectors();
  s.w = w;
  const double lmax = std::max(s.eigenvalues.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
    if (std::abs(s.eigenvalues[i]) < 1e-12 * lmax) s.eigenvalues[i] = 0.0;
  return s;
}

}  // namespace detail

inline Spectrum eigendecompose(const HodgeComplex& c, int degree, double mass_sq) {
  if (!(mass_sq > 0.0)) throw std::invalid_argument("eigendecompose: mass_sq must be positive");
  if (degree == 2 && c.mesh.dim == 2)
    return detail::eigendecompose_weighted(detail::laplacian2(c), c.w2, 2, mass_sq);
  return detail::eigendecompose_weighted(laplacian(c, degree), weight(c, degree), degree, mass_sq);
}

// Dense matrix of fn(lap + m^2) in the coefficient basis.
inline Mat spectral_matrix(const Spectrum& s, const std::function<double(double)>& fn) {
  Vec fl(s.eigenvalues.size());
  for (Eigen::Index i = 0; i < fl.size(); ++i) {
    const double v = fn(s.eigenvalues[i] + s.mass_sq);
    if (!std::isfinite(v)) throw std::domain_error("spectral_matrix: fn not finite on spectrum");
    fl[i] = v;
  }
  // V diag(f) V^T W
  return s.eigenvectors * fl.asDiagonal() * s.eigenvectors.transpose() * s.w.asDiagonal();
}

inline Vec apply_function(const Spectrum& s, const std::function<double(double)>& fn, const Vec& f) {
  if (f.size() != s.eigenvectors.rows())
    throw std::invalid_argument("apply_function: field size mismatch");
  const Vec coeff = s.eigenvectors.transpose() * s.w.cwiseProduct(f);
  Vec scaled(coeff.size());
  for (Eigen::Index i = 0; i < coeff.size(); ++i) {
    const double v = fn(s.eigenvalues[i] + s.mass_sq);
    if (!std::isfinite(v)) throw std::domain_error("apply_function: fn not finite on spectrum");
    scaled[i] = v * coeff[i];
  }
  return s.eigenvectors * scaled;
}

inline FormField apply_function(const Spectrum& s, const std::function<double(double)>& fn,
                                const FormField& f) {
  if (f.degree != s.degree) throw std::invalid_argument("apply_function: degree mismatch");
  return FormField{f.degree, apply_function(s, fn, f.values)};
}

inline Vec apply_power(const Spectrum& s, double alpha, const Vec& f) {
  return apply_function(s, [alpha](double x) { return std::pow(x, alpha); }, f);
}

struct IntertwineReport {
  double d_residual = 0.0;      // (lap_{j+1}+m^2)^a d_j  vs  d_j (lap_j+m^2)^a
  double delta_residual = 0.0;  // (lap_j+m^2)^a delta_{j+1}  vs  delta_{j+1} (lap_{j+1}+m^2)^a
  double max() const { return std::max(d_residual, delta_residual); }
};

// Relative commutator norm of fractional powers of lap + m^2 across one
// degree of the complex, in both the d and the delta direction.
inline IntertwineReport intertwine_residual(const HodgeComplex& c, int j, double alpha,
                                            double mass_sq) {
  if (j < 0 || j >= c.mesh.dim) throw std::invalid_argument("intertwine_residual: d^(j) must exist");
  const Spectrum lo = eigendecompose(c, j, mass_sq);
  const Spectrum hi = eigendecompose(c, j + 1, mass_sq);
  const auto pw = [alpha](double x) { return std::pow(x, alpha); };
  const Mat flo = spectral_matrix(lo, pw);
  const Mat fhi = spectral_matrix(hi, pw);
  const Mat d = j == 0 ? Mat(c.d0) : Mat(c.d1);
  const Mat del = j == 0 ? Mat(c.delta1) : Mat(c.delta2);

  IntertwineReport r;
  const Mat lhs_d = fhi * d, rhs_d = d * flo;
  r.d_residual = (lhs_d - rhs_d).norm() / std::max(lhs_d.norm(), 1e-300);
  const Mat lhs_e = flo * del, rhs_e = del * fhi;
  r.delta_residual = (lhs_e - rhs_e).norm() / std::max(lhs_e.norm(), 1e-300);
  return r;
}

}  // namespace procalab
