#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "procalab/mesh.hpp"

namespace procalab {

// Product lattice R x Sigma with lapse 1: time axis of Nt slices times a
// periodic spatial mesh, with a per-slice spatial metric table.
//
// Sections (spacetime 1-forms A = A0 dt + A1) are stored as one flat vector:
//   A0 block: (Nt-1)*n0 values, A0 at temporal-edge midpoints (k+1/2, node)
//   A1 block: Nt*n1 values, spatial-edge components at (k, edge)
// The staggering keeps the spacetime derivative a pure stencil matrix and the
// Lorentzian (-,+,...,+) weights diagonal. Spacetime 2-forms split the same
// way: a (t,x) block at (k+1/2, edge) and, when dim = 2, an (x,y) block at
// (k, face); 3-forms (dim 2) live at (k+1/2, face).
struct SpacetimeGrid {
  SpatialMesh mesh;          // carries lattice shape; per-slice metric below
  int time_steps = 0;        // Nt
  double dt = 0.0;
  int margin = 2;            // slices required static / zero at each end
  double mass_sq = 1.0;
  std::vector<Vec> h;        // per-slice edge metric tables, size Nt

  // derived, filled by build_grid
  std::vector<HodgeWeights> slice_w;  // at integer slices
  std::vector<HodgeWeights> half_w;   // at half slices (k+1/2), size Nt-1
  SpMat sd0, sd1;                     // spatial incidence derivatives
  Vec sec_w, f0_w, f2_w, f3_w;        // signed diagonal Lorentzian weights
  SpMat D0, D1, D2;                   // spacetime derivatives
  SpMat delta10, delta21;             // weighted adjoints of D0, D1

  int n0() const { return mesh.node_count(); }
  int n1() const { return mesh.edge_count(); }
  int n2() const { return mesh.face_count(); }
  int a0_dim() const { return (time_steps - 1) * n0(); }
  int a1_dim() const { return time_steps * n1(); }
  int sec_dim() const { return a0_dim() + a1_dim(); }
  int f0_dim() const { return time_steps * n0(); }
  int f2tx_dim() const { return (time_steps - 1) * n1(); }
  int f2_dim() const { return f2tx_dim() + time_steps * n2(); }
  int f3_dim() const { return (time_steps - 1) * n2(); }

  int a0_idx(int k, int n) const { return k * n0() + n; }            // k+1/2
  int a1_idx(int k, int e) const { return a0_dim() + k * n1() + e; }
  int f0_idx(int k, int n) const { return k * n0() + n; }
  int f2tx_idx(int k, int e) const { return k * n1() + e; }          // k+1/2
  int f2xy_idx(int k, int f) const { return f2tx_dim() + k * n2() + f; }
  int f3_idx(int k, int f) const { return k * n2() + f; }

  double time(int k) const { return k * dt; }

  Eigen::VectorBlock<const Vec> a0_slice(const Vec& s, int k) const {
    return s.segment(a0_idx(k, 0), n0());
  }
  Eigen::VectorBlock<const Vec> a1_slice(const Vec& s, int k) const {
    return s.segment(a1_idx(k, 0), n1());
  }
  Eigen::VectorBlock<Vec> a0_slice(Vec& s, int k) const { return s.segment(a0_idx(k, 0), n0()); }
  Eigen::VectorBlock<Vec> a1_slice(Vec& s, int k) const { return s.segment(a1_idx(k, 0), n1()); }

  bool ultrastatic() const {
    for (int k = 1; k < time_steps; ++k)
      if (h[k] != h[0]) return false;
    return true;
  }
};

enum class OperatorKind { KG, Proca, Q, Kappa, Generic };

struct OperatorHandle {
  OperatorKind kind = OperatorKind::Generic;
  SpMat mat;
  const SpacetimeGrid* source = nullptr;
  const SpacetimeGrid* target = nullptr;
};

namespace detail {

inline void check_same_lattice(const SpacetimeGrid& a, const SpacetimeGrid& b) {
  if (a.mesh.dim != b.mesh.dim || a.mesh.sizes != b.mesh.sizes ||
      a.mesh.spacing != b.mesh.spacing || a.time_steps != b.time_steps || a.dt != b.dt)
    throw std::invalid_argument("grids do not share a lattice");
}

inline double gershgorin_bound(const SpMat& m) {
  Vec rowsum = Vec::Zero(m.rows());
  for (int c = 0; c < m.outerSize(); ++c)
    for (SpMat::InnerIterator it(m, c); it; ++it) rowsum[it.row()] += std::abs(it.value());
  return rowsum.maxCoeff();
}

}  // namespace detail

// chi(t, edge) in [0,1]; built-ins ignore the edge argument.
using ChiProfile = std::function<double(double, int)>;

inline ChiProfile chi_zero() {
  return [](double, int) { return 0.0; };
}
inline ChiProfile chi_one() {
  return [](double, int) { return 1.0; };
}
inline ChiProfile chi_smoothstep(double t_a, double t_b) {
  return [t_a, t_b](double t, int) {
    if (t <= t_a) return 0.0;
    if (t >= t_b) return 1.0;
    const double s = (t - t_a) / (t_b - t_a);
    return s * s * (3.0 - 2.0 * s);
  };
}

inline SpacetimeGrid build_grid(const SpatialMesh& mesh0, const SpatialMesh& mesh1,
                                const ChiProfile& chi, int Nt, double dt, int margin,
                                double mass_sq) {
  if (mesh0.dim != mesh1.dim || mesh0.sizes != mesh1.sizes || mesh0.spacing != mesh1.spacing)
    throw std::invalid_argument("build_grid: meshes must share dim, sizes and spacing");
  if (Nt < 8) throw std::invalid_argument("build_grid: need at least 8 time steps");
  if (!(dt > 0.0)) throw std::invalid_argument("build_grid: dt must be positive");
  if (margin < 2 || 2 * margin + 4 > Nt)
    throw std::invalid_argument("build_grid: margin too small or too large for Nt");
  if (!(mass_sq > 0.0)) throw std::invalid_argument("build_grid: mass_sq must be positive");

  SpacetimeGrid g;
  g.mesh = mesh0;
  g.time_steps = Nt;
  g.dt = dt;
  g.margin = margin;
  g.mass_sq = mass_sq;

  const int n1 = mesh0.edge_count();
  g.h.resize(Nt);
  for (int k = 0; k < Nt; ++k) {
    g.h[k].resize(n1);
    for (int e = 0; e < n1; ++e) {
      const double x = chi(g.time(k), e);
      if (x < 0.0 || x > 1.0) throw std::invalid_argument("build_grid: chi out of [0,1]");
      g.h[k][e] = (1.0 - x) * mesh0.metric[e] + x * mesh1.metric[e];
    }
  }
  // static ends: the first and last `margin` slices must repeat the end states
  for (int k = 0; k <= margin; ++k)
    if (g.h[k] != g.h[0] || g.h[Nt - 1 - k] != g.h[Nt - 1])
      throw std::invalid_argument("build_grid: interpolation window enters the static margins");

  // slice and half-slice inner-product weights
  g.slice_w.resize(Nt);
  for (int k = 0; k < Nt; ++k) g.slice_w[k] = hodge_weights(mesh0, g.h[k]);
  g.half_w.resize(Nt - 1);
  for (int k = 0; k + 1 < Nt; ++k)
    g.half_w[k] = hodge_weights(mesh0, Vec(0.5 * (g.h[k] + g.h[k + 1])));

  g.sd0 = incidence_d0(mesh0);
  g.sd1 = incidence_d1(mesh0);

  // build-time stability contract: dt may not exceed spacing/sqrt(max h#).
  // The explicit causal solves additionally check a sharper spectral bound.
  double hsharp_max = 0.0;
  for (int k = 0; k < Nt; ++k) hsharp_max = std::max(hsharp_max, (1.0 / g.h[k].array()).maxCoeff());
  const double sp_min = mesh0.dim == 2 ? std::min(mesh0.spacing[0], mesh0.spacing[1]) : mesh0.spacing[0];
  if (dt > sp_min / std::sqrt(hsharp_max) * (1.0 + 1e-12))
    throw std::invalid_argument("build_grid: dt violates the stability bound spacing/sqrt(max h#)");

  // signed Lorentzian weights
  g.sec_w.resize(g.sec_dim());
  for (int k = 0; k + 1 < Nt; ++k)
    for (int n = 0; n < g.n0(); ++n) g.sec_w[g.a0_idx(k, n)] = -dt * g.half_w[k].w0[n];
  for (int k = 0; k < Nt; ++k)
    for (int e = 0; e < n1; ++e) g.sec_w[g.a1_idx(k, e)] = dt * g.slice_w[k].w1[e];
  g.f0_w.resize(g.f0_dim());
  for (int k = 0; k < Nt; ++k)
    for (int n = 0; n < g.n0(); ++n) g.f0_w[g.f0_idx(k, n)] = dt * g.slice_w[k].w0[n];
  g.f2_w.resize(g.f2_dim());
  for (int k = 0; k + 1 < Nt; ++k)
    for (int e = 0; e < n1; ++e) g.f2_w[g.f2tx_idx(k, e)] = -dt * g.half_w[k].w1[e];
  for (int k = 0; k < Nt && mesh0.dim == 2; ++k)
    for (int f = 0; f < g.n2(); ++f) g.f2_w[g.f2xy_idx(k, f)] = dt * g.slice_w[k].w2[f];
  g.f3_w.resize(g.f3_dim());
  for (int k = 0; k + 1 < Nt && mesh0.dim == 2; ++k)
    for (int f = 0; f < g.n2(); ++f) g.f3_w[g.f3_idx(k, f)] = -dt * g.half_w[k].w2[f];

  // spacetime derivative on 0-forms
  {
    std::vector<Triplet> t;
    const double idt = 1.0 / dt;
    for (int k = 0; k + 1 < Nt; ++k)
      for (int n = 0; n < g.n0(); ++n) {
        t.emplace_back(g.a0_idx(k, n), g.f0_idx(k + 1, n), idt);
        t.emplace_back(g.a0_idx(k, n), g.f0_idx(k, n), -idt);
      }
    for (int k = 0; k < Nt; ++k)
      for (int c = 0; c < g.sd0.outerSize(); ++c)
        for (SpMat::InnerIterator it(g.sd0, c); it; ++it)
          t.emplace_back(g.a1_idx(k, it.row()), g.f0_idx(k, it.col()), it.value());
    g.D0.resize(g.sec_dim(), g.f0_dim());
    g.D0.setFromTriplets(t.begin(), t.end());
  }
  // spacetime derivative on sections
  {
    std::vector<Triplet> t;
    const double idt = 1.0 / dt;
    for (int k = 0; k + 1 < Nt; ++k)
      for (int e = 0; e < n1; ++e) {
        t.emplace_back(g.f2tx_idx(k, e), g.a1_idx(k + 1, e), idt);
        t.emplace_back(g.f2tx_idx(k, e), g.a1_idx(k, e), -idt);
      }
    for (int k = 0; k + 1 < Nt; ++k)
      for (int c = 0; c < g.sd0.outerSize(); ++c)
        for (SpMat::InnerIterator it(g.sd0, c); it; ++it)
          t.emplace_back(g.f2tx_idx(k, it.row()), g.a0_idx(k, it.col()), -it.value());
    if (mesh0.dim == 2)
      for (int k = 0; k < Nt; ++k)
        for (int c = 0; c < g.sd1.outerSize(); ++c)
          for (SpMat::InnerIterator it(g.sd1, c); it; ++it)
            t.emplace_back(g.f2xy_idx(k, it.row()), g.a1_idx(k, it.col()), it.value());
    g.D1.resize(g.f2_dim(), g.sec_dim());
    g.D1.setFromTriplets(t.begin(), t.end());
  }
  // spacetime derivative on 2-forms (dim 2 only)
  {
    std::vector<Triplet> t;
    const double idt = 1.0 / dt;
    if (mesh0.dim == 2)
      for (int k = 0; k + 1 < Nt; ++k) {
        for (int f = 0; f < g.n2(); ++f) {
          t.emplace_back(g.f3_idx(k, f), g.f2xy_idx(k + 1, f), idt);
          t.emplace_back(g.f3_idx(k, f), g.f2xy_idx(k, f), -idt);
        }
        for (int c = 0; c < g.sd1.outerSize(); ++c)
          for (SpMat::InnerIterator it(g.sd1, c); it; ++it)
            t.emplace_back(g.f3_idx(k, it.row()), g.f2tx_idx(k, it.col()), -it.value());
      }
    g.D2.resize(g.f3_dim(), g.f2_dim());
    g.D2.setFromTriplets(t.begin(), t.end());
  }

  g.delta10 = diag_scale_left(g.f0_w, SpMat(SpMat(g.D0.transpose()) * SpMat(g.sec_w.asDiagonal())));
  g.delta21 = diag_scale_left(g.sec_w, SpMat(SpMat(g.D1.transpose()) * SpMat(g.f2_w.asDiagonal())));
  return g;
}

inline SpacetimeGrid build_grid(const SpatialMesh& mesh, int Nt, double dt, int margin,
                                double mass_sq) {
  return build_grid(mesh, mesh, chi_zero(), Nt, dt, margin, mass_sq);
}

// --- margins -----------------------------------------------------------

// 1 on interior dofs, 0 on dofs living within `width` slices of either end.
inline Vec margin_mask(const SpacetimeGrid& g, int width) {
  Vec m = Vec::Ones(g.sec_dim());
  for (int k = 0; k + 1 < g.time_steps; ++k)
    if (k < width || k >= g.time_steps - 1 - width)
      for (int n = 0; n < g.n0(); ++n) m[g.a0_idx(k, n)] = 0.0;
  for (int k = 0; k < g.time_steps; ++k)
    if (k < width || k >= g.time_steps - width)
      for (int e = 0; e < g.n1(); ++e) m[g.a1_idx(k, e)] = 0.0;
  return m;
}

inline bool is_margined(const SpacetimeGrid& g, const Vec& s, int width) {
  const Vec m = margin_mask(g, width);
  return ((Vec::Ones(g.sec_dim()) - m).cwiseProduct(s)).isZero(0.0);
}

inline Vec masked(const SpacetimeGrid& g, const Vec& s, int width) {
  return margin_mask(g, width).cwiseProduct(s);
}

// --- pairing, operators, isometry, adjoint -----------------------------

inline double lorentz_pairing(const SpacetimeGrid& g, const Vec& f, const Vec& h) {
  if (f.size() != g.sec_dim() || h.size() != g.sec_dim())
    throw std::invalid_argument("lorentz_pairing: section size mismatch");
  if (!is_margined(g, f, 1) && !is_margined(g, h, 1))
    throw std::invalid_argument("lorentz_pairing: both sections nonzero at the temporal boundary");
  return f.dot(g.sec_w.cwiseProduct(h));
}

inline OperatorHandle assemble_proca(const SpacetimeGrid& g) {
  SpMat id(g.sec_dim(), g.sec_dim());
  id.setIdentity();
  OperatorHandle op;
  op.kind = OperatorKind::Proca;
  op.mat = SpMat(g.delta21 * g.D1) + SpMat(g.mass_sq * id);
  op.source = op.target = &g;
  return op;
}

inline OperatorHandle assemble_kg(const SpacetimeGrid& g) {
  OperatorHandle op = assemble_proca(g);
  op.kind = OperatorKind::KG;
  op.mat += SpMat(g.D0 * g.delta10);
  return op;
}

inline OperatorHandle assemble_q(const SpacetimeGrid& g) {
  SpMat id(g.sec_dim(), g.sec_dim());
  id.setIdentity();
  OperatorHandle op;
  op.kind = OperatorKind::Q;
  op.mat = id + SpMat((1.0 / g.mass_sq) * SpMat(g.D0 * g.delta10));
  op.source = op.target = &g;
  return op;
}

// Pointwise fiber isometry kappa_{BA}: A0 components pass through (lapse 1 on
// both sides), spatial edge components scale by sqrt(h_B/h_A) so the fiber
// metric pairing is preserved exactly.
inline OperatorHandle fiber_isometry(const SpacetimeGrid& a, const SpacetimeGrid& b) {
  detail::check_same_lattice(a, b);
  Vec d = Vec::Ones(a.sec_dim());
  for (int k = 0; k < a.time_steps; ++k)
    for (int e = 0; e < a.n1(); ++e)
      d[a.a1_idx(k, e)] = std::sqrt(b.h[k][e] / a.h[k][e]);
  OperatorHandle op;
  op.kind = OperatorKind::Kappa;
  op.mat = SpMat(d.asDiagonal());
  op.source = &a;
  op.target = &b;
  return op;
}

// Pointwise volume-element ratio vol_B / vol_A per section dof (the c factor
// relating the two volume forms; enters adjoints of fiber isometries).
inline Vec volume_ratio(const SpacetimeGrid& a, const SpacetimeGrid& b) {
  detail::check_same_lattice(a, b);
  Vec c(a.sec_dim());
  for (int k = 0; k + 1 < a.time_steps; ++k)
    for (int n = 0; n < a.n0(); ++n)
      c[a.a0_idx(k, n)] = b.half_w[k].w0[n] / a.half_w[k].w0[n];
  for (int k = 0; k < a.time_steps; ++k)
    for (int e = 0; e < a.n1(); ++e) {
      // w1 = vol * h#, so the volume ratio is (w1_B h_B)/(w1_A h_A)
      c[a.a1_idx(k, e)] = (b.slice_w[k].w1[e] * b.h[k][e]) / (a.slice_w[k].w1[e] * a.h[k][e]);
    }
  return c;
}

// g,g'-adjoint of T : A-sections -> B-sections w.r.t. the signed pairings:
// T^dag = W_A^{-1} T^T W_B, so pairing_B(h, Tf) = pairing_A(T^dag h, f) exactly.
inline SpMat adjoint(const SpMat& t, const SpacetimeGrid& a, const SpacetimeGrid& b) {
  if (t.rows() != b.sec_dim() || t.cols() != a.sec_dim())
    throw std::invalid_argument("adjoint: shape mismatch");
  return diag_scale_left(a.sec_w, SpMat(SpMat(t.transpose()) * SpMat(b.sec_w.asDiagonal())));
}

inline Mat adjoint(const Mat& t, const SpacetimeGrid& a, const SpacetimeGrid& b) {
  if (t.rows() != b.sec_dim() || t.cols() != a.sec_dim())
    throw std::invalid_argument("adjoint: shape mismatch");
  return Vec(a.sec_w.cwiseInverse()).asDiagonal() * t.transpose() * b.sec_w.asDiagonal();
}

inline OperatorHandle adjoint(const OperatorHandle& t) {
  OperatorHandle op;
  op.kind = OperatorKind::Generic;
  op.mat = adjoint(t.mat, *t.source, *t.target);
  op.source = t.target;
  op.target = t.source;
  return op;
}

}  // namespace procalab
