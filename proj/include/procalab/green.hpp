#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "procalab/spacetime.hpp"

namespace procalab {

// Exact discrete retarded/advanced Green operators, defined as the causal
// algebraic inverses of the assembled operator with zero data in the
// appropriate margin. One time stage advances (A0 at k+1/2, A1 at k+1):
// the A1 row is solved for the staggered field strength F at k+1/2, the A0
// row then closes with a pointwise division by m^2 for the Proca operator
// (no spatial solve is ever needed), or, for the Klein-Gordon operator, a
// diagonal division coming from the temporal second difference.
struct GreenSolver {
  const SpacetimeGrid* grid = nullptr;
  OperatorKind kind = OperatorKind::Proca;  // Proca or KG
  std::vector<SpMat> curlcurl;              // d1^T W2_k d1 per slice (dim 2), else empty

  int Nt() const { return grid->time_steps; }
};

inline GreenSolver make_green_solver(const SpacetimeGrid& g, OperatorKind kind) {
  if (kind != OperatorKind::Proca && kind != OperatorKind::KG)
    throw std::invalid_argument("make_green_solver: operator must be Proca or KG");
  GreenSolver s;
  s.grid = &g;
  s.kind = kind;
  // explicit substitution needs dt^2 (lambda_max + m^2) < 4; Gershgorin bound
  // per slice (exact on the flat circulants, mildly conservative otherwise)
  for (int k = 0; k < g.time_steps; ++k) {
    const SpMat delta1_k = diag_scale_left(
        g.slice_w[k].w0, SpMat(SpMat(g.sd0.transpose()) * SpMat(g.slice_w[k].w1.asDiagonal())));
    double lmax = detail::gershgorin_bound(SpMat(delta1_k * g.sd0));
    if (g.mesh.dim == 2) {
      const SpMat delta2_k = diag_scale_left(
          g.slice_w[k].w1, SpMat(SpMat(g.sd1.transpose()) * SpMat(g.slice_w[k].w2.asDiagonal())));
      lmax = std::max(lmax, detail::gershgorin_bound(SpMat(g.sd0 * delta1_k)) +
                                detail::gershgorin_bound(SpMat(delta2_k * g.sd1)));
    }
    if (g.dt * g.dt * (lmax + g.mass_sq) >= 4.0)
      throw std::invalid_argument("make_green_solver: dt too large for a stable causal solve");
  }
  if (g.mesh.dim == 2) {
    s.curlcurl.resize(g.time_steps);
    const SpMat d1t = g.sd1.transpose();
    for (int k = 0; k < g.time_steps; ++k)
      s.curlcurl[k] = SpMat(d1t * SpMat(g.slice_w[k].w2.asDiagonal()) * g.sd1);
  }
  return s;
}

namespace detail {

// delta1 at a given weight pair applied to an edge field: U^{-1} d0^T (V .* F)
inline Vec delta1_apply(const SpacetimeGrid& g, const HodgeWeights& w, const Vec& f) {
  return (g.sd0.transpose() * Vec(w.w1.cwiseProduct(f))).cwiseQuotient(w.w0);
}

inline Vec slice_deltaA(const SpacetimeGrid& g, const Vec& u, int k) {
  // delta_st of a section at integer slice k; missing temporal neighbours are
  // treated as zero (valid wherever solves are causal and data margined)
  Vec t = Vec::Zero(g.n0());
  const HodgeWeights& w = g.slice_w[k];
  if (k < g.time_steps - 1) t += g.half_w[k].w0.cwiseProduct(g.a0_slice(u, k));
  if (k > 0) t -= g.half_w[k - 1].w0.cwiseProduct(g.a0_slice(u, k - 1));
  Vec r = t.cwiseQuotient(w.w0) / g.dt;
  r += delta1_apply(g, w, g.a1_slice(u, k));
  return r;
}

}  // namespace detail

inline Vec retarded(const GreenSolver& s, const Vec& f) {
  const SpacetimeGrid& g = *s.grid;
  if (f.size() != g.sec_dim()) throw std::invalid_argument("retarded: section size mismatch");
  const int Nt = g.time_steps;
  const double dt = g.dt, m2 = g.mass_sq;
  Vec u = Vec::Zero(g.sec_dim());

  if (s.kind == OperatorKind::Proca) {
    Vec vf_prev = Vec::Zero(g.n1());  // V_{k-1/2} F_{k-1/2}
    for (int k = 0; k + 1 < Nt; ++k) {
      Vec vf = vf_prev;
      if (k >= 1) {
        Vec r = g.a1_slice(f, k) - m2 * g.a1_slice(u, k);
        Vec vr = g.slice_w[k].w1.cwiseProduct(r);
        if (g.mesh.dim == 2) vr -= s.curlcurl[k] * Vec(g.a1_slice(u, k));
        vf += dt * vr;
      }
      const Vec F = vf.cwiseQuotient(g.half_w[k].w1);
      const Vec a0 = (g.a0_slice(f, k) + detail::delta1_apply(g, g.half_w[k], F)) / m2;
      g.a0_slice(u, k) = a0;
      g.a1_slice(u, k + 1) = Vec(g.a1_slice(u, k)) + dt * (F + g.sd0 * a0);
      vf_prev = vf;
    }
    return u;
  }

  // Klein-Gordon: pure diagonal stages, A0 half-lattice offset from A1
  Vec deltaA_prev = Vec::Zero(g.n0());
  for (int k = 1; k + 1 < Nt; ++k) {
    const Vec F = (Vec(g.a1_slice(u, k)) - Vec(g.a1_slice(u, k - 1))) / dt -
                  g.sd0 * Vec(g.a0_slice(u, k - 1));
    if (k >= 2) {
      const Vec kn = Vec(-g.half_w[k - 1].w0.cwiseProduct(g.a0_slice(u, k - 1)))
                             .cwiseQuotient(g.slice_w[k].w0) /
                         dt +
                     detail::delta1_apply(g, g.slice_w[k], g.a1_slice(u, k));
      const Vec rhs = g.a0_slice(f, k - 1) - m2 * Vec(g.a0_slice(u, k - 1)) +
                      detail::delta1_apply(g, g.half_w[k - 1], F) - (kn - deltaA_prev) / dt;
      g.a0_slice(u, k) =
          dt * dt * Vec(g.slice_w[k].w0.cwiseQuotient(g.half_w[k].w0)).cwiseProduct(rhs);
    }
    const Vec deltaA = detail::slice_deltaA(g, u, k);
    Vec r = g.a1_slice(f, k) - m2 * Vec(g.a1_slice(u, k)) - g.sd0 * deltaA;
    Vec vf = g.half_w[k - 1].w1.cwiseProduct(F) + dt * g.slice_w[k].w1.cwiseProduct(r);
    if (g.mesh.dim == 2) vf -= dt * (s.curlcurl[k] * Vec(g.a1_slice(u, k)));
    const Vec Fnext = vf.cwiseQuotient(g.half_w[k].w1);
    g.a1_slice(u, k + 1) = Vec(g.a1_slice(u, k)) + dt * (Fnext + g.sd0 * Vec(g.a0_slice(u, k)));
    deltaA_prev = deltaA;
  }
  return u;
}

inline Vec advanced(const GreenSolver& s, const Vec& f) {
  const SpacetimeGrid& g = *s.grid;
  if (f.size() != g.sec_dim()) throw std::invalid_argument("advanced: section size mismatch");
  const int Nt = g.time_steps;
  const double dt = g.dt, m2 = g.mass_sq;
  Vec u = Vec::Zero(g.sec_dim());

  if (s.kind == OperatorKind::Proca) {
    Vec vf_next = Vec::Zero(g.n1());  // V_{k+3/2} F_{k+3/2}
    for (int k = Nt - 2; k >= 0; --k) {
      Vec vf = vf_next;
      if (k + 1 <= Nt - 2) {
        Vec r = g.a1_slice(f, k + 1) - m2 * g.a1_slice(u, k + 1);
        Vec vr = g.slice_w[k + 1].w1.cwiseProduct(r);
        if (g.mesh.dim == 2) vr -= s.curlcurl[k + 1] * Vec(g.a1_slice(u, k + 1));
        vf -= dt * vr;
      }
      const Vec F = vf.cwiseQuotient(g.half_w[k].w1);
      const Vec a0 = (g.a0_slice(f, k) + detail::delta1_apply(g, g.half_w[k], F)) / m2;
      g.a0_slice(u, k) = a0;
      g.a1_slice(u, k) = Vec(g.a1_slice(u, k + 1)) - dt * (F + g.sd0 * a0);
      vf_next = vf;
    }
    return u;
  }

  Vec deltaA_next = Vec::Zero(g.n0());
  for (int k = Nt - 2; k >= 1; --k) {
    const Vec F = (Vec(g.a1_slice(u, k + 1)) - Vec(g.a1_slice(u, k))) / dt -
                  g.sd0 * Vec(g.a0_slice(u, k));
    if (k <= Nt - 3) {
      const Vec kn = Vec(g.half_w[k].w0.cwiseProduct(g.a0_slice(u, k)))
                             .cwiseQuotient(g.slice_w[k].w0) /
                         dt +
                     detail::delta1_apply(g, g.slice_w[k], g.a1_slice(u, k));
      const Vec rhs = g.a0_slice(f, k) + detail::delta1_apply(g, g.half_w[k], F) -
                      m2 * Vec(g.a0_slice(u, k)) - (deltaA_next - kn) / dt;
      g.a0_slice(u, k - 1) =
          dt * dt * Vec(g.slice_w[k].w0.cwiseQuotient(g.half_w[k - 1].w0)).cwiseProduct(rhs);
    }
    const Vec deltaA = detail::slice_deltaA(g, u, k);
    Vec r = g.a1_slice(f, k) - m2 * Vec(g.a1_slice(u, k)) - g.sd0 * deltaA;
    Vec vf = g.half_w[k].w1.cwiseProduct(F) - dt * g.slice_w[k].w1.cwiseProduct(r);
    if (g.mesh.dim == 2) vf += dt * (s.curlcurl[k] * Vec(g.a1_slice(u, k)));
    const Vec Fprev = vf.cwiseQuotient(g.half_w[k - 1].w1);
    g.a1_slice(u, k - 1) = Vec(g.a1_slice(u, k)) - dt * (Fprev + g.sd0 * Vec(g.a0_slice(u, k - 1)));
    deltaA_next = deltaA;
  }
  return u;
}

inline Vec retarded_checked(const GreenSolver& s, const Vec& f) {
  for (int k = 0; k < s.grid->margin; ++k) {
    if (k + 1 < s.Nt() && !Vec(s.grid->a0_slice(f, k)).isZero(0.0))
      throw std::invalid_argument("retarded: source enters the past margin");
    if (!Vec(s.grid->a1_slice(f, k)).isZero(0.0))
      throw std::invalid_argument("retarded: source enters the past margin");
  }
  return retarded(s, f);
}

inline Vec advanced_checked(const GreenSolver& s, const Vec& f) {
  const int Nt = s.Nt();
  for (int k = 0; k < s.grid->margin; ++k) {
    if (!Vec(s.grid->a1_slice(f, Nt - 1 - k)).isZero(0.0) ||
        !Vec(s.grid->a0_slice(f, Nt - 2 - k)).isZero(0.0))
      throw std::invalid_argument("advanced: source enters the future margin");
  }
  return advanced(s, f);
}

// The substitution itself only needs the two pinned slices at each end to be
// source free; scenario batteries keep the wider grid margin on top of that.
inline Vec causal_propagator(const GreenSolver& s, const Vec& f) {
  if (!is_margined(*s.grid, f, 2))
    throw std::invalid_argument("causal_propagator: source must vanish in both margins");
  return retarded(s, f) - advanced(s, f);
}

// --- diagnostics ---------------------------------------------------------

// Residual of (op u - f) over interior rows only; boundary rows have
// truncated stencils and are not part of the causal-inverse contract.
inline double interior_residual(const SpacetimeGrid& g, const SpMat& op, const Vec& u,
                                const Vec& f, int width) {
  const Vec r = masked(g, Vec(op * u - f), width);
  return r.norm() / std::max(f.norm(), 1e-300);
}

// Independent solve path for cross-checking the block substitution: the
// margined square subsystem is handed to a sparse LU factorization.
inline Vec causal_dense_solve(const GreenSolver& s, const SpMat& op, const Vec& f, bool retard) {
  const SpacetimeGrid& g = *s.grid;
  const int Nt = g.time_steps;
  std::vector<int> rows, cols;
  // rows honoured by the substitution, unknown columns (the rest are pinned 0)
  if (s.kind == OperatorKind::Proca) {
    for (int k = 0; k + 1 < Nt; ++k)
      for (int n = 0; n < g.n0(); ++n) rows.push_back(g.a0_idx(k, n));
    for (int k = 1; k + 1 < Nt; ++k)
      for (int e = 0; e < g.n1(); ++e) rows.push_back(g.a1_idx(k, e));
    for (int k = 0; k + 1 < Nt; ++k)
      for (int n = 0; n < g.n0(); ++n) cols.push_back(g.a0_idx(k, n));
    if (retard) {
      for (int k = 2; k < Nt; ++k)
        for (int e = 0; e < g.n1(); ++e) cols.push_back(g.a1_idx(k, e));
    } else {
      for (int k = 0; k + 2 < Nt; ++k)
        for (int e = 0; e < g.n1(); ++e) cols.push_back(g.a1_idx(k, e));
    }
  } else {
    for (int k = 1; k + 2 < Nt; ++k)
      for (int n = 0; n < g.n0(); ++n) rows.push_back(g.a0_idx(k, n));
    for (int k = 1; k + 1 < Nt; ++k)
      for (int e = 0; e < g.n1(); ++e) rows.push_back(g.a1_idx(k, e));
    if (retard) {
      for (int k = 2; k + 1 < Nt; ++k)
        for (int n = 0; n < g.n0(); ++n) cols.push_back(g.a0_idx(k, n));
      for (int k = 2; k < Nt; ++k)
        for (int e = 0; e < g.n1(); ++e) cols.push_back(g.a1_idx(k, e));
    } else {
      for (int k = 0; k + 3 < Nt; ++k)
        for (int n = 0; n < g.n0(); ++n) cols.push_back(g.a0_idx(k, n));
      for (int k = 0; k + 2 < Nt; ++k)
        for (int e = 0; e < g.n1(); ++e) cols.push_back(g.a1_idx(k, e));
    }
  }
  if (rows.size() != cols.size()) throw std::logic_error("causal_dense_solve: subsystem not square");

  std::vector<int> colmap(g.sec_dim(), -1), rowmap(g.sec_dim(), -1);
  for (size_t i = 0; i < cols.size(); ++i) colmap[cols[i]] = static_cast<int>(i);
  for (size_t i = 0; i < rows.size(); ++i) rowmap[rows[i]] = static_cast<int>(i);
  std::vector<Triplet> t;
  for (int c = 0; c < op.outerSize(); ++c)
    for (SpMat::InnerIterator it(op, c); it; ++it)
      if (rowmap[it.row()] >= 0 && colmap[it.col()] >= 0)
        t.emplace_back(rowmap[it.row()], colmap[it.col()], it.value());
  SpMat sub(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
  sub.setFromTriplets(t.begin(), t.end());
  sub.makeCompressed();

  Vec rhs(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = f[rows[i]];
  Eigen::SparseLU<SpMat> lu(sub);
  if (lu.info() != Eigen::Success) throw std::runtime_error("causal_dense_solve: singular subsystem");
  const Vec x = lu.solve(rhs);
  Vec u = Vec::Zero(g.sec_dim());
  for (size_t i = 0; i < cols.size(); ++i) u[cols[i]] = x[static_cast<Eigen::Index>(i)];
  return u;
}

// Stencil-widened lattice lightcone test: returns the largest |u| found
// outside the cone of influence of a source supported at time index k0 and
// spatial node x0, relative to the source norm. The stencil moves at most
// two cells per step in the l1 lattice distance.
inline double cone_leakage(const SpacetimeGrid& g, const Vec& u, int k0, int node0, bool future,
                           double fnorm, int slack = 2) {
  const auto l1 = [&](int n) {
    int d = 0;
    int a = n % g.mesh.sizes[0], b = node0 % g.mesh.sizes[0];
    int da = std::abs(a - b);
    d += std::min(da, g.mesh.sizes[0] - da);
    if (g.mesh.dim == 2) {
      int p = n / g.mesh.sizes[0], q = node0 / g.mesh.sizes[0];
      int dp = std::abs(p - q);
      d += std::min(dp, g.mesh.sizes[1] - dp);
    }
    return d;
  };
  double worst = 0.0;
  const double speed = 2.0;
  for (int k = 0; k < g.time_steps; ++k) {
    const double steps = future ? (k - k0) : (k0 - k);
    for (int e = 0; e < g.n1(); ++e) {
      const int tail = e % g.n0();
      const bool inside = steps >= 0.0 && l1(tail) <= speed * steps + slack;
      if (!inside) worst = std::max(worst, std::abs(u[g.a1_idx(k, e)]));
    }
    if (k + 1 < g.time_steps) {
      const double hsteps = future ? (k + 0.5 - k0) : (k0 - k - 0.5);
      for (int n = 0; n < g.n0(); ++n) {
        const bool inside = hsteps >= 0.0 && l1(n) <= speed * hsteps + slack;
        if (!inside) worst = std::max(worst, std::abs(u[g.a0_idx(k, n)]));
      }
    }
  }
  return worst / std::max(fnorm, 1e-300);
}

}  // namespace procalab
