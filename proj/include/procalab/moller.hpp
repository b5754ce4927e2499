#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "procalab/green.hpp"
#include "procalab/spacetime.hpp"

namespace procalab {

// Intertwining operator between the section dynamics of two lattice metrics
// joined by a convex interpolation under the shared time function. The
// matrices are materialized at desk scale; they are meaningful on margined
// sections (the causal solves inside assume vanishing margin data).
struct MollerOperator {
  const SpacetimeGrid* source = nullptr;
  const SpacetimeGrid* target = nullptr;
  Mat R;     // source sections -> target sections
  Mat Rinv;  // closed-form inverse, target -> source
  std::vector<std::string> chain;
};

namespace detail {

inline Mat materialize(int dim, const std::function<Vec(const Vec&)>& apply) {
  Mat m(dim, dim);
  Vec e = Vec::Zero(dim);
  for (int j = 0; j < dim; ++j) {
    e[j] = 1.0;
    m.col(j) = apply(e);
    e[j] = 0.0;
  }
  return m;
}

inline void check_static_agreement(const SpacetimeGrid& a, const SpacetimeGrid& b, bool past) {
  check_same_lattice(a, b);
  for (int k = 0; k <= a.margin; ++k) {
    const int idx = past ? k : a.time_steps - 1 - k;
    if (a.h[idx] != b.h[idx])
      throw std::invalid_argument("moller: grids disagree on the static margin");
  }
}

}  // namespace detail

// R+ : sections of grid0 -> sections of grid_chi,
//   R+ = kappa - G+_{P_chi} (P_chi kappa - kappa P_0)
// Acts as the identity wherever the metrics still agree in the past.
inline MollerOperator moller_plus(const SpacetimeGrid& g0, const SpacetimeGrid& gchi) {
  detail::check_static_agreement(g0, gchi, /*past=*/true);
  const SpMat kap = fiber_isometry(g0, gchi).mat;
  const SpMat p0 = assemble_proca(g0).mat;
  const SpMat pchi = assemble_proca(gchi).mat;
  const SpMat comm = SpMat(pchi * kap) - SpMat(kap * p0);
  const GreenSolver gs = make_green_solver(gchi, OperatorKind::Proca);
  const GreenSolver gs0 = make_green_solver(g0, OperatorKind::Proca);

  MollerOperator m;
  m.source = &g0;
  m.target = &gchi;
  m.chain = {"plus"};
  m.R = detail::materialize(g0.sec_dim(),
                            [&](const Vec& f) -> Vec { return Vec(kap * f) - retarded(gs, comm * f); });
  const SpMat kinv = fiber_isometry(gchi, g0).mat;
  const SpMat commi = SpMat(kinv * pchi) - SpMat(p0 * kinv);
  m.Rinv = detail::materialize(gchi.sec_dim(),
                               [&](const Vec& f) -> Vec { return Vec(kinv * f) + retarded(gs0, commi * f); });
  return m;
}

// R- : sections of grid_chi -> sections of grid1,
//   R- = kappa - G-_{P_1} (P_1 kappa - kappa P_chi)
// Acts as the identity wherever the metrics already agree in the future.
inline MollerOperator moller_minus(const SpacetimeGrid& gchi, const SpacetimeGrid& g1) {
  detail::check_static_agreement(gchi, g1, /*past=*/false);
  const SpMat kap = fiber_isometry(gchi, g1).mat;
  const SpMat p1 = assemble_proca(g1).mat;
  const SpMat pchi = assemble_proca(gchi).mat;
  const SpMat comm = SpMat(p1 * kap) - SpMat(kap * pchi);
  const GreenSolver gs1 = make_green_solver(g1, OperatorKind::Proca);
  const GreenSolver gschi = make_green_solver(gchi, OperatorKind::Proca);

  MollerOperator m;
  m.source = &gchi;
  m.target = &g1;
  m.chain = {"minus"};
  m.R = detail::materialize(gchi.sec_dim(),
                            [&](const Vec& f) -> Vec { return Vec(kap * f) - advanced(gs1, comm * f); });
  const SpMat kinv = fiber_isometry(g1, gchi).mat;
  const SpMat commi = SpMat(kinv * p1) - SpMat(pchi * kinv);
  m.Rinv = detail::materialize(g1.sec_dim(),
                               [&](const Vec& f) -> Vec { return Vec(kinv * f) + advanced(gschi, commi * f); });
  return m;
}

// Ordered composition R = steps.back() o ... o steps.front(). An empty chain
// is the identity on `home`.
inline MollerOperator compose_chain(const std::vector<const MollerOperator*>& steps,
                                    const SpacetimeGrid* home = nullptr) {
  if (steps.empty()) {
    if (!home) throw std::invalid_argument("compose_chain: empty chain needs a grid");
    MollerOperator m;
    m.source = m.target = home;
    m.R = Mat::Identity(home->sec_dim(), home->sec_dim());
    m.Rinv = m.R;
    return m;
  }
  MollerOperator m;
  m.source = steps.front()->source;
  m.target = steps.back()->target;
  m.R = steps.front()->R;
  m.Rinv = steps.front()->Rinv;
  m.chain = steps.front()->chain;
  for (size_t i = 1; i < steps.size(); ++i) {
    if (steps[i]->source != steps[i - 1]->target)
      throw std::invalid_argument("compose_chain: consecutive grids do not match");
    m.R = steps[i]->R * m.R;
    m.Rinv = m.Rinv * steps[i]->Rinv;
    m.chain.insert(m.chain.end(), steps[i]->chain.begin(), steps[i]->chain.end());
  }
  return m;
}

// Full one-interpolation Moller operator grid0 -> grid1 through grid_chi.
inline MollerOperator moller_pair(const SpacetimeGrid& g0, const SpacetimeGrid& gchi,
                                  const SpacetimeGrid& g1) {
  const MollerOperator rp = moller_plus(g0, gchi);
  const MollerOperator rm = moller_minus(gchi, g1);
  return compose_chain({&rp, &rm});
}

// Adjoint with respect to the two signed pairings; the volume-ratio factors
// enter through the weights, never as user inputs.
inline Mat moller_adjoint(const MollerOperator& m) {
  return adjoint(m.R, *m.source, *m.target);
}

// Closed form of the one-step adjoints with the unit lapse-rescaling
// convention: the volume ratio c multiplies after the isometry,
//   (R+)^dag = P_0 c kappa_{0 chi} G-_{P_chi},
//   (R-)^dag = P_chi c' kappa_{chi 1} G+_{P_1}.
inline Mat moller_plus_adjoint_closed(const SpacetimeGrid& g0, const SpacetimeGrid& gchi) {
  const SpMat kinv = fiber_isometry(gchi, g0).mat;
  const Vec c = volume_ratio(g0, gchi);
  const SpMat p0 = assemble_proca(g0).mat;
  const GreenSolver gs = make_green_solver(gchi, OperatorKind::Proca);
  return detail::materialize(gchi.sec_dim(), [&](const Vec& h) -> Vec {
    return Vec(p0 * c.cwiseProduct(kinv * advanced(gs, h)));
  });
}

inline Mat moller_minus_adjoint_closed(const SpacetimeGrid& gchi, const SpacetimeGrid& g1) {
  const SpMat kinv = fiber_isometry(g1, gchi).mat;
  const Vec c = volume_ratio(gchi, g1);
  const SpMat pchi = assemble_proca(gchi).mat;
  const GreenSolver gs = make_green_solver(g1, OperatorKind::Proca);
  return detail::materialize(g1.sec_dim(), [&](const Vec& h) -> Vec {
    return Vec(pchi * c.cwiseProduct(kinv * retarded(gs, h)));
  });
}

struct PushforwardReport {
  double propagator_residual = 0.0;   // |R G_P R^dag - G_P'| on the battery
  double intertwine_residual = 0.0;   // |R^dag P' kappa f - P (c f)| on the battery
  double solution_residual = 0.0;     // |P' R G_P f| / |G_P f|
};

// Battery evaluation of the propagator pushforward and its companions.
template <typename RngT>
inline PushforwardReport pushforward_propagator(const MollerOperator& m, RngT& rng,
                                                int battery = 12) {
  const SpacetimeGrid& g = *m.source;
  const SpacetimeGrid& gp = *m.target;
  const GreenSolver sol = make_green_solver(g, OperatorKind::Proca);
  const GreenSolver solp = make_green_solver(gp, OperatorKind::Proca);
  const Mat radj = moller_adjoint(m);
  const SpMat p = assemble_proca(g).mat;
  const SpMat pp = assemble_proca(gp).mat;
  const SpMat kap = fiber_isometry(g, gp).mat;  // kappa_{g' g}: source -> target
  // with the unit lapse-rescaling convention the adjoint intertwining picks
  // up the pointwise volume ratio of the two metrics
  const Vec cvol = volume_ratio(g, gp);

  PushforwardReport rep;
  const Vec mask_p = margin_mask(gp, gp.margin);
  const Vec mask_s = margin_mask(g, g.margin);
  for (int b = 0; b < battery; ++b) {
    const Vec fp = mask_p.cwiseProduct(rng.vector(gp.sec_dim()));
    const Vec lhs = m.R * causal_propagator(sol, Vec(mask_s.cwiseProduct(Vec(radj * fp))));
    const Vec rhs = causal_propagator(solp, fp);
    rep.propagator_residual = std::max(
        rep.propagator_residual,
        masked(gp, Vec(lhs - rhs), gp.margin).norm() / std::max(rhs.norm(), 1e-300));

    const Vec fs = mask_s.cwiseProduct(rng.vector(g.sec_dim()));
    const Vec lhs2 = radj * Vec(pp * Vec(kap * fs));
    const Vec rhs2 = p * Vec(cvol.cwiseProduct(fs));
    rep.intertwine_residual = std::max(
        rep.intertwine_residual,
        masked(g, Vec(lhs2 - rhs2), g.margin).norm() / std::max(rhs2.norm(), 1e-300));

    const Vec sol_f = causal_propagator(sol, fs);
    rep.solution_residual = std::max(
        rep.solution_residual, masked(gp, Vec(pp * Vec(m.R * sol_f)), gp.margin).norm() /
                                   std::max(sol_f.norm(), 1e-300));
  }
  return rep;
}

}  // namespace procalab
