#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "procalab/cauchy.hpp"
#include "procalab/csv.hpp"
#include "procalab/green.hpp"
#include "procalab/mesh.hpp"
#include "procalab/moller.hpp"
#include "procalab/rng.hpp"
#include "procalab/spacetime.hpp"
#include "procalab/spectral.hpp"
#include "procalab/states.hpp"

namespace procalab {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// scenario configuration

struct Scenario {
  std::string name;
  double mass_sq = 1.0;
  SpatialMesh mesh0;
  std::optional<SpatialMesh> mesh1;
  int Nt = 48;
  double dt = 0.25;
  int margin = 6;
  std::string chi = "zero";  // zero | one | smoothstep
  double window_a = 0.0, window_b = 0.0;
  std::vector<std::string> suites{"full"};
  std::uint64_t seed = 1;
  double tolerance_scale = 1.0;
  std::string cauchy_data = "constrained";  // or raw_random (negative probe)
  int n_tau = 64;
  int freq_Nt = 96;
  int freq_margin = 12;
};

inline SpatialMesh mesh_from_json(const Json& j) {
  const int dim = j.at("dim").get<int>();
  const std::vector<int> sizes = j.at("sizes").get<std::vector<int>>();
  std::vector<double> spacing;
  if (j.at("spacing").is_array())
    spacing = j.at("spacing").get<std::vector<double>>();
  else
    spacing = {j.at("spacing").get<double>()};
  MetricSpec metric = 1.0;
  const Json& m = j.at("metric");
  if (m.is_number()) {
    metric = m.get<double>();
  } else if (m.is_string() && m.get<std::string>() == "constant") {
    metric = j.value("metric_value", 1.0);
  } else if (m.is_array()) {
    const auto vals = m.get<std::vector<double>>();
    Vec table(static_cast<Eigen::Index>(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) table[static_cast<Eigen::Index>(i)] = vals[i];
    metric = table;
  } else {
    throw std::invalid_argument("mesh spec: metric must be a number, \"constant\" or an array");
  }
  return build_mesh(dim, sizes, spacing, metric);
}

inline Scenario parse_scenario(const Json& j) {
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  const Json& grid = j.at("grid");
  sc.Nt = grid.at("Nt").get<int>();
  sc.dt = grid.at("dt").get<double>();
  sc.margin = grid.at("margins").get<int>();
  sc.mass_sq = grid.at("mass_sq").get<double>();
  sc.mesh0 = mesh_from_json(grid.at("mesh0"));
  if (grid.contains("mesh1")) sc.mesh1 = mesh_from_json(grid.at("mesh1"));
  sc.chi = grid.value("chi", std::string("zero"));
  if (grid.contains("window")) {
    sc.window_a = grid.at("window").at(0).get<double>();
    sc.window_b = grid.at("window").at(1).get<double>();
  }
  if (j.contains("suites")) sc.suites = j.at("suites").get<std::vector<std::string>>();
  sc.seed = j.value("seed", 1ull);
  sc.tolerance_scale = j.value("tolerance_scale", 1.0);
  sc.cauchy_data = j.value("cauchy_data", std::string("constrained"));
  if (j.contains("states")) {
    const Json& st = j.at("states");
    sc.n_tau = st.value("n_tau", 64);
    sc.freq_Nt = st.value("freq_Nt", 96);
    sc.freq_margin = st.value("freq_margin", 12);
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("scenario: cannot open " + path);
  Json j;
  in >> j;
  return parse_scenario(j);
}

inline ChiProfile chi_from_scenario(const Scenario& sc) {
  if (sc.chi == "zero") return chi_zero();
  if (sc.chi == "one") return chi_one();
  if (sc.chi == "smoothstep") return chi_smoothstep(sc.window_a, sc.window_b);
  throw std::invalid_argument("scenario: chi must be zero, one or smoothstep");
}

inline SpacetimeGrid ultrastatic_grid(const Scenario& sc) {
  return build_grid(sc.mesh0, sc.Nt, sc.dt, sc.margin, sc.mass_sq);
}

// ---------------------------------------------------------------------------
// Cauchy data serialization

inline Json cauchy_to_json(const CauchyData& d) {
  const auto arr = [](const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  Json j;
  j["a0"] = arr(d.a0);
  j["pi0"] = arr(d.pi0);
  j["a1"] = arr(d.a1);
  j["pi1"] = arr(d.pi1);
  j["r1"] = d.r1;
  j["r2"] = d.r2;
  j["admissible"] = d.admissible;
  return j;
}

inline CauchyData cauchy_from_json(const HodgeComplex& c, double mass_sq, const Json& j) {
  const auto vec = [](const Json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
  };
  return finish_cauchy_data(c, mass_sq, vec(j.at("a0")), vec(j.at("pi0")), vec(j.at("a1")),
                            vec(j.at("pi1")));
}

// ---------------------------------------------------------------------------
// checks and reports

struct CheckResult {
  std::string id;
  std::string identity;
  double residual = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

class CheckList {
 public:
  explicit CheckList(double tolerance_scale) : scale_(tolerance_scale) {}

  void add(const std::string& id, const std::string& identity, double residual,
           double threshold) {
    CheckResult r;
    r.id = id;
    r.identity = identity;
    r.residual = residual;
    r.threshold = threshold * scale_;
    r.pass = residual <= r.threshold;
    items_.push_back(std::move(r));
  }

  const std::vector<CheckResult>& items() const { return items_; }
  bool all_pass() const {
    for (const auto& r : items_)
      if (!r.pass) return false;
    return true;
  }

 private:
  double scale_;
  std::vector<CheckResult> items_;
};

inline int worker_count() {
  if (const char* env = std::getenv("PROCA_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// index-deterministic parallel map over a battery
template <typename Fn>
inline void parallel_for(int n, const Fn& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// suite: complex

inline void run_complex_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out) {
  std::vector<SpatialMesh> meshes{sc.mesh0};
  if (sc.mesh1) meshes.push_back(*sc.mesh1);
  double dd = 0.0, adj = 0.0, intw = 0.0, psd = 0.0;
  for (const SpatialMesh& mesh : meshes) {
    const HodgeComplex c = build_complex(mesh);
    if (mesh.dim == 2) dd = std::max(dd, Mat(SpMat(c.d1 * c.d0)).norm());
    for (int rep = 0; rep < 4; ++rep) {
      const Vec f = rng.vector(mesh.node_count());
      const Vec g = rng.vector(mesh.edge_count());
      const double lhs = inner_product(c, 1, Vec(c.d0 * f), g);
      const double rhs = inner_product(c, 0, f, Vec(c.delta1 * g));
      adj = std::max(adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0));
      if (mesh.dim == 2) {
        const Vec u = rng.vector(mesh.edge_count());
        const Vec v = rng.vector(mesh.face_count());
        const double l2 = inner_product(c, 2, Vec(c.d1 * u), v);
        const double r2 = inner_product(c, 1, u, Vec(c.delta2 * v));
        adj = std::max(adj, std::abs(l2 - r2) / std::max(std::abs(l2), 1.0));
      }
      psd = std::max(psd, -inner_product(c, 0, f, Vec(c.lap0 * f)));
      psd = std::max(psd, -inner_product(c, 1, g, Vec(c.lap1 * g)));
    }
    const Mat lhs = Mat(SpMat(c.lap1 * c.d0)), rhs = Mat(SpMat(c.d0 * c.lap0));
    intw = std::max(intw, (lhs - rhs).norm() / std::max(lhs.norm(), 1.0));
  }
  out.add("complex.dd_zero", "second derivative vanishes at matrix level", dd, 0.0);
  out.add("complex.adjointness", "d and delta are mutually adjoint", adj, 1e-12);
  out.add("complex.laplacian_intertwine", "lap1 d0 = d0 lap0", intw, 1e-13);
  out.add("complex.laplacian_psd", "Laplacians nonnegative in the weighted product", psd, 1e-12);
}

// ---------------------------------------------------------------------------
// suite: spectral

inline void run_spectral_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out) {
  const HodgeComplex c = build_complex(sc.mesh0);
  double ortho = 0.0, rec = 0.0, comp = 0.0, pos = 0.0;
  for (int degree : {0, 1}) {
    const Spectrum s = eigendecompose(c, degree, sc.mass_sq);
    const int n = static_cast<int>(s.eigenvalues.size());
    const Mat gram = s.eigenvectors.transpose() * s.w.asDiagonal() * s.eigenvectors;
    ortho = std::max(ortho, (gram - Mat::Identity(n, n)).norm());
    const Mat reconstructed = s.eigenvectors * s.eigenvalues.asDiagonal() *
                              s.eigenvectors.transpose() * s.w.asDiagonal();
    const Mat lap = Mat(laplacian(c, degree));
    rec = std::max(rec, (reconstructed - lap).norm() / std::max(lap.norm(), 1.0));
    for (auto [a, b] : std::vector<std::pair<double, double>>{{0.5, 0.5}, {-1.0, 1.0}}) {
      const Vec f = rng.vector(n);
      const Vec lhs = apply_power(s, a, apply_power(s, b, f));
      const Vec rhs = apply_power(s, a + b, f);
      comp = std::max(comp, (lhs - rhs).norm() / std::max(rhs.norm(), 1.0));
    }
    for (double alpha : {-1.0, -0.5, 0.5, 1.0}) {
      const Vec f = rng.vector(n);
      pos = std::max(pos, -inner_product(c, degree, f, apply_power(s, alpha, f)));
    }
  }
  double intw = 0.0;
  for (int j = 0; j < sc.mesh0.dim; ++j)
    for (double alpha : {-1.0, -0.5, 0.5, 1.0})
      intw = std::max(intw, intertwine_residual(c, j, alpha, sc.mass_sq).max());
  out.add("spectral.orthonormality", "eigenvectors W-orthonormal", ortho, 1e-10);
  out.add("spectral.reconstruction", "spectral resolution rebuilds the Laplacian", rec, 1e-9);
  out.add("spectral.power_composition", "fractional powers compose additively", comp, 1e-9);
  out.add("spectral.positivity", "powers of lap + m^2 are positive", pos, 0.0);
  out.add("spectral.intertwine", "fractional powers commute with d and delta", intw, 1e-9);
}

// ---------------------------------------------------------------------------
// suite: cauchy

inline void run_cauchy_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out) {
  const HodgeComplex c = build_complex(sc.mesh0);
  const Spectrum s0 = eigendecompose(c, 0, sc.mass_sq);
  const Spectrum s1 = eigendecompose(c, 1, sc.mass_sq);
  const int n1 = c.mesh.edge_count(), n2 = c.mesh.face_count();

  const auto random_constrained = [&]() {
    std::optional<Vec> f2;
    if (c.mesh.dim == 2) f2 = rng.vector(n2);
    return make_constrained(c, sc.mass_sq, rng.vector(n1), f2, rng.vector(n1));
  };

  double make_res = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    const CauchyData d = random_constrained();
    make_res = std::max(make_res, std::max(d.r1, d.r2) / d.scale);
  }
  out.add("cauchy.make_constrained", "generated data solves both constraints", make_res, 1e-10);

  const CauchyData d = random_constrained();
  double prop = 0.0;
  for (double t : {0.3, 1.7, 5.0}) {
    const CauchyData e = evolve_ultrastatic(c, d, t, s0, s1);
    prop = std::max(prop, std::max(e.r1, e.r2) / e.scale);
  }
  out.add("cauchy.constraint_propagation", "constraints persist along the exact flow", prop, 1e-9);

  // energy equality, optionally on a deliberately unconstrained datum
  CauchyData probe = d;
  if (sc.cauchy_data == "raw_random")
    probe = finish_cauchy_data(c, sc.mass_sq, rng.vector(c.mesh.node_count()),
                               rng.vector(c.mesh.node_count()), rng.vector(n1), rng.vector(n1));
  const EnergyReport ep = energy(c, sc.mass_sq, probe, /*require_admissible=*/false);
  out.add("cauchy.energy_equality", "density and sector energies agree on constrained data",
          std::abs(ep.density_form - ep.spectral_form) / std::max(ep.density_form, 1e-300), 1e-10);

  const EnergyReport e0 = energy(c, sc.mass_sq, d);
  double cons = 0.0, sigt = 0.0;
  const CauchyData b = random_constrained();
  const double sig_initial = symplectic_form(c, d, b);
  for (double t : {0.3, 1.7, 2.1, 5.0}) {
    const CauchyData dt_ = evolve_ultrastatic(c, d, t, s0, s1);
    const CauchyData bt_ = evolve_ultrastatic(c, b, t, s0, s1);
    const EnergyReport et = energy(c, sc.mass_sq, dt_);
    cons = std::max(cons, std::abs(et.density_form - e0.density_form) / e0.density_form);
    sigt = std::max(sigt, std::abs(symplectic_form(c, dt_, bt_) - sig_initial) /
                              std::max(std::abs(sig_initial), 1.0));
  }
  out.add("cauchy.energy_conservation", "total energy constant along the flow", cons, 1e-10);
  out.add("cauchy.sigma_time_independence", "symplectic form constant along the flow", sigt, 1e-9);

  const double route =
      std::abs(symplectic_form(c, d, b) - symplectic_form_sectors(c, d, b)) /
      std::max(std::abs(sig_initial), 1.0);
  out.add("cauchy.sigma_route_agreement", "field-strength and sector routes agree", route, 1e-10);

  const auto fam = constrained_spanning_set(c, sc.mass_sq);
  const int rank = numerical_rank(sigma_gram(c, fam), 1e-9);
  out.add("cauchy.sigma_gram_rank", "symplectic Gram has full rank on the spanning set",
          std::abs(rank - 2.0 * n1), 0.5);
}

// ---------------------------------------------------------------------------
// suite: green

inline void run_green_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out) {
  const SpacetimeGrid g = ultrastatic_grid(sc);
  const GreenSolver sp = make_green_solver(g, OperatorKind::Proca);
  const GreenSolver sn = make_green_solver(g, OperatorKind::KG);
  const SpMat p = assemble_proca(g).mat;
  const SpMat n = assemble_kg(g).mat;
  const SpMat q = assemble_q(g).mat;
  const Vec mask = margin_mask(g, g.margin);
  const Vec maskx = margin_mask(g, g.margin + 2);

  double inv_ret = 0.0, inv_adv = 0.0, qfac = 0.0, kernel = 0.0, dense = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = maskx.cwiseProduct(rng.vector(g.sec_dim()));
    inv_ret = std::max(inv_ret, interior_residual(g, p, retarded(sp, f), f, 2));
    inv_ret = std::max(inv_ret, interior_residual(g, n, retarded(sn, f), f, 2));
    inv_adv = std::max(inv_adv, interior_residual(g, p, advanced(sp, f), f, 2));
    inv_adv = std::max(inv_adv, interior_residual(g, n, advanced(sn, f), f, 2));

    const Vec direct = causal_propagator(sp, f);
    const Vec via_left = masked(g, Vec(q * causal_propagator(sn, f)), 2);
    const Vec via_right = causal_propagator(sn, masked(g, Vec(q * f), g.margin));
    const double scale = std::max(direct.norm(), 1e-300);
    qfac = std::max(qfac, masked(g, Vec(via_left - direct), 2).norm() / scale);
    qfac = std::max(qfac, masked(g, Vec(via_right - direct), 2).norm() / scale);

    const Vec pg = masked(g, Vec(p * f), g.margin);
    kernel = std::max(kernel, causal_propagator(sp, pg).norm() / std::max(f.norm(), 1e-300));

    for (bool retard : {true, false}) {
      const Vec fm = mask.cwiseProduct(rng.vector(g.sec_dim()));
      const Vec fast = retard ? retarded(sp, fm) : advanced(sp, fm);
      const Vec slow = causal_dense_solve(sp, p, fm, retard);
      dense = std::max(dense, (fast - slow).norm() / std::max(fast.norm(), 1e-300));
    }
  }
  out.add("green.retarded_inverse", "operator applied to retarded solve returns the source",
          inv_ret, 1e-8);
  out.add("green.advanced_inverse", "operator applied to advanced solve returns the source",
          inv_adv, 1e-8);
  out.add("green.q_factorization", "constrained propagator factors through the wave propagator",
          qfac, 1e-9);
  out.add("green.kernel_images", "operator images are annihilated by the causal propagator",
          kernel, 1e-8);
  out.add("green.dense_agreement", "block substitution matches the sparse-LU subsystem", dense,
          1e-9);

  // cone test with a point impulse at the central slice
  const int kmid = g.time_steps / 2, x0 = g.n0() / 2;
  Vec imp = Vec::Zero(g.sec_dim());
  imp[g.a1_idx(kmid, x0)] = 1.0;
  const double cone =
      std::max(cone_leakage(g, retarded(sp, imp), kmid, x0, true, 1.0),
               cone_leakage(g, advanced(sp, imp), kmid, x0, false, 1.0));
  out.add("green.cone_leakage", "responses stay inside the stencil-widened lightcone", cone,
          1e-10);

  // bridge between the slice symplectic form and the pairing route
  const QuasifreeState st = make_state(g);
  const Vec f = mask.cwiseProduct(rng.vector(g.sec_dim()));
  const Vec h = mask.cwiseProduct(rng.vector(g.sec_dim()));
  const SigmaAudit audit = sigma_slice_audit(st, f, h);
  out.add("green.bridge_magnitude", "slice symplectic form matches the pairing in magnitude",
          audit.mismatch, 1e-8);
}

// ---------------------------------------------------------------------------
// suite: moller

inline void run_moller_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out) {
  if (!sc.mesh1) throw std::invalid_argument("moller suite needs grid.mesh1");
  if (sc.chi != "smoothstep")
    throw std::invalid_argument("moller suite needs a smoothstep interpolation window");
  const SpacetimeGrid g0 = build_grid(sc.mesh0, *sc.mesh1, chi_zero(), sc.Nt, sc.dt, sc.margin,
                                      sc.mass_sq);
  const SpacetimeGrid gchi = build_grid(sc.mesh0, *sc.mesh1, chi_from_scenario(sc), sc.Nt, sc.dt,
                                        sc.margin, sc.mass_sq);
  const SpacetimeGrid g1 = build_grid(sc.mesh0, *sc.mesh1, chi_one(), sc.Nt, sc.dt, sc.margin,
                                      sc.mass_sq);
  const MollerOperator rp = moller_plus(g0, gchi);
  const MollerOperator rm = moller_minus(gchi, g1);
  const MollerOperator r = compose_chain({&rp, &rm});

  double inv = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = masked(g0, rng.vector(g0.sec_dim()), g0.margin);
    inv = std::max(inv, masked(g0, Vec(r.Rinv * (r.R * f) - f), g0.margin).norm() /
                            std::max(f.norm(), 1e-300));
  }
  out.add("moller.inverse", "closed-form inverse inverts on margined sections", inv, 1e-8);

  // identity action in the static past / future
  const int wa = static_cast<int>(sc.window_a / sc.dt);
  Vec fpast = Vec::Zero(g0.sec_dim());
  Xorshift64Star prng(sc.seed + 77);
  for (int k = g0.margin; k < std::max(g0.margin + 2, wa - 3); ++k) {
    for (int nn = 0; nn < g0.n0(); ++nn) fpast[g0.a0_idx(k, nn)] = prng.next_sym();
    for (int e = 0; e < g0.n1(); ++e) fpast[g0.a1_idx(k, e)] = prng.next_sym();
  }
  out.add("moller.past_identity", "forward operator is the identity in the static past",
          Vec(rp.R * fpast - fpast).norm() / std::max(fpast.norm(), 1e-300), 1e-10);

  const int wb = static_cast<int>(sc.window_b / sc.dt) + 1;
  Vec ffut = Vec::Zero(gchi.sec_dim());
  for (int k = std::min(gchi.time_steps - gchi.margin - 2, wb + 3);
       k < gchi.time_steps - gchi.margin; ++k) {
    for (int nn = 0; nn < gchi.n0(); ++nn) ffut[gchi.a0_idx(k, nn)] = prng.next_sym();
    for (int e = 0; e < gchi.n1(); ++e) ffut[gchi.a1_idx(k, e)] = prng.next_sym();
  }
  out.add("moller.future_identity", "backward operator is the identity in the static future",
          Vec(rm.R * ffut - ffut).norm() / std::max(ffut.norm(), 1e-300), 1e-10);

  // one-step intertwining with the backward isometry
  const SpMat pchi = assemble_proca(gchi).mat;
  const SpMat p0 = assemble_proca(g0).mat;
  const SpMat kback = fiber_isometry(gchi, g0).mat;
  double intw = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = masked(g0, rng.vector(g0.sec_dim()), g0.margin);
    const Vec lhs = kback * Vec(pchi * Vec(rp.R * f));
    const Vec rhs = p0 * f;
    intw = std::max(intw, masked(g0, Vec(lhs - rhs), 2).norm() / std::max(rhs.norm(), 1e-300));
  }
  out.add("moller.intertwine", "isometry carries the interpolated dynamics back", intw, 1e-8);

  const Mat radj = moller_adjoint(r);
  double dual = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = masked(g0, rng.vector(g0.sec_dim()), g0.margin);
    const Vec h = masked(g1, rng.vector(g1.sec_dim()), g1.margin);
    const double lhs = lorentz_pairing(g1, h, Vec(r.R * f));
    const double rhs = lorentz_pairing(g0, Vec(radj * h), f);
    dual = std::max(dual, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0));
  }
  out.add("moller.adjoint_duality", "adjoint satisfies the pairing identity", dual, 1e-10);

  const Mat closed = moller_plus_adjoint_closed(g0, gchi);
  const Mat rpadj = moller_adjoint(rp);
  double cf = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec h = masked(gchi, rng.vector(gchi.sec_dim()), gchi.margin);
    const Vec a = masked(g0, Vec(rpadj * h), 2);
    const Vec bb = masked(g0, Vec(closed * h), 2);
    cf = std::max(cf, (a - bb).norm() / std::max(a.norm(), 1e-300));
  }
  out.add("moller.adjoint_closed_form", "adjoint equals the causal closed form", cf, 1e-8);

  const Mat rinv_adj = adjoint(r.Rinv, *r.target, *r.source);
  double invadj = 0.0;
  for (int rep = 0; rep < 2; ++rep) {
    const Vec h = masked(g0, rng.vector(g0.sec_dim()), g0.margin);
    const Vec x = radj.fullPivLu().solve(h);
    const Vec y = rinv_adj * h;
    invadj = std::max(invadj, masked(g1, Vec(x - y), g1.margin).norm() /
                                  std::max(y.norm(), 1e-300));
  }
  out.add("moller.adjoint_inverse", "inverse of the adjoint is the adjoint of the inverse",
          invadj, 1e-8);

  const PushforwardReport push = pushforward_propagator(r, rng, 6);
  out.add("moller.pushforward_propagator", "operator carries the causal propagator across",
          push.propagator_residual, 1e-7);
  out.add("moller.pushforward_intertwine",
          "adjoint intertwines the dynamics up to the volume ratio", push.intertwine_residual,
          1e-7);
  out.add("moller.solution_space", "solutions are carried to solutions", push.solution_residual,
          1e-7);

  // pulled-back state: CCR and positivity
  const QuasifreeState base = make_state(g0);
  PulledBackState ps;
  ps.base = &base;
  ps.grid = &g1;
  ps.radj = radj;
  const GreenSolver sol1 = make_green_solver(g1, OperatorKind::Proca);
  double ccr = 0.0;
  std::vector<Vec> battery;
  for (int i = 0; i < 8; ++i) battery.push_back(masked(g1, rng.vector(g1.sec_dim()), g1.margin));
  MatC gram(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) gram(i, j) = two_point(ps, battery[i], battery[j]);
  for (int i = 0; i < 4; ++i) {
    const Vec& f = battery[i];
    const Vec& h = battery[i + 4];
    const Complex comm = two_point(ps, f, h) - two_point(ps, h, f);
    const double pairing = lorentz_pairing(g1, f, causal_propagator(sol1, h));
    ccr = std::max(ccr, std::abs(comm - Complex(0, pairing)) / std::max(std::abs(pairing), 1.0));
  }
  out.add("moller.pullback_ccr", "pulled-back state keeps the commutation relations", ccr, 1e-7);
  Eigen::SelfAdjointEigenSolver<MatC> es(gram);
  out.add("moller.pullback_positivity", "pulled-back two-point Gram stays positive",
          std::max(0.0, -es.eigenvalues().minCoeff() / gram.norm()), 1e-8);
}

// ---------------------------------------------------------------------------
// suite: states

inline void run_states_suite(const Scenario& sc, Xorshift64Star& rng, CheckList& out,
                             SigmaAudit* audit_out = nullptr) {
  const SpacetimeGrid g = ultrastatic_grid(sc);
  const QuasifreeState s = make_state(g);
  const int n1 = s.complex.mesh.edge_count(), n2 = s.complex.mesh.face_count();
  const Vec mask = margin_mask(g, g.margin);

  const auto fam = constrained_spanning_set(s.complex, sc.mass_sq);
  double min_rayleigh = 1e300;
  for (const CauchyData& d : fam) {
    const double denom = d.a0.squaredNorm() + d.pi0.squaredNorm() + d.a1.squaredNorm() +
                         d.pi1.squaredNorm();
    min_rayleigh = std::min(min_rayleigh, mu_form(s, d, d) / denom);
  }
  out.add("states.mu_positive", "mu covariance positive on the constrained spanning set",
          -min_rayleigh, 0.0);

  const auto random_constrained = [&]() {
    std::optional<Vec> f2;
    if (s.complex.mesh.dim == 2) f2 = rng.vector(n2);
    return make_constrained(s.complex, sc.mass_sq, rng.vector(n1), f2, rng.vector(n1));
  };
  int violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const CauchyData a = random_constrained();
    const CauchyData b = random_constrained();
    const double sig = symplectic_form(s.complex, a, b);
    if (sig * sig > 4.0 * mu_form(s, a, a) * mu_form(s, b, b) * (1.0 + 1e-12)) ++violations;
  }
  out.add("states.cauchy_schwarz", "symplectic form bounded by the covariance", violations, 0.5);

  std::vector<Vec> battery(10);
  for (auto& f : battery) f = mask.cwiseProduct(rng.vector(g.sec_dim()));
  const GreenSolver sol = make_green_solver(g, OperatorKind::Proca);
  double ccr = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec& f = battery[i];
    const Vec& h = battery[i + 4];
    const Complex comm = two_point(s, f, h).value - two_point(s, h, f).value;
    const double pairing = lorentz_pairing(g, f, causal_propagator(sol, h));
    ccr = std::max(ccr, std::abs(comm - Complex(0, pairing)) / std::max(std::abs(pairing), 1.0));
  }
  out.add("states.ccr", "commutator equals the causal pairing", ccr, 1e-9);

  const SpMat p = assemble_proca(g).mat;
  double onshell = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = mask.cwiseProduct(rng.vector(g.sec_dim()));
    const Vec w = masked(g, rng.vector(g.sec_dim()), g.margin + 2);
    const Vec pw = masked(g, Vec(p * w), g.margin);
    const double scale =
        std::sqrt(std::abs(two_point(s, f, f).value.real()) * std::max(pw.squaredNorm(), 1e-300));
    onshell = std::max(onshell, std::abs(two_point(s, f, pw).value) / std::max(scale, 1e-300));
  }
  out.add("states.on_shell", "operator images are null directions", onshell, 1e-8);

  const Complex w4 = wick_n_point(s, {battery[0], battery[1], battery[2], battery[3]});
  const auto t2 = [&](int i, int j) { return two_point(s, battery[i], battery[j]).value; };
  const Complex pairing_sum = t2(0, 1) * t2(2, 3) + t2(0, 2) * t2(1, 3) + t2(0, 3) * t2(1, 2);
  out.add("states.wick_four", "four-point reduces to the three perfect pairings",
          std::abs(w4 - pairing_sum) / std::max(std::abs(pairing_sum), 1e-300), 1e-12);

  const MatC gram = two_point_gram(s, battery);
  Eigen::SelfAdjointEigenSolver<MatC> es(gram);
  out.add("states.gram_psd", "two-point Gram positive semidefinite",
          std::max(0.0, -es.eigenvalues().minCoeff() / gram.norm()), 1e-9);

  std::vector<double> fp_res(50);
  std::vector<Vec> fp_f(50), fp_h(50);
  for (int i = 0; i < 50; ++i) {
    fp_f[i] = mask.cwiseProduct(rng.vector(g.sec_dim()));
    fp_h[i] = mask.cwiseProduct(rng.vector(g.sec_dim()));
  }
  parallel_for(50, [&](int i) {
    const FpReport r = fp_equivalence(s, fp_f[i], fp_h[i]);
    fp_res[i] = r.residual / r.scale;
  });
  out.add("states.fp_equivalence", "two-point function equals the Q-twisted wave two-point",
          *std::max_element(fp_res.begin(), fp_res.end()), 1e-8);

  // localization invariance
  const double ta = sc.dt * std::round(0.38 * sc.Nt), tb = sc.dt * std::round(0.62 * sc.Nt);
  double loc = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const Vec f = mask.cwiseProduct(rng.vector(g.sec_dim()));
    const Vec h = mask.cwiseProduct(rng.vector(g.sec_dim()));
    const Complex a = two_point(s, localize(s, f, ta, tb), localize(s, h, ta, tb)).value;
    const Complex b = two_point(s, f, h).value;
    loc = std::max(loc, std::abs(a - b) / std::max(std::abs(b), 1.0));
  }
  out.add("states.localization", "windowed representative leaves the state unchanged", loc, 1e-8);

  // positive-frequency proxy on a taller grid
  const SpacetimeGrid gf = build_grid(sc.mesh0, sc.freq_Nt, sc.dt, sc.freq_margin, sc.mass_sq);
  const QuasifreeState sf = make_state(gf);
  int mode = 0;
  double best = 1e300;
  for (int i = 0; i < sf.spec1.eigenvalues.size(); ++i)
    if (std::abs(sf.spec1.eigenvalues[i] - 2.0) < best) {
      best = std::abs(sf.spec1.eigenvalues[i] - 2.0);
      mode = i;
    }
  const double omega = std::sqrt(sf.spec1.eigenvalues[mode] + sc.mass_sq);
  const Vec shape = sf.spec1.eigenvectors.col(mode);
  const int kc = gf.time_steps / 2;
  Vec fmode = Vec::Zero(gf.sec_dim());
  for (int k = kc - 3; k < kc + 3; ++k) {
    const double bump = std::sin(M_PI * (k - kc + 3) / 5.0);
    for (int e = 0; e < gf.n1(); ++e) fmode[gf.a1_idx(k, e)] = bump * shape[e];
  }
  const FrequencySpectrum spc = positive_frequency_spectrum(sf, fmode, fmode, sc.n_tau);
  int peak = 0;
  for (int i = 0; i < spc.magnitudes.size(); ++i)
    if (spc.magnitudes[i] > spc.magnitudes[peak]) peak = i;
  const double bin = 2.0 * M_PI / (sc.n_tau * gf.dt);
  out.add("states.freq_peak", "single mode peaks at its oscillator frequency",
          std::abs(spc.frequencies[peak] - omega), 0.5 * bin * 1.001);
  out.add("states.freq_single_mode", "single-mode negative-frequency mass below 1 percent",
          spc.negative_mass_ratio, 0.01);

  Vec fbroad = Vec::Zero(gf.sec_dim());
  for (int k = kc - 3; k < kc + 3; ++k) {
    for (int nn = 0; nn < gf.n0(); ++nn) fbroad[gf.a0_idx(k, nn)] = rng.next_sym();
    for (int e = 0; e < gf.n1(); ++e) fbroad[gf.a1_idx(k, e)] = rng.next_sym();
  }
  const FrequencySpectrum spb = positive_frequency_spectrum(sf, fbroad, fbroad, sc.n_tau);
  out.add("states.freq_broadband", "broadband negative-frequency mass below 5 percent",
          spb.negative_mass_ratio, 0.05);

  const SigmaAudit audit = sigma_slice_audit(s, battery[0], battery[1]);
  if (audit_out) *audit_out = audit;
  out.add("states.sigma_audit_magnitude", "slice and pairing symplectic routes agree in size",
          audit.mismatch, 1e-8);
}

// ---------------------------------------------------------------------------
// report assembly

struct RunOverrides {
  std::optional<std::vector<std::string>> suites;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance_scale;
};

struct RunResult {
  Json report;
  bool all_pass = false;
};

inline RunResult run_scenario(Scenario sc, const RunOverrides& ov = {}) {
  if (ov.suites) sc.suites = *ov.suites;
  if (ov.seed) sc.seed = *ov.seed;
  if (ov.tolerance_scale) sc.tolerance_scale = *ov.tolerance_scale;

  std::vector<std::string> suites = sc.suites;
  if (std::find(suites.begin(), suites.end(), "full") != suites.end())
    suites = {"complex", "spectral", "cauchy", "green", "moller", "states"};

  CheckList checks(sc.tolerance_scale);
  Xorshift64Star rng(sc.seed);
  SigmaAudit audit;
  bool have_audit = false;
  for (const std::string& suite : suites) {
    if (suite == "complex") {
      run_complex_suite(sc, rng, checks);
    } else if (suite == "spectral") {
      run_spectral_suite(sc, rng, checks);
    } else if (suite == "cauchy") {
      run_cauchy_suite(sc, rng, checks);
    } else if (suite == "green") {
      run_green_suite(sc, rng, checks);
    } else if (suite == "moller") {
      run_moller_suite(sc, rng, checks);
    } else if (suite == "states") {
      run_states_suite(sc, rng, checks, &audit);
      have_audit = true;
    } else {
      throw std::invalid_argument("unknown suite: " + suite);
    }
  }

  RunResult res;
  res.all_pass = checks.all_pass();
  Json& rep = res.report;
  rep["schema_version"] = 1;
  rep["scenario"] = sc.name;
  rep["seed"] = sc.seed;
  rep["tolerance_scale"] = sc.tolerance_scale;
  rep["suites"] = suites;
  if (have_audit) {
    rep["sign_audit"] = Json{{"sigma_slice_vs_pairing_sign", audit.sign},
                             {"magnitude_mismatch", audit.mismatch}};
  }
  Json arr = Json::array();
  for (const CheckResult& c : checks.items()) {
    arr.push_back(Json{{"id", c.id},
                       {"identity", c.identity},
                       {"residual", c.residual},
                       {"threshold", c.threshold},
                       {"pass", c.pass}});
  }
  rep["checks"] = arr;
  rep["all_pass"] = res.all_pass;
  return res;
}

inline void write_report(const Json& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report path " + path);
  out << report.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// dumps

inline void dump_spectrum(const Scenario& sc, const std::string& out_path) {
  const HodgeComplex c = build_complex(sc.mesh0);
  const Spectrum s = eigendecompose(c, 0, sc.mass_sq);
  export_spectrum_csv(out_path, s.eigenvalues);
}

inline void dump_impulse(const Scenario& sc, const std::string& out_path) {
  const SpacetimeGrid g = ultrastatic_grid(sc);
  const GreenSolver s = make_green_solver(g, OperatorKind::Proca);
  const int kmid = g.time_steps / 2, x0 = g.n0() / 2;
  Vec f = Vec::Zero(g.sec_dim());
  f[g.a1_idx(kmid, x0)] = 1.0;
  const Vec u = retarded(s, f);
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < g.time_steps; ++k)
    for (int i = 0; i < g.n0(); ++i) {
      double a0 = 0.0;
      if (k > 0 && k + 1 < g.time_steps)
        a0 = 0.5 * (u[g.a0_idx(k, i)] + u[g.a0_idx(k - 1, i)]);
      std::vector<double> row{g.time(k), i * g.mesh.spacing[0], a0};
      for (int axis = 0; axis < g.mesh.dim; ++axis)
        row.push_back(u[g.a1_idx(k, axis * g.n0() + i)]);
      rows.push_back(std::move(row));
    }
  write_csv(out_path, rows);
}

inline void dump_frequency(const Scenario& sc, const std::string& out_path) {
  const SpacetimeGrid gf = build_grid(sc.mesh0, sc.freq_Nt, sc.dt, sc.freq_margin, sc.mass_sq);
  const QuasifreeState sf = make_state(gf);
  int mode = 0;
  double best = 1e300;
  for (int i = 0; i < sf.spec1.eigenvalues.size(); ++i)
    if (std::abs(sf.spec1.eigenvalues[i] - 2.0) < best) {
      best = std::abs(sf.spec1.eigenvalues[i] - 2.0);
      mode = i;
    }
  const Vec shape = sf.spec1.eigenvectors.col(mode);
  const int kc = gf.time_steps / 2;
  Vec fmode = Vec::Zero(gf.sec_dim());
  for (int k = kc - 3; k < kc + 3; ++k) {
    const double bump = std::sin(M_PI * (k - kc + 3) / 5.0);
    for (int e = 0; e < gf.n1(); ++e) fmode[gf.a1_idx(k, e)] = bump * shape[e];
  }
  const FrequencySpectrum spc = positive_frequency_spectrum(sf, fmode, fmode, sc.n_tau);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < spc.frequencies.size(); ++i)
    rows.push_back({spc.frequencies[i], spc.magnitudes[i]});
  write_csv(out_path, rows);
}

// energy / symplectic / constraint trace of an evolved random datum
inline void dump_cauchy_trace(const Scenario& sc, std::uint64_t seed,
                              const std::string& out_path) {
  const HodgeComplex c = build_complex(sc.mesh0);
  const Spectrum s0 = eigendecompose(c, 0, sc.mass_sq);
  const Spectrum s1 = eigendecompose(c, 1, sc.mass_sq);
  Xorshift64Star rng(seed);
  const int n1 = c.mesh.edge_count();
  std::optional<Vec> f2;
  if (c.mesh.dim == 2) f2 = rng.vector(c.mesh.face_count());
  const CauchyData d = make_constrained(c, sc.mass_sq, rng.vector(n1), f2, rng.vector(n1));
  std::vector<std::vector<double>> rows;
  for (int i = 0; i <= 50; ++i) {
    const double t = 0.1 * i;
    const CauchyData e = evolve_ultrastatic(c, d, t, s0, s1);
    const EnergyReport er = energy(c, sc.mass_sq, e);
    rows.push_back({t, er.density_form, er.spectral_form, e.r1, e.r2});
  }
  write_csv(out_path, rows);
}

}  // namespace procalab
