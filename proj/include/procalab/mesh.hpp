#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace procalab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Periodic structured lattice carrying a positive diagonal Riemannian metric.
// The metric component along each edge direction is sampled at edge midpoints.
// Cell ordering is fixed: row-major with axis 0 fastest; edges come in one
// block per axis (axis-0 edges first), faces follow node ordering.
struct SpatialMesh {
  int dim = 1;
  std::array<int, 2> sizes{0, 0};
  std::array<double, 2> spacing{1.0, 1.0};
  Vec metric;  // per-edge h > 0, axis-0 block then axis-1 block

  int node_count() const { return dim == 1 ? sizes[0] : sizes[0] * sizes[1]; }
  int edge_count() const { return dim * node_count(); }
  int face_count() const { return dim == 2 ? node_count() : 0; }
  int cell_count(int degree) const {
    switch (degree) {
      case 0: return node_count();
      case 1: return edge_count();
      case 2: return face_count();
      default: throw std::invalid_argument("mesh: degree must be 0, 1 or 2");
    }
  }

  int wrap(int i, int axis) const {
    const int n = sizes[axis];
    return ((i % n) + n) % n;
  }
  int node_index(int i, int j = 0) const { return wrap(i, 0) + (dim == 2 ? sizes[0] * wrap(j, 1) : 0); }
  // Edge along `axis` whose tail sits at node (i,j).
  int edge_index(int axis, int i, int j = 0) const { return axis * node_count() + node_index(i, j); }
  int face_index(int i, int j) const { return node_index(i, j); }

  double edge_metric(int axis, int i, int j = 0) const { return metric[edge_index(axis, i, j)]; }
};

struct FormField {
  int degree = 0;
  Vec values;
};

inline FormField make_form(const SpatialMesh& mesh, int degree) {
  if (degree == 2 && mesh.dim != 2) throw std::invalid_argument("mesh: 2-forms require dim = 2");
  return FormField{degree, Vec::Zero(mesh.cell_count(degree))};
}

using MetricSpec = std::variant<double, Vec>;

inline SpatialMesh build_mesh(int dim, const std::vector<int>& sizes,
                              const std::vector<double>& spacing, const MetricSpec& metric_spec) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("build_mesh: dim must be 1 or 2");
  if (static_cast<int>(sizes.size()) != dim) throw std::invalid_argument("build_mesh: sizes/dim mismatch");
  SpatialMesh mesh;
  mesh.dim = dim;
  for (int a = 0; a < dim; ++a) {
    if (sizes[a] < 3) throw std::invalid_argument("build_mesh: each axis needs at least 3 cells");
    mesh.sizes[a] = sizes[a];
    double dx = spacing.size() == 1 ? spacing[0] : spacing.at(a);
    if (!(dx > 0.0)) throw std::invalid_argument("build_mesh: spacing must be positive");
    mesh.spacing[a] = dx;
  }
  if (dim == 1) mesh.sizes[1] = 1, mesh.spacing[1] = 1.0;

  const int ne = mesh.edge_count();
  if (std::holds_alternative<double>(metric_spec)) {
    const double h = std::get<double>(metric_spec);
    if (!(h > 0.0)) throw std::invalid_argument("build_mesh: metric must be positive");
    mesh.metric = Vec::Constant(ne, h);
  } else {
    mesh.metric = std::get<Vec>(metric_spec);
    if (mesh.metric.size() != ne) throw std::invalid_argument("build_mesh: metric table length mismatch");
    if ((mesh.metric.array() <= 0.0).any()) throw std::invalid_argument("build_mesh: metric must be positive");
  }
  return mesh;
}

// Diagonal inner-product weights for k-forms derived from a per-edge metric
// table (which need not be the mesh's own: spacetime grids re-weight slices).
// 0-forms carry the volume element, 1-forms volume times the inverse metric
// along the edge, 2-forms volume times the inverse metric of both axes.
struct HodgeWeights {
  Vec w0, w1, w2;
};

namespace detail {

inline double node_metric(const SpatialMesh& m, const Vec& h, int axis, int i, int j) {
  if (axis == 0) return 0.5 * (h[m.edge_index(0, i - 1, j)] + h[m.edge_index(0, i, j)]);
  return 0.5 * (h[m.edge_index(1, i, j - 1)] + h[m.edge_index(1, i, j)]);
}

}  // namespace detail

inline HodgeWeights hodge_weights(const SpatialMesh& mesh, const Vec& h) {
  HodgeWeights w;
  const double vol = mesh.spacing[0] * (mesh.dim == 2 ? mesh.spacing[1] : 1.0);
  w.w0.resize(mesh.node_count());
  w.w1.resize(mesh.edge_count());
  w.w2.resize(mesh.face_count());
  if (mesh.dim == 1) {
    for (int i = 0; i < mesh.sizes[0]; ++i) {
      w.w0[mesh.node_index(i)] = vol * std::sqrt(detail::node_metric(mesh, h, 0, i, 0));
      w.w1[mesh.edge_index(0, i)] = vol / std::sqrt(h[mesh.edge_index(0, i)]);
    }
    return w;
  }
  for (int j = 0; j < mesh.sizes[1]; ++j) {
    for (int i = 0; i < mesh.sizes[0]; ++i) {
      const double h0n = detail::node_metric(mesh, h, 0, i, j);
      const double h1n = detail::node_metric(mesh, h, 1, i, j);
      w.w0[mesh.node_index(i, j)] = vol * std::sqrt(h0n * h1n);

      // axis-0 edge at (i,j): own component exact, transverse one averaged
      // from the endpoint nodes
      const double h0e = h[mesh.edge_index(0, i, j)];
      const double h1e = 0.5 * (detail::node_metric(mesh, h, 1, i, j) + detail::node_metric(mesh, h, 1, i + 1, j));
      w.w1[mesh.edge_index(0, i, j)] = vol * std::sqrt(h0e * h1e) / h0e;

      const double h1f = h[mesh.edge_index(1, i, j)];
      const double h0f = 0.5 * (detail::node_metric(mesh, h, 0, i, j) + detail::node_metric(mesh, h, 0, i, j + 1));
      w.w1[mesh.edge_index(1, i, j)] = vol * std::sqrt(h0f * h1f) / h1f;

      const double h0q = 0.5 * (h[mesh.edge_index(0, i, j)] + h[mesh.edge_index(0, i, j + 1)]);
      const double h1q = 0.5 * (h[mesh.edge_index(1, i, j)] + h[mesh.edge_index(1, i + 1, j)]);
      w.w2[mesh.face_index(i, j)] = vol / std::sqrt(h0q * h1q);
    }
  }
  return w;
}

// Metric-free incidence derivatives scaled by 1/spacing, so form coefficients
// are pointwise component samples and Laplacians carry physical units.
inline SpMat incidence_d0(const SpatialMesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(2 * mesh.edge_count());
  for (int a = 0; a < mesh.dim; ++a) {
    const double inv = 1.0 / mesh.spacing[a];
    for (int j = 0; j < (mesh.dim == 2 ? mesh.sizes[1] : 1); ++j)
      for (int i = 0; i < mesh.sizes[0]; ++i) {
        const int e = mesh.edge_index(a, i, j);
        const int head = a == 0 ? mesh.node_index(i + 1, j) : mesh.node_index(i, j + 1);
        t.emplace_back(e, mesh.node_index(i, j), -inv);
        t.emplace_back(e, head, inv);
      }
  }
  SpMat d0(mesh.edge_count(), mesh.node_count());
  d0.setFromTriplets(t.begin(), t.end());
  return d0;
}

inline SpMat incidence_d1(const SpatialMesh& mesh) {
  SpMat d1(mesh.face_count(), mesh.edge_count());
  if (mesh.dim != 2) return d1;
  std::vector<Triplet> t;
  t.reserve(4 * mesh.face_count());
  const double ix = 1.0 / mesh.spacing[0], iy = 1.0 / mesh.spacing[1];
  for (int j = 0; j < mesh.sizes[1]; ++j)
    for (int i = 0; i < mesh.sizes[0]; ++i) {
      const int f = mesh.face_index(i, j);
      t.emplace_back(f, mesh.edge_index(1, i + 1, j), ix);
      t.emplace_back(f, mesh.edge_index(1, i, j), -ix);
      t.emplace_back(f, mesh.edge_index(0, i, j + 1), -iy);
      t.emplace_back(f, mesh.edge_index(0, i, j), iy);
    }
  d1.setFromTriplets(t.begin(), t.end());
  return d1;
}

// Discrete Hodge complex: d*d = 0 at matrix level, codifferentials are the
// weighted transposes, so d/delta adjointness is exact by construction.
struct HodgeComplex {
  SpatialMesh mesh;
  SpMat d0, d1;
  Vec w0, w1, w2;
  SpMat delta1, delta2;
  SpMat lap0, lap1;
};

inline SpMat diag_scale_left(const Vec& d, const SpMat& m) {
  return Vec(d.cwiseInverse()).asDiagonal() * m;
}

inline HodgeComplex build_complex(const SpatialMesh& mesh) {
  HodgeComplex c;
  c.mesh = mesh;
  c.d0 = incidence_d0(mesh);
  c.d1 = incidence_d1(mesh);
  const HodgeWeights w = hodge_weights(mesh, mesh.metric);
  c.w0 = w.w0;
  c.w1 = w.w1;
  c.w2 = w.w2;
  c.delta1 = diag_scale_left(c.w0, SpMat(c.d0.transpose()) * SpMat(c.w1.asDiagonal()));
  if (mesh.dim == 2)
    c.delta2 = diag_scale_left(c.w1, SpMat(c.d1.transpose()) * SpMat(c.w2.asDiagonal()));
  else
    c.delta2 = SpMat(mesh.edge_count(), 0);
  c.lap0 = c.delta1 * c.d0;
  c.lap1 = c.d0 * c.delta1;
  if (mesh.dim == 2) c.lap1 += SpMat(c.delta2 * c.d1);
  return c;
}

inline const Vec& weight(const HodgeComplex& c, int degree) {
  switch (degree) {
    case 0: return c.w0;
    case 1: return c.w1;
    case 2: return c.w2;
    default: throw std::invalid_argument("weight: degree must be 0, 1 or 2");
  }
}

inline double inner_product(const HodgeComplex& c, int degree, const FormField& f, const FormField& g) {
  if (f.degree != degree || g.degree != degree)
    throw std::invalid_argument("inner_product: degree mismatch");
  return f.values.dot(weight(c, degree).cwiseProduct(g.values));
}

inline double inner_product(const HodgeComplex& c, int degree, const Vec& f, const Vec& g) {
  return f.dot(weight(c, degree).cwiseProduct(g));
}

}  // namespace procalab
