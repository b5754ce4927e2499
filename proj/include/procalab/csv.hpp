#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "procalab/mesh.hpp"

namespace procalab {

namespace detail {

// fixed shortest-roundtrip formatting so identical runs emit identical bytes
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_csv(const std::string& path, const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << detail::fmt_double(row[i]);
    }
    out << '\n';
  }
}

// (row, col, value) triplets of a sparse matrix
inline void export_sparse_csv(const std::string& path, const SpMat& m) {
  std::vector<std::vector<double>> rows;
  for (int c = 0; c < m.outerSize(); ++c)
    for (SpMat::InnerIterator it(m, c); it; ++it)
      rows.push_back({static_cast<double>(it.row()), static_cast<double>(it.col()), it.value()});
  write_csv(path, rows);
}

inline void export_spectrum_csv(const std::string& path, const Vec& eigenvalues) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    rows.push_back({static_cast<double>(i), eigenvalues[i]});
  write_csv(path, rows);
}

}  // namespace procalab
