#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qurts {

using cplx = std::complex<double>;

// Row-major square matrix of size 2^n x 2^n.
struct GateMatrix {
  int qubits = 0;
  std::vector<cplx> m;

  size_t dim() const { return size_t(1) << qubits; }
  cplx at(size_t r, size_t c) const { return m[r * dim() + c]; }
};

inline bool is_unitary(const GateMatrix& g, double tol = 1e-9) {
  size_t d = g.dim();
  if (g.m.size() != d * d) return false;
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < d; ++j) {
      cplx s = 0;
      for (size_t k = 0; k < d; ++k) s += std::conj(g.at(k, i)) * g.at(k, j);
      if (std::abs(s - (i == j ? cplx(1) : cplx(0))) > tol) return false;
    }
  }
  return true;
}

// Named unitaries available in source text. `phase` is handled separately
// (it takes an angle, not qubits).
class GateTable {
 public:
  GateTable() {
    const double s = 1.0 / std::sqrt(2.0);
    add("H", 1, {s, s, s, -s});
    add("X", 1, {0, 1, 1, 0});
    add("Y", 1, {0, cplx(0, -1), cplx(0, 1), 0});
    add("Z", 1, {1, 0, 0, -1});
    add("S", 1, {1, 0, 0, cplx(0, 1)});
    add("T", 1, {1, 0, 0, std::polar(1.0, M_PI / 4)});
    add("CX", 2,
        {1, 0, 0, 0,
         0, 1, 0, 0,
         0, 0, 0, 1,
         0, 0, 1, 0});
  }

  void add(const std::string& name, int qubits, std::vector<cplx> m) {
    GateMatrix g{qubits, std::move(m)};
    if (!is_unitary(g)) throw std::invalid_argument("gate '" + name + "' is not unitary");
    table_[name] = std::move(g);
  }

  bool contains(const std::string& name) const { return table_.count(name) > 0; }
  const GateMatrix& get(const std::string& name) const { return table_.at(name); }

  static GateMatrix phase(double theta) { return GateMatrix{0, {std::polar(1.0, theta)}}; }

 private:
  std::map<std::string, GateMatrix> table_;
};

inline const GateTable& default_gates() {
  static GateTable t;
  return t;
}

}  // namespace qurts
