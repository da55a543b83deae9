#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "qurts/gates.hpp"

namespace qurts {

struct QStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int max_qubits() {
  if (const char* s = std::getenv("QURTS_MAX_QUBITS")) {
    int v = std::atoi(s);
    if (v > 0) return v;
  }
  return 24;
}

// Dense state vector over an ordered list of opaque qubit labels. The first
// label is the most significant bit of the amplitude index, so amplitudes
// read like ket strings in label order. With no labels the state is a single
// scalar amplitude.
class QState {
 public:
  QState() : amps_(1, cplx(1.0)) {}

  static QState scalar(cplx a) {
    QState s;
    s.amps_[0] = a;
    return s;
  }

  static QState from_raw(std::vector<int> labels, std::vector<cplx> amps) {
    if (amps.size() != (size_t(1) << labels.size()))
      throw QStateError("from_raw: size mismatch");
    QState s;
    s.labels_ = std::move(labels);
    s.amps_ = std::move(amps);
    return s;
  }

  int num_qubits() const { return int(labels_.size()); }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<cplx>& amplitudes() const { return amps_; }

  bool has_label(int l) const { return index_of(l) >= 0; }

  int index_of(int l) const {
    for (size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == l) return int(i);
    return -1;
  }

  // s ⊗ |0> at a fresh label.
  QState adjoin_zero(int label) const {
    if (has_label(label)) throw QStateError("adjoin_zero: duplicate label");
    if (num_qubits() + 1 > max_qubits()) throw QStateError("qubit cap exceeded");
    QState r;
    r.labels_ = labels_;
    r.labels_.push_back(label);
    r.amps_.assign(amps_.size() * 2, cplx(0));
    for (size_t i = 0; i < amps_.size(); ++i) r.amps_[i << 1] = amps_[i];
    return r;
  }

  // Multi-controlled X with per-control polarity: |x..><y| -> y ^ AND(controls).
  QState apply_single_target(int target, const std::vector<std::pair<int, bool>>& controls)
      const {
    int t = need(target);
    std::vector<std::pair<int, bool>> cpos;
    for (auto& [l, neg] : controls) {
      if (l == target) throw QStateError("single target: target among controls");
      cpos.emplace_back(need(l), neg);
    }
    QState r = *this;
    size_t tbit = bit(t);
    for (size_t i = 0; i < amps_.size(); ++i) {
      bool fire = true;
      for (auto& [c, neg] : cpos) {
        bool b = (i & bit(c)) != 0;
        if (b == neg) fire = false;
      }
      if (fire && (i & tbit) == 0) std::swap(r.amps_[i], r.amps_[i | tbit]);
    }
    return r;
  }

  // U on the listed target labels (first target = most significant row bit).
  // k = 0 is allowed and multiplies the state by the 1x1 scalar.
  QState apply_unitary(const GateMatrix& u, const std::vector<int>& targets) const {
    if (int(targets.size()) != u.qubits) throw QStateError("apply_unitary: arity mismatch");
    if (!is_unitary(u)) throw QStateError("apply_unitary: matrix is not unitary");
    QState r = *this;
    if (u.qubits == 0) {
      for (auto& a : r.amps_) a *= u.m[0];
      return r;
    }
    std::vector<int> pos;
    for (int l : targets) pos.push_back(need(l));
    size_t k = targets.size();
    size_t sub = size_t(1) << k;
    std::vector<cplx> in(sub), out(sub);
    // iterate over assignments of the non-target labels
    size_t rest_mask = amps_.size() - 1;
    for (int p : pos) rest_mask &= ~bit(p);
    for (size_t base = 0;; base = (base - rest_mask) & rest_mask) {
      for (size_t v = 0; v < sub; ++v) {
        size_t idx = base;
        for (size_t j = 0; j < k; ++j)
          if (v & (size_t(1) << (k - 1 - j))) idx |= bit(pos[j]);
        in[v] = amps_[idx];
      }
      for (size_t rr = 0; rr < sub; ++rr) {
        cplx s = 0;
        for (size_t cc = 0; cc < sub; ++cc) s += u.m[rr * sub + cc] * in[cc];
        out[rr] = s;
      }
      for (size_t v = 0; v < sub; ++v) {
        size_t idx = base;
        for (size_t j = 0; j < k; ++j)
          if (v & (size_t(1) << (k - 1 - j))) idx |= bit(pos[j]);
        r.amps_[idx] = out[v];
      }
      if (base == rest_mask) break;
    }
    return r;
  }

  // Lift of a classical injection: |x> on in_labels maps to |c(x)> over
  // in_labels + fresh_labels. Bit i of the table words is the i-th label.
  QState apply_lifted(const std::vector<uint32_t>& table, int n, int m,
                      const std::vector<int>& in_labels, const std::vector<int>& fresh_labels)
      const {
    if (int(in_labels.size()) != n || int(fresh_labels.size()) != m - n)
      throw QStateError("apply_lifted: label counts do not match the table");
    {
      std::vector<uint32_t> v = table;
      std::sort(v.begin(), v.end());
      if (std::adjacent_find(v.begin(), v.end()) != v.end())
        throw QStateError("apply_lifted: table is not injective");
    }
    QState r = *this;
    for (int l : fresh_labels) r = r.adjoin_zero(l);
    std::vector<int> pos;
    for (int l : in_labels) pos.push_back(r.need(l));
    for (int l : fresh_labels) pos.push_back(r.need(l));
    std::vector<cplx> out(r.amps_.size(), cplx(0));
    for (size_t i = 0; i < r.amps_.size(); ++i) {
      if (r.amps_[i] == cplx(0)) continue;
      uint32_t x = 0;
      for (int j = 0; j < n; ++j)
        if (i & r.bit(pos[j])) x |= 1u << j;
      uint32_t y = table[x];
      size_t idx = i;
      for (int j = 0; j < m; ++j) {
        size_t b = r.bit(pos[j]);
        if (y & (1u << j))
          idx |= b;
        else
          idx &= ~b;
      }
      out[idx] += r.amps_[i];
    }
    r.amps_ = std::move(out);
    return r;
  }

  // Projective measurement: both branches, label removed. Branch norms are
  // not renormalised; their squared norms are the outcome probabilities.
  std::vector<std::pair<int, QState>> measure(int label) const {
    int p = need(label);
    std::vector<std::pair<int, QState>> out;
    for (int b = 0; b < 2; ++b) {
      QState r;
      r.labels_ = labels_;
      r.labels_.erase(r.labels_.begin() + p);
      r.amps_.assign(amps_.size() / 2, cplx(0));
      for (size_t i = 0; i < amps_.size(); ++i) {
        if (((i & bit(p)) != 0) != (b == 1)) continue;
        r.amps_[squeeze(i, p)] = amps_[i];
      }
      out.emplace_back(b, std::move(r));
    }
    return out;
  }

  // Non-physical uncomputation: sum over the computational basis of the
  // dropped labels. May increase the norm.
  QState drop_sum(const std::vector<int>& labels) const {
    QState r = *this;
    for (int l : labels) {
      int p = r.need(l);
      QState s;
      s.labels_ = r.labels_;
      s.labels_.erase(s.labels_.begin() + p);
      s.amps_.assign(r.amps_.size() / 2, cplx(0));
      for (size_t i = 0; i < r.amps_.size(); ++i) s.amps_[r.squeeze(i, p)] += r.amps_[i];
      r = std::move(s);
    }
    return r;
  }

  double norm2() const {
    double s = 0;
    for (auto& a : amps_) s += std::norm(a);
    return s;
  }

  cplx amp_of(const std::vector<std::pair<int, bool>>& assignment) const {
    size_t idx = 0;
    if (assignment.size() != labels_.size())
      throw QStateError("amp_of: assignment size mismatch");
    for (auto& [l, b] : assignment)
      if (b) idx |= bit(need(l));
    return amps_[idx];
  }

  // Reorders labels to the given permutation of the current label set.
  QState with_label_order(const std::vector<int>& order) const {
    if (order.size() != labels_.size()) throw QStateError("with_label_order: size mismatch");
    QState r;
    r.labels_ = order;
    r.amps_.assign(amps_.size(), cplx(0));
    std::vector<int> src;
    for (int l : order) src.push_back(need(l));
    size_t n = labels_.size();
    for (size_t i = 0; i < amps_.size(); ++i) {
      size_t j = 0;
      for (size_t k = 0; k < n; ++k)
        if (i & bit(src[k])) j |= size_t(1) << (n - 1 - k);
      r.amps_[j] += amps_[i];
    }
    return r;
  }

  void rename_label(int from, int to) {
    if (from == to) return;
    if (has_label(to)) throw QStateError("rename_label: target exists");
    labels_[need(from)] = to;
  }

  friend bool approx_equal(const QState& a, const QState& b, double tol) {
    if (a.labels_.size() != b.labels_.size()) return false;
    // compare over a's label order
    std::vector<int> order = a.labels_;
    for (int l : order)
      if (!b.has_label(l)) return false;
    QState bb = b.with_label_order(order);
    for (size_t i = 0; i < a.amps_.size(); ++i)
      if (std::abs(a.amps_[i] - bb.amps_[i]) > tol) return false;
    return true;
  }

 private:
  int need(int label) const {
    int p = index_of(label);
    if (p < 0) throw QStateError("missing label " + std::to_string(label));
    return p;
  }
  // bit mask for label position p (first label most significant)
  size_t bit(int p) const { return size_t(1) << (labels_.size() - 1 - p); }
  // remove bit at position p from index i
  size_t squeeze(size_t i, int p) const {
    size_t b = bit(p);
    size_t high = i >> 1 >> (labels_.size() - 1 - p) << (labels_.size() - 1 - p);
    size_t low = i & (b - 1);
    return high | low;
  }

  std::vector<int> labels_;
  std::vector<cplx> amps_;
};

}  // namespace qurts
