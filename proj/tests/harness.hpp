#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qurts/parser.hpp"
#include "qurts/simsem.hpp"
#include "qurts/uncsem.hpp"

namespace qurts::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Program load_corpus(const std::string& name) {
  return parse_program(read_file(std::string(QURTS_CORPUS_DIR) + "/" + name));
}

inline std::vector<std::string> corpus_accepted() {
  return {
      "toy.qrt",         "and.qrt",          "and3.qrt",        "forget.qrt",
      "reinitialise.qrt", "my_cnot.qrt",     "cx_chain.qrt",    "good_forget.qrt",
      "swap_pair.qrt",   "two_branch_cnot.qrt", "qif_drop.qrt", "nested_qif.qrt",
      "qif_nested3.qrt", "or3.qrt",          "bell.qrt",        "ghz.qrt",
      "copy_ref.qrt",    "meas_two.qrt",     "if_classical.qrt", "pairs.qrt",
      "defrost.qrt",     "call_chain.qrt",   "gate_reuse.qrt",  "phase_kick.qrt",
      "grover3.qrt",
  };
}

inline std::vector<std::string> corpus_nested_qif() {
  return {"and.qrt", "and3.qrt", "or3.qrt", "nested_qif.qrt", "qif_nested3.qrt",
          "grover3.qrt"};
}

struct SemDiff {
  double max_state_diff = 0.0;
  double max_prob_diff = 0.0;
  bool structure_ok = true;
  std::string note;
};

// Runs both semantics on a closed entry function and compares the surviving
// quantum state, classical results and branch probabilities per measurement
// branch.
inline SemDiff compare_semantics(const Program& p, const std::string& entry = "main") {
  SemDiff d;
  auto sim = eval_program(p, entry, SimOptions{true, true, 1e-9});
  auto unc = run_eager(p, entry);
  std::sort(sim.begin(), sim.end(),
            [](const SimBranch& a, const SimBranch& b) { return a.outcomes < b.outcomes; });
  if (sim.size() != unc.size()) {
    d.structure_ok = false;
    d.note = "branch counts differ";
    return d;
  }
  for (size_t i = 0; i < sim.size(); ++i) {
    const SimBranch& sb = sim[i];
    const UncBranch& ub = unc[i];
    if (sb.outcomes != ub.outcomes) {
      d.structure_ok = false;
      d.note = "branch outcomes differ";
      return d;
    }
    d.max_prob_diff = std::max(d.max_prob_diff, std::abs(sb.probability - ub.probability));
    // order both states by the result components (closed entries have no wires)
    std::vector<int> so, uo = ub.wire_labels;
    for (auto& l : sb.result_locs)
      if (l.quantum) so.push_back(l.id);
    uo.insert(uo.end(), ub.result_labels.begin(), ub.result_labels.end());
    if (so.size() != uo.size() || so.size() != size_t(sb.env.q.num_qubits()) ||
        uo.size() != size_t(ub.final_state.num_qubits())) {
      d.structure_ok = false;
      d.note = "surviving qubit counts differ";
      return d;
    }
    QState a = sb.env.q.with_label_order(so);
    QState b = ub.final_state.with_label_order(uo);
    for (size_t k = 0; k < a.amplitudes().size(); ++k)
      d.max_state_diff =
          std::max(d.max_state_diff, std::abs(a.amplitudes()[k] - b.amplitudes()[k]));
    // classical results positionally
    std::vector<bool> sc, uc;
    for (auto& l : sb.result_locs)
      if (!l.quantum) sc.push_back(sb.env.cstore.at(l.id));
    for (auto& l : ub.result_locs)
      if (!l.quantum) uc.push_back(ub.classical.at(l.id));
    if (sc != uc) {
      d.structure_ok = false;
      d.note = "classical results differ";
      return d;
    }
  }
  return d;
}

}  // namespace qurts::testing
