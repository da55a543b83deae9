#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include "qurts/qstate.hpp"

namespace qurts {

// One recorded circuit operation over qubit labels.
struct GateEvent {
  enum Kind { Init, CtrlX, Unitary, Project } kind = Init;
  int q = -1;                                  // Init / Project
  int bit = 0;                                 // Project
  int target = -1;                             // CtrlX
  std::vector<std::pair<int, bool>> controls;  // CtrlX: (label, negated)
  std::vector<int> targets;                    // Unitary
  GateMatrix matrix;                           // Unitary
};

using Circuit = std::vector<GateEvent>;

// Replays a circuit from the initial scalar. `preexisting` labels are taken
// as input wires (already present in `start`); their Init events are skipped.
inline QState replay(const Circuit& c, QState start = QState(),
                     const std::vector<int>& preexisting = {}) {
  QState s = std::move(start);
  auto is_wire = [&](int q) {
    for (int w : preexisting)
      if (w == q) return true;
    return false;
  };
  for (const GateEvent& e : c) {
    switch (e.kind) {
      case GateEvent::Init:
        if (!is_wire(e.q)) s = s.adjoin_zero(e.q);
        break;
      case GateEvent::CtrlX: s = s.apply_single_target(e.target, e.controls); break;
      case GateEvent::Unitary: s = s.apply_unitary(e.matrix, e.targets); break;
      case GateEvent::Project: {
        auto branches = s.measure(e.q);
        s = std::move(branches[e.bit].second);
        break;
      }
    }
  }
  return s;
}

}  // namespace qurts
