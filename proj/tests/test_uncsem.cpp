#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "harness.hpp"
#include "qurts/normalize.hpp"

using namespace qurts;
using namespace qurts::testing;

namespace {
constexpr double kTol = 1e-9;
}

TEST_CASE("toy example: branch states agree with the simulation semantics") {
  Program p = load_corpus("toy.qrt");
  auto d = compare_semantics(p);
  CHECK(d.structure_ok);
  CHECK(d.max_state_diff < kTol);
  CHECK(d.max_prob_diff < kTol);
}

TEST_CASE("my_cnot compiles to exactly one controlled-X") {
  Program p = load_corpus("my_cnot.qrt");
  auto branches = run_eager(p, "my_cnot");
  REQUIRE(branches.size() == 1);
  const Circuit& c = branches[0].circuit;
  REQUIRE(c.size() == 1);
  CHECK(c[0].kind == GateEvent::CtrlX);
  REQUIRE(c[0].controls.size() == 1);
  CHECK(c[0].controls[0].second == false);
}

TEST_CASE("the qif-with-drop snippet compiles to a Toffoli") {
  Program p = load_corpus("qif_drop.qrt");
  auto branches = run_eager(p, "snippet");
  REQUIRE(branches.size() == 1);
  const UncBranch& b = branches[0];
  REQUIRE(b.wire_labels.size() == 2);  // x and z
  // the third interface qubit is the internal ancilla, which survives as the
  // second result component
  REQUIRE(b.result_labels.size() == 2);
  int lx = b.wire_labels[0], lz = b.wire_labels[1];
  int ly = b.result_labels[1];
  std::vector<int> wires = {lx, lz, ly};
  for (int in = 0; in < 8; ++in) {
    int bx = (in >> 2) & 1, bz = (in >> 1) & 1, by = in & 1;
    QState st = QState().adjoin_zero(lx).adjoin_zero(lz).adjoin_zero(ly);
    if (bx) st = st.apply_single_target(lx, {});
    if (bz) st = st.apply_single_target(lz, {});
    if (by) st = st.apply_single_target(ly, {});
    QState out = replay(b.circuit, st, wires);
    int want_y = by ^ (bx & bz);
    REQUIRE(out.num_qubits() == 3);
    std::vector<std::pair<int, bool>> want = {
        {lx, bx == 1}, {lz, bz == 1}, {ly, want_y == 1}};
    CAPTURE(in);
    CHECK(std::abs(out.amp_of(want) - cplx(1)) < kTol);
  }
}

TEST_CASE("gate-vertex reuse keeps the graph small") {
  Program p = load_corpus("gate_reuse.qrt");
  auto branches = run_eager(p, "main");
  REQUIRE(!branches.empty());
  // 2 init pairs + 1 cnot gate pair + 2 linear pairs: reuse means no second
  // cnot vertex is ever created
  CHECK(branches[0].graph_stats.at("init") == 2);
  CHECK(branches[0].graph_stats.at("gate") == 6);
  CHECK(branches[0].graph_stats.at("linear") == 2);
  CHECK(branches[0].graph_stats.count("merge") == 0);
}

TEST_CASE("circuit replay reproduces the recorded final state") {
  for (auto& f : {"toy.qrt", "bell.qrt", "cx_chain.qrt", "phase_kick.qrt", "and.qrt"}) {
    CAPTURE(f);
    Program p = load_corpus(f);
    auto branches = run_eager(p, "main");
    for (auto& b : branches) {
      QState redo = replay(b.circuit, QState(), {});
      CHECK(approx_equal(redo, b.final_state, kTol));
    }
  }
}

TEST_CASE("run_eager agrees with the simulation semantics on every corpus program") {
  for (auto& f : corpus_accepted()) {
    CAPTURE(f);
    Program p = load_corpus(f);
    auto d = compare_semantics(p);
    CHECK(d.structure_ok);
    CAPTURE(d.note);
    CHECK(d.max_state_diff < kTol);
    CHECK(d.max_prob_diff < kTol);
  }
}

TEST_CASE("interleavings: two-branch cnot, 10 schedules agree") {
  Program p = load_corpus("two_branch_cnot.qrt");
  auto rep = verify_interleavings(p, "main", 10);
  CHECK(rep.runs == 10);
  CHECK(rep.agreed);
  CHECK(rep.max_distance < kTol);
}

TEST_CASE("interleavings: nested-qif corpus programs agree") {
  for (auto& f : corpus_nested_qif()) {
    if (std::string(f) == "grover3.qrt") continue;  // covered by acceptance (slow)
    CAPTURE(f);
    Program p = load_corpus(f);
    auto rep = verify_interleavings(p, "main", 6, 77);
    CHECK(rep.agreed);
    CHECK(rep.max_distance < kTol);
  }
}

TEST_CASE("a single-thread program is trivially interleaving-independent") {
  Program p = load_corpus("pairs.qrt");
  auto rep = verify_interleavings(p, "main", 3);
  CHECK(rep.agreed);
  CHECK(rep.max_distance == 0.0);
}

TEST_CASE("normalisation inserts swaps for reordered qif results") {
  Program p = load_corpus("swap_pair.qrt");
  Program n = normalize_qif_locations(p);
  CHECK(check_program(n).empty());
  // idempotent
  Program n2 = normalize_qif_locations(n);
  CHECK(ast_equal(n, n2));
  // a swap call is present in the normalised else branch
  bool found = false;
  std::function<void(const Block&)> walk = [&](const Block& b) {
    for (auto& s : b.stmts) {
      if (s.kind == Stmt::LetExpr && s.expr.kind == Expr::Lifted && s.expr.table == "swap")
        found = true;
      if (s.kind == Stmt::LetExpr && (s.expr.kind == Expr::Qif || s.expr.kind == Expr::If)) {
        walk(*s.expr.then_blk);
        walk(*s.expr.else_blk);
      }
    }
  };
  for (auto& f : n.fns) walk(f.body);
  CHECK(found);
  // an already aligned program is unchanged
  Program q = load_corpus("bell.qrt");
  Program qn = normalize_qif_locations(q);
  CHECK(ast_equal(q, qn));
  // and the simulation results are unchanged by normalisation
  auto before = eval_program(p, "main");
  auto after = eval_program(n, "main");
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(std::abs(before[i].probability - after[i].probability) < kTol);
}
