#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qurts/parser.hpp"
#include "qurts/simsem.hpp"

using namespace qurts;

namespace {
constexpr double kTol = 1e-9;
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

const char* kToy = R"(
fn main() -> #'static bool {
  let x0 = ket0;
  x0 as #'0 qbit;
  let x1 = H(x0);
  newlft 'a;
  let r = &'a x1;
  r as &'a qbit;
  let y = qif r { let z1 = ket1; z1 } else { let z0 = ket0; z0 };
  drop r;
  drop y;
  endlft 'a;
  let ret = meas(x1);
  ret
}
)";

// amplitude of the given bit pattern over the state's labels in their
// current order
cplx amp_at(const QState& q, std::initializer_list<int> bits) {
  std::vector<std::pair<int, bool>> a;
  size_t i = 0;
  for (int b : bits) a.emplace_back(q.labels()[i++], b == 1);
  return q.amp_of(a);
}

}  // namespace

TEST_CASE("toy example reproduces the evaluation trace") {
  Program p = parse_program(kToy);
  SimOptions opt;
  opt.verify = true;
  SimInterp interp(p, default_gates(), default_injections(), opt);
  std::map<size_t, Env> snaps;
  interp.on_step = [&](size_t i, const Env& e) { snaps.emplace(i, e); };
  auto branches = interp.eval_program("main");

  // after `let x0 = [0]()`: |0>
  REQUIRE(snaps.count(0));
  CHECK(snaps.at(0).q.num_qubits() == 1);
  CHECK(std::abs(amp_at(snaps.at(0).q, {0}) - cplx(1)) < kTol);
  // after H: |+>
  CHECK(std::abs(amp_at(snaps.at(2).q, {0}) - cplx(kInvSqrt2)) < kTol);
  CHECK(std::abs(amp_at(snaps.at(2).q, {1}) - cplx(kInvSqrt2)) < kTol);
  // after the qif: (|00> + |11>)/sqrt2
  {
    const QState& q = snaps.at(6).q;
    REQUIRE(q.num_qubits() == 2);
    CHECK(std::abs(amp_at(q, {0, 0}) - cplx(kInvSqrt2)) < kTol);
    CHECK(std::abs(amp_at(q, {1, 1}) - cplx(kInvSqrt2)) < kTol);
    CHECK(std::abs(amp_at(q, {0, 1})) < kTol);
    CHECK(std::abs(amp_at(q, {1, 0})) < kTol);
  }
  // after `drop y`: back to |+>
  CHECK(snaps.at(8).q.num_qubits() == 1);
  CHECK(std::abs(amp_at(snaps.at(8).q, {0}) - cplx(kInvSqrt2)) < kTol);
  CHECK(std::abs(amp_at(snaps.at(8).q, {1}) - cplx(kInvSqrt2)) < kTol);

  // two measurement branches with probability 1/2 each
  REQUIRE(branches.size() == 2);
  CHECK(branches[0].outcomes == std::vector<int>{0});
  CHECK(branches[1].outcomes == std::vector<int>{1});
  CHECK(std::abs(branches[0].probability - 0.5) < kTol);
  CHECK(std::abs(branches[1].probability - 0.5) < kTol);
  // the remaining memory is a scalar 1/sqrt2
  CHECK(branches[0].env.q.num_qubits() == 0);
  CHECK(std::abs(branches[0].env.q.amplitudes()[0] - cplx(kInvSqrt2)) < kTol);
}

TEST_CASE("copying a reference shares the location and leaves the state alone") {
  Program p = parse_program(
      "fn main() -> #'static bool {"
      "  let x = ket0;"
      "  newlft 'a;"
      "  let r = &'a x;"
      "  let r2 = copy r;"
      "  drop r;"
      "  drop r2;"
      "  endlft 'a;"
      "  x as #'0 qbit;"
      "  let b = meas(x);"
      "  b"
      "}");
  SimInterp interp(p);
  std::map<size_t, Env> snaps;
  interp.on_step = [&](size_t i, const Env& e) { snaps.emplace(i, e); };
  auto branches = interp.eval_program("main");
  // statement 3 is `let r2 = copy r`
  REQUIRE(snaps.count(3));
  const Env& e = snaps.at(3);
  CHECK(e.of("r") == e.of("r2"));
  CHECK(e.of("r") == e.of("x"));
  CHECK(e.q.num_qubits() == 1);
  REQUIRE(branches.size() == 2);
  CHECK(std::abs(branches[0].probability - 1.0) < kTol);
  CHECK(std::abs(branches[1].probability - 0.0) < kTol);
}

TEST_CASE("copying a bool duplicates the owned classical cell") {
  Program p = parse_program(
      "fn main() -> #'static bool {"
      "  let b = true;"
      "  let c = copy b;"
      "  drop b;"
      "  c"
      "}");
  SimInterp interp(p);
  std::map<size_t, Env> snaps;
  interp.on_step = [&](size_t i, const Env& e) { snaps.emplace(i, e); };
  auto branches = interp.eval_program("main");
  const Env& e = snaps.at(1);
  REQUIRE(e.of("b").size() == 1);
  REQUIRE(e.of("c").size() == 1);
  CHECK(!(e.of("b")[0] == e.of("c")[0]));
  CHECK(e.cstore.at(e.of("c")[0].id) == true);
  REQUIRE(branches.size() == 1);
  CHECK(branches[0].env.cstore.size() == 1);
}

TEST_CASE("controlled swap matches the Fredkin truth table on basis inputs") {
  for (int in = 0; in < 8; ++in) {
    int bp = (in >> 2) & 1, bx = (in >> 1) & 1, by = in & 1;
    auto ket = [](int b) { return b ? std::string("ket1") : std::string("ket0"); };
    std::string src =
        "fn main() -> (#'0 qbit, (#'0 qbit, #'0 qbit)) {"
        "  let p = " + ket(bp) + "; p as #'0 qbit;"
        "  let x = " + ket(bx) + ";"
        "  let y = " + ket(by) + ";"
        "  newlft 'c;"
        "  let r = &'c p;"
        "  r as &'c qbit;"
        "  let z = qif r { let t1 = (y, x); t1 } else { let t0 = (x, y); t0 };"
        "  drop r;"
        "  z as (#'0 qbit, #'0 qbit);"
        "  endlft 'c;"
        "  let res = (p, z);"
        "  res"
        "}";
    Program p = parse_program(src);
    SimOptions opt;
    opt.verify = true;
    auto branches = eval_program(p, "main", opt);
    REQUIRE(branches.size() == 1);
    auto& b = branches[0];
    REQUIRE(b.result_locs.size() == 3);
    std::vector<int> order;
    for (auto& l : b.result_locs) order.push_back(l.id);
    QState q = b.env.q.with_label_order(order);
    int o1 = bp ? by : bx;   // then-branch returns (y, x)
    int o2 = bp ? bx : by;
    std::vector<std::pair<int, bool>> want;
    want.emplace_back(order[0], bp == 1);
    want.emplace_back(order[1], o1 == 1);
    want.emplace_back(order[2], o2 == 1);
    CAPTURE(in);
    CHECK(std::abs(q.amp_of(want) - cplx(1)) < kTol);
    CHECK(std::abs(b.probability - 1.0) < kTol);
  }
}

TEST_CASE("measurement-free program yields one branch of probability 1") {
  Program p = parse_program(
      "fn main() -> #'static qbit {"
      "  let q = ket1;"
      "  q"
      "}");
  auto branches = eval_program(p, "main");
  REQUIRE(branches.size() == 1);
  CHECK(std::abs(branches[0].probability - 1.0) < kTol);
  CHECK(branches[0].outcomes.empty());
}

TEST_CASE("probability conservation across measurements") {
  Program p = parse_program(
      "fn main() -> (#'static bool, #'static bool) {"
      "  let a = ket0; a as #'0 qbit; let a1 = H(a);"
      "  let b = ket0; b as #'0 qbit; let b1 = H(b);"
      "  let ra = meas(a1);"
      "  let rb = meas(b1);"
      "  let res = (ra, rb);"
      "  res"
      "}");
  auto branches = eval_program(p, "main");
  REQUIRE(branches.size() == 4);
  double total = 0;
  for (auto& b : branches) total += b.probability;
  CHECK(std::abs(total - 1.0) < kTol);
}

TEST_CASE("well-formedness: entangled affine register with frozen witness") {
  // The toy example's post-qif environment is exactly the paper's table row:
  // frozen l_x, affine l_y, state (|00>+|11>)/sqrt2.
  Program p = parse_program(kToy);
  SimOptions opt;
  opt.verify = true;  // would throw if any intermediate env were ill-formed
  auto branches = eval_program(p, "main", opt);
  CHECK(branches.size() == 2);
}

TEST_CASE("well-formedness rejects an affine register in superposition") {
  // Build the environment by hand: one affine |+> qubit, no frozen locations.
  Env env;
  env.q = QState().adjoin_zero(0).apply_unitary(default_gates().get("H"), {0});
  env.loc["x"] = {{true, 0}};
  TyCtx ctx;
  ctx.insert("x", Ty::own(Lifetime::stat(), Ty::qbit()));
  LftPreorder A;
  CHECK_FALSE(check_well_formed(env, ctx, A));
  // the same qubit under a linear type is fine
  TyCtx ctx2;
  ctx2.insert("x", Ty::own(Lifetime::empty(), Ty::qbit()));
  CHECK(check_well_formed(env, ctx2, A));
}

TEST_CASE("dependency graph: qif adds a control edge with the identity table") {
  Program p = parse_program(kToy);
  SimOptions opt;
  opt.verify = true;
  opt.depgraph = true;
  SimInterp interp(p, default_gates(), default_injections(), opt);
  std::map<size_t, std::pair<Env, DepGraph>> snaps;
  interp.on_step_dg = [&](size_t i, const Env& e, const DepGraph& g) {
    snaps.emplace(i, std::make_pair(e, g));
  };
  auto branches = interp.eval_program("main");
  CHECK(branches.size() == 2);
  // after the qif (statement 6): y's location depends on x's with F = id
  auto& [env, dg] = snaps.at(6);
  REQUIRE(env.of("y").size() == 1);
  REQUIRE(env.of("x1").size() == 1);
  int ly = env.of("y")[0].id;
  int lx = env.of("x1")[0].id;
  REQUIRE(dg.D.count(ly));
  CHECK(dg.has_edge(lx, ly));
  REQUIRE(dg.sources.at(ly) == std::vector<int>{lx});
  REQUIRE(dg.F.at(ly).size() == 2);
  CHECK(dg.F.at(ly)[0] == false);
  CHECK(dg.F.at(ly)[1] == true);
}

TEST_CASE("dependency graph stays edgeless without entangling operations") {
  Program p = parse_program(
      "fn main() -> #'static bool {"
      "  let q = ket0;"
      "  q as #'0 qbit;"
      "  let q1 = H(q);"
      "  let b = meas(q1);"
      "  b"
      "}");
  SimInterp interp(p, default_gates(), default_injections(),
                   SimOptions{true, true, 1e-9});
  std::map<size_t, DepGraph> snaps;
  interp.on_step_dg = [&](size_t i, const Env&, const DepGraph& g) { snaps.emplace(i, g); };
  interp.eval_program("main");
  for (auto& [i, g] : snaps) {
    for (auto& [l, ss] : g.sources) CHECK(ss.empty());
  }
}

TEST_CASE("function calls evaluate the callee body in a renamed frame") {
  Program p = parse_program(
      "fn flip<'a>(q: #'a qbit) -> #'a qbit {"
      "  let q2 = [not](q);"
      "  q2"
      "}"
      "fn main() -> #'static bool {"
      "  let x = ket0;"
      "  let y = flip<'static>(x);"
      "  y as #'0 qbit;"
      "  let b = meas(y);"
      "  b"
      "}");
  auto branches = eval_program(p, "main", SimOptions{true, true, 1e-9});
  REQUIRE(branches.size() == 2);
  CHECK(branches[0].outcomes == std::vector<int>{0});
  CHECK(std::abs(branches[0].probability - 0.0) < kTol);
  CHECK(std::abs(branches[1].probability - 1.0) < kTol);
}

TEST_CASE("classical if takes the chosen branch") {
  Program p = parse_program(
      "fn main() -> #'static qbit {"
      "  let b = true;"
      "  let q = if b { let i = ket1; i } else { let j = ket0; j };"
      "  drop b;"
      "  q"
      "}");
  auto branches = eval_program(p, "main");
  REQUIRE(branches.size() == 1);
  auto& q = branches[0].env.q;
  REQUIRE(q.num_qubits() == 1);
  CHECK(std::abs(q.amplitudes()[1] - cplx(1)) < kTol);
}
