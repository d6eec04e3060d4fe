#include <algorithm>
#include <deque>
#include <set>

#include "daecc/analysis.hpp"
#include "daecc/support.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace daecc;
using namespace daecc::ir;
using namespace daecc::analysis;

namespace {

// Reachability in `succ` from `root`, optionally with one block removed.
std::set<int> reach_without(const std::vector<std::vector<int>>& succ, int root, int removed) {
  std::set<int> seen;
  if (root == removed) return seen;
  std::deque<int> q{root};
  seen.insert(root);
  while (!q.empty()) {
    int b = q.front();
    q.pop_front();
    for (int s : succ[b]) {
      if (s == removed || seen.count(s)) continue;
      seen.insert(s);
      q.push_back(s);
    }
  }
  return seen;
}

// All-paths dominance oracle: a dominates b iff removing a makes b
// unreachable from the entry (or a == b).
bool dominates_oracle(const std::vector<std::vector<int>>& succ, int a, int b) {
  if (a == b) return true;
  return !reach_without(succ, 0, a).count(b);
}

Function make_function(int nblocks, const std::vector<std::vector<int>>& succ) {
  Function f;
  f.name = "g";
  for (int b = 0; b < nblocks; b++) {
    BasicBlock bb;
    bb.id = "b" + std::to_string(b);
    Instruction term;
    if (succ[b].empty()) {
      term.op = Opcode::Ret;
    } else if (succ[b].size() == 1) {
      term.op = Opcode::Br;
      term.targets.push_back("b" + std::to_string(succ[b][0]));
    } else {
      Instruction c;
      c.op = Opcode::Opaque;
      c.callee = "c";
      c.result = "c" + std::to_string(b);
      bb.insts.push_back(c);
      term.op = succ[b].size() == 2 ? Opcode::CondBr : Opcode::Switch;
      term.args.push_back(Operand::value(c.result));
      for (int s : succ[b]) term.targets.push_back("b" + std::to_string(s));
    }
    bb.insts.push_back(term);
    f.blocks.push_back(std::move(bb));
  }
  return f;
}

}  // namespace

TEST_CASE("dominators on a straight line and a diamond") {
  // b0 -> b1 -> b2
  Function chain = make_function(3, {{1}, {2}, {}});
  Cfg cfg = Cfg::build(chain);
  DomTree dom = dominator_tree(cfg);
  CHECK(dom.idom[2] == 1);
  CHECK(dom.idom[1] == 0);
  // b0 -> {b1, b2} -> b3
  Function diamond = make_function(4, {{1, 2}, {3}, {3}, {}});
  Cfg dcfg = Cfg::build(diamond);
  DomTree ddom = dominator_tree(dcfg);
  CHECK(ddom.idom[3] == 0);
}

TEST_CASE("dominators match the all-paths oracle on random graphs") {
  Rng rng(1234);
  for (int iter = 0; iter < 300; iter++) {
    int n = 2 + static_cast<int>(rng.below(7));  // up to 8 blocks
    std::vector<std::vector<int>> succ(n);
    for (int b = 0; b < n; b++) {
      int outs = static_cast<int>(rng.below(3));  // 0..2 successors
      std::set<int> t;
      for (int k = 0; k < outs; k++) t.insert(static_cast<int>(rng.below(n)));
      succ[b].assign(t.begin(), t.end());
    }
    Function f = make_function(n, succ);
    Cfg cfg = Cfg::build(f);
    DomTree dom = dominator_tree(cfg);
    std::set<int> reachable = reach_without(succ, 0, -1);
    for (int a : reachable)
      for (int b : reachable) {
        CAPTURE(iter);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(dom.dominates(a, b) == dominates_oracle(succ, a, b));
      }
  }
}

TEST_CASE("dual_source dominators: block 5 is dominated by 1, not 2 or 3") {
  Program p = load_corpus("dual_source.ir");
  Cfg cfg = Cfg::build(p.functions[0]);
  DomTree dom = dominator_tree(cfg);
  CHECK(cfg.order[dom.idom[cfg.id("5")]] == "1");
  CHECK(!dom.dominates(cfg.id("2"), cfg.id("5")));
  CHECK(!dom.dominates(cfg.id("3"), cfg.id("5")));
  CHECK(dom.dominates(cfg.id("3"), cfg.id("6")));
}

TEST_CASE("control dependence on a diamond") {
  Program p = parse_program(
      "func @f() {\n"
      "e: %c = opaque c()\n condbr %c, t, f\n"
      "t: br j\n"
      "f: br j\n"
      "j: ret\n}");
  CtrlDepMap cd = control_dependence(p.functions[0]);
  REQUIRE(cd.deps.count("t"));
  REQUIRE(cd.deps.count("f"));
  CHECK(cd.deps.at("t")[0].first == "e");
  CHECK(cd.deps.at("f")[0].first == "e");
  CHECK(!cd.deps.count("j"));
}

TEST_CASE("control dependence matches a brute-force oracle on the corpus") {
  for (const char* name : {"dual_source.ir", "triple_store.ir", "mergeable.ir", "mm.ir"}) {
    CAPTURE(name);
    Program p = load_corpus(name);
    const Function& f = p.functions[0];
    Cfg cfg = Cfg::build(f);
    DomTree dom = dominator_tree(cfg);
    // Forward graph + virtual exit.
    int n = cfg.size(), vexit = n;
    std::vector<std::vector<int>> fwd(n + 1);
    for (int b = 0; b < n; b++)
      for (int s : cfg.succ[b])
        if (!dom.dominates(s, b)) fwd[b].push_back(s);
    for (int b = 0; b < n; b++)
      if (fwd[b].empty()) fwd[b].push_back(vexit);
    // Brute post-dominance: a pdoms b iff removing a cuts b from the exit.
    std::vector<std::vector<int>> rev(n + 1);
    for (int b = 0; b <= n; b++)
      for (int s : fwd[b]) rev[s].push_back(b);
    auto pdoms = [&](int a, int b) {
      if (a == b) return true;
      return !reach_without(rev, vexit, a).count(b);
    };
    CtrlDepMap cd = control_dependence(f);
    for (int w = 0; w < n; w++) {
      std::set<std::pair<std::string, int>> expect;
      for (int u = 0; u < n; u++) {
        for (size_t k = 0; k < cfg.succ[u].size(); k++) {
          int v = cfg.succ[u][k];
          if (dom.dominates(v, u)) continue;
          if (pdoms(w, v) && !pdoms(w, u))
            expect.insert({cfg.order[u], static_cast<int>(k)});
        }
      }
      std::set<std::pair<std::string, int>> got;
      auto it = cd.deps.find(cfg.order[w]);
      if (it != cd.deps.end()) got.insert(it->second.begin(), it->second.end());
      CAPTURE(cfg.order[w]);
      CHECK(got == expect);
    }
  }
}

TEST_CASE("dual_source control dependences pin the source structure") {
  Program p = load_corpus("dual_source.ir");
  CtrlDepMap cd = control_dependence(p.functions[0]);
  auto has = [&](const std::string& b, const std::string& on) {
    auto it = cd.deps.find(b);
    if (it == cd.deps.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(),
                       [&](const auto& d) { return d.first == on; });
  };
  CHECK(has("4", "3"));
  CHECK(has("5", "2"));
  CHECK(has("5", "3"));
  CHECK(has("6", "3"));
  CHECK(has("7", "2"));
  CHECK(has("7", "5"));
  CHECK(!has("5", "1"));
}

TEST_CASE("loop_info finds single and nested loops") {
  Program p = parse_program(
      "func @f(%N) {\n"
      "e: %z = const 0\n %one = const 1\n br H\n"
      "H: %i = phi [%z, e], [%i2, L]\n %c = icmp lt %i, %N\n condbr %c, IH, x\n"
      "IH: %j = phi [%z, H], [%j2, IL]\n %c2 = icmp lt %j, %N\n condbr %c2, IL, L\n"
      "IL: %j2 = add %j, %one\n br IH\n"
      "L: %i2 = add %i, %one\n br H\n"
      "x: ret\n}");
  REQUIRE(validate(p).empty());
  LoopInfo li = loop_info(p.functions[0]);
  REQUIRE(li.loops.size() == 2);
  const Loop* outer = nullptr;
  const Loop* inner = nullptr;
  for (const auto& l : li.loops)
    (l.depth == 1 ? outer : inner) = &l;
  REQUIRE(outer);
  REQUIRE(inner);
  CHECK(inner->parent == static_cast<int>(outer - &li.loops[0]));
  Cfg cfg = Cfg::build(p.functions[0]);
  CHECK(outer->header == cfg.id("H"));
  CHECK(outer->latch == cfg.id("L"));
  CHECK(inner->header == cfg.id("IH"));
}

TEST_CASE("dual_source loop body is the nine-block loop") {
  Program p = load_corpus("dual_source.ir");
  LoopInfo li = loop_info(p.functions[0]);
  REQUIRE(li.loops.size() == 1);
  Cfg cfg = Cfg::build(p.functions[0]);
  std::set<std::string> body;
  for (int b : li.loops[0].body) body.insert(cfg.order[b]);
  CHECK(body == std::set<std::string>{"H", "1", "2", "3", "4", "5", "6", "7", "L"});
}

TEST_CASE("region_rpo walks the loop DAG in topological order") {
  Program p = load_corpus("dual_source.ir");
  const Function& f = p.functions[0];
  CHECK(region_rpo(f, "3") == std::vector<BlockId>{"3", "4", "5", "6", "7", "L"});
  CHECK(region_rpo(f, "2") == std::vector<BlockId>{"2", "5", "7", "L"});
  CHECK(region_rpo(f, "L") == std::vector<BlockId>{"L"});
}

TEST_CASE("region_rpo respects every forward edge (topological property)") {
  for (const char* name : {"dual_source.ir", "triple_store.ir", "mergeable.ir"}) {
    CAPTURE(name);
    Program p = load_corpus(name);
    const Function& f = p.functions[0];
    for (const auto& src : {std::string("H")}) {
      (void)src;
    }
    for (const auto& b : f.blocks) {
      auto order = region_rpo(f, b.id);
      std::map<BlockId, int> pos;
      for (size_t i = 0; i < order.size(); i++) pos[order[i]] = static_cast<int>(i);
      for (const auto& e : cfg_edges(f)) {
        if (e.kind != Edge::Kind::Forward) continue;
        if (pos.count(e.src) && pos.count(e.dst)) {
          CAPTURE(e.src);
          CAPTURE(e.dst);
          CHECK(pos[e.src] < pos[e.dst]);
        }
      }
    }
  }
}

TEST_CASE("region_rpo does not enter inner loops") {
  Program p = parse_program(
      "array @A[64]\n"
      "func @f(%N) {\n"
      "e: %z = const 0\n %one = const 1\n br H\n"
      "H: %i = phi [%z, e], [%i2, L]\n %c = icmp lt %i, %N\n condbr %c, g, x\n"
      "g: %v = load @A[%i]\n %gb = icmp gt %v, %z\n condbr %gb, IH, L\n"
      "IH: %j = phi [%z, g], [%j2, IL]\n %c2 = icmp lt %j, %N\n condbr %c2, IL, L\n"
      "IL: %j2 = add %j, %one\n br IH\n"
      "L: %i2 = add %i, %one\n br H\n"
      "x: ret\n}");
  REQUIRE(validate(p).empty());
  auto order = region_rpo(p.functions[0], "g");
  CHECK(std::find(order.begin(), order.end(), "IH") == order.end());
  CHECK(std::find(order.begin(), order.end(), "IL") == order.end());
  CHECK(std::find(order.begin(), order.end(), "L") != order.end());
}

TEST_CASE("reachable_fwd ignores the backedge") {
  Program p = load_corpus("dual_source.ir");
  const Function& f = p.functions[0];
  CHECK(reachable_fwd(f, "3", "4"));
  CHECK(!reachable_fwd(f, "6", "5"));
  CHECK(reachable_fwd(f, "6", "6"));
  CHECK(!reachable_fwd(f, "L", "1"));
}

TEST_CASE("lod_analysis finds the data dependency through a phi") {
  // Growing-cursor pattern: the store address advances only when the guard
  // load is non-zero, so the address chain passes a phi whose incoming block
  // terminator consumes the load.
  Program p = parse_program(
      "array @A[64]\n"
      "func @f(%N) {\n"
      "e: %z = const 0\n %one = const 1\n br H\n"
      "H: %n = phi [%z, e], [%n2, L]\n %i = phi [%z, e], [%in, L]\n"
      "   %hc = icmp lt %n, %N\n condbr %hc, g, x\n"
      "g: %v = load @A[%i]\n %gb = icmp ne %v, %z\n condbr %gb, S, L\n"
      "S: %inc = add %i, %one\n store @A[%i], %one\n br L\n"
      "L: %in = phi [%inc, S], [%i, g]\n %n2 = add %n, %one\n br H\n"
      "x: ret\n}");
  REQUIRE(validate(p).empty());
  LodReport rep = lod_analysis(p.functions[0]);
  REQUIRE(!rep.dataDeps.empty());
  CHECK(rep.dataDeps[0].a == "v");
  // The guarded store also has the control dependency on g.
  bool ctrl = std::any_of(rep.controlDeps.begin(), rep.controlDeps.end(),
                          [](const LodCtrlDep& d) { return d.srcBB == "g"; });
  CHECK(ctrl);
}

TEST_CASE("lod_analysis on guarded_self finds one control source") {
  Program p = load_corpus("guarded_self.ir");
  LodReport rep = lod_analysis(p.functions[0]);
  CHECK(rep.dataDeps.empty());
  REQUIRE(!rep.controlDeps.empty());
  for (const auto& d : rep.controlDeps) CHECK(d.srcBB == "B");
  CHECK(rep.chainHeads == std::vector<BlockId>{"B"});
}

TEST_CASE("lod_analysis on guarded_c finds no loss of decoupling") {
  Program p = load_corpus("guarded_c.ir");
  LodReport rep = lod_analysis(p.functions[0]);
  CHECK(rep.dataDeps.empty());
  CHECK(rep.controlDeps.empty());
  CHECK(rep.chainHeads.empty());
}

TEST_CASE("dual_source chains and heads") {
  Program p = load_corpus("dual_source.ir");
  LodReport rep = lod_analysis(p.functions[0]);
  CHECK(rep.sources == std::vector<BlockId>{"2", "3", "5"});
  CHECK(rep.chainHeads == std::vector<BlockId>{"2", "3"});
  std::set<std::vector<BlockId>> chains(rep.chains.begin(), rep.chains.end());
  CHECK(chains == std::set<std::vector<BlockId>>{{"2", "5"}, {"3", "5"}});
  // Heads never appear as destinations of another control dependency.
  std::set<BlockId> dests;
  for (const auto& d : rep.controlDeps) dests.insert(d.gBlock);
  for (const auto& h : rep.chainHeads) CHECK(!dests.count(h));
}

TEST_CASE("lod policy all-loads widens the A set") {
  Program p = load_corpus("guarded_c.ir");
  LodConfig cfg;
  cfg.policy = LodConfig::Policy::AllLoads;
  LodReport rep = lod_analysis(p.functions[0], cfg);
  // Under all-loads, the @C guard load now counts for the @A requests.
  CHECK(!rep.controlDeps.empty());
}
