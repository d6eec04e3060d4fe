#include <algorithm>

#include "daecc/ir.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace daecc;
using namespace daecc::ir;

TEST_CASE("parse minimal function") {
  Program p = parse_program("func @f() { e: ret }");
  REQUIRE(p.functions.size() == 1);
  CHECK(p.functions[0].blocks.size() == 1);
  CHECK(p.functions[0].blocks[0].insts.size() == 1);
  CHECK(p.functions[0].blocks[0].term().op == Opcode::Ret);
  CHECK(validate(p).empty());
}

TEST_CASE("parse dual_source corpus") {
  Program p = load_corpus("dual_source.ir");
  const Function& f = p.functions[0];
  // Loop proper is H,1..7,L (9 blocks); entry preheader and exit are extra.
  CHECK(f.blocks.size() == 11);
  CHECK(f.entry() == "en");
  CHECK(validate(p).empty());
  // Request display names follow the stored value / load result.
  const BasicBlock* b5 = f.block("5");
  REQUIRE(b5 != nullptr);
  CHECK(b5->insts[1].op == Opcode::Store);
}

TEST_CASE("parse errors carry position and cause") {
  CHECK_THROWS_AS(parse_program("func @f() { e: frobnicate }"), ParseError);
  CHECK_THROWS_AS(parse_program("array @A[3] func @f() { e: %x = load @A[bad!] }"), ParseError);
  try {
    parse_program("func @f() {\n e: zork\n}");
    CHECK(false);
  } catch (const ParseError& pe) {
    CHECK(pe.line == 2);
  }
}

TEST_CASE("duplicate SSA definition is rejected by the validator") {
  Program p = parse_program(
      "func @f() { e: %x = const 1\n %x = const 2\n ret }");
  auto diags = validate(p);
  REQUIRE(!diags.empty());
  CHECK(diags[0].code == "duplicate-def");
}

TEST_CASE("print/parse round trip is stable on the corpus") {
  for (const char* name :
       {"dual_source.ir", "triple_store.ir", "mergeable.ir", "guarded_c.ir",
        "guarded_self.ir", "guarded_load.ir", "hist.ir", "thr.ir", "mm.ir"}) {
    CAPTURE(name);
    Program p1 = load_corpus(name);
    std::string once = print_program(p1);
    Program p2 = parse_program(once);
    CHECK(p1 == p2);
    CHECK(print_program(p2) == once);
  }
}

TEST_CASE("empty-body function prints one block") {
  Program p = parse_program("func @f() { only: ret }");
  std::string text = print_program(p);
  CHECK(text.find("only:") != std::string::npos);
  CHECK(parse_program(text) == p);
}

TEST_CASE("validator rejects irreducible control flow") {
  // Two entries into a rotated loop: e branches into both b1 and b2, which
  // branch to each other.
  const char* text =
      "func @f() {\n"
      "e: %c = const 1\n condbr %c, b1, b2\n"
      "b1: %c1 = const 0\n condbr %c1, b2, x\n"
      "b2: %c2 = const 0\n condbr %c2, b1, x\n"
      "x: ret\n}";
  Program p = parse_program(text);
  auto diags = validate(p);
  bool irreducible = std::any_of(diags.begin(), diags.end(),
                                 [](const Diagnostic& d) { return d.code == "irreducible"; });
  CHECK(irreducible);
}

TEST_CASE("validator rejects a loop with two latches") {
  const char* text =
      "func @f() {\n"
      "e: br h\n"
      "h: %c = opaque c()\n %b = icmp gt %c, %c\n condbr %b, l1, l2\n"
      "l1: %c1 = opaque d()\n %b1 = icmp gt %c1, %c1\n condbr %b1, h, x\n"
      "l2: %c2 = opaque e()\n %b2 = icmp gt %c2, %c2\n condbr %b2, h, x\n"
      "x: ret\n}";
  Program p = parse_program(text);
  auto diags = validate(p);
  bool noncanonical =
      std::any_of(diags.begin(), diags.end(),
                  [](const Diagnostic& d) { return d.code == "non-canonical-loop"; });
  CHECK(noncanonical);
}

TEST_CASE("validator accepts every corpus kernel") {
  for (const char* name :
       {"dual_source.ir", "triple_store.ir", "mergeable.ir", "guarded_c.ir",
        "guarded_self.ir", "guarded_load.ir", "hist.ir", "thr.ir", "mm.ir"}) {
    CAPTURE(name);
    CHECK(validate(load_corpus(name)).empty());
  }
}

TEST_CASE("validator rejects use before def") {
  Program p = parse_program("func @f() { e: %y = add %x, 1\n ret }");
  auto diags = validate(p);
  REQUIRE(!diags.empty());
  CHECK(diags[0].code == "undefined-value");
}

TEST_CASE("validator requires phi at block head") {
  const char* text =
      "func @f() {\n"
      "e: %z = const 0\n br h\n"
      "h: %a = const 1\n %i = phi [%z, e], [%a, h]\n br h\n}";
  Program p = parse_program(text);
  auto diags = validate(p);
  bool hit = std::any_of(diags.begin(), diags.end(),
                         [](const Diagnostic& d) { return d.code == "phi-not-at-head"; });
  CHECK(hit);
}

TEST_CASE("cfg edges classify the loop backedge") {
  Program p = load_corpus("dual_source.ir");
  auto edges = cfg_edges(p.functions[0]);
  CHECK(edges.size() == 16);
  int back = 0;
  for (const auto& e : edges)
    if (e.kind == Edge::Kind::Back) {
      back++;
      CHECK(e.src == "L");
      CHECK(e.dst == "H");
    }
  CHECK(back == 1);
}

TEST_CASE("single-block function renders one node and no edges") {
  Program p = parse_program("func @f() { e: ret }");
  std::string dot = to_dot(p.functions[0]);
  CHECK(dot.find("\"e\" [label=") != std::string::npos);
  CHECK(dot.find("->") == std::string::npos);
}

TEST_CASE("dot export covers all blocks and edges of dual_source") {
  Program p = load_corpus("dual_source.ir");
  std::string dot = to_dot(p.functions[0]);
  // 11 nodes (9-block loop + preheader + exit), 16 edges incl. L->H backedge.
  size_t nodes = 0, arrows = 0;
  for (size_t pos = 0; (pos = dot.find("[label=", pos)) != std::string::npos; pos++) nodes++;
  for (size_t pos = 0; (pos = dot.find("->", pos)) != std::string::npos; pos++) arrows++;
  CHECK(nodes == 11);
  CHECK(arrows == 16);
  CHECK(dot.find("style=dashed") != std::string::npos);  // the backedge
}

TEST_CASE("dot annotations appear in block labels") {
  Program p = load_corpus("dual_source.ir");
  DotAnnotations ann;
  ann.block_notes["2"].push_back("spec: b,e");
  std::string dot = to_dot(p.functions[0], &ann);
  CHECK(dot.find("spec: b,e") != std::string::npos);
}
