#include <algorithm>

#include "daecc/decouple.hpp"
#include "daecc/sim.hpp"
#include "daecc/verify.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace daecc;
using namespace daecc::ir;
using daecc::dae::DaePair;

namespace {

int count_op(const Function& f, Opcode op, const std::string& array = "") {
  int n = 0;
  for (const auto& b : f.blocks)
    for (const auto& in : b.insts)
      if (in.op == op && (array.empty() || in.array == array)) n++;
  return n;
}

}  // namespace

TEST_CASE("dce removes unused pure instructions") {
  Program p = parse_program(
      "func @f() { e: %x = add 1, 2\n %y = add 3, 4\n %z = opaque g(%y)\n ret }");
  Function out = dae::dce(p.functions[0], true);
  // Everything is dead: no roots besides ret.
  CHECK(out.blocks[0].insts.size() == 1);
}

TEST_CASE("simplify_cfg folds an empty forwarding block") {
  Program p = parse_program(
      "func @f() {\n"
      "e: %c = opaque c()\n condbr %c, m, j\n"
      "m: br j\n"
      "j: ret\n}");
  Function out = dae::simplify_cfg(p.functions[0]);
  CHECK(out.block("m") == nullptr);
  // Both condbr targets now j -> folded to br, then the condition dies under dce.
  CHECK(out.block("e")->term().op == Opcode::Br);
}

TEST_CASE("decouple splits guarded_c into clean slices") {
  Program p = load_corpus("guarded_c.ir");
  DaePair pair = dae::decouple(p, p.functions[0]);

  // Slice shape: no raw memory ops anywhere, sends only in the AGU,
  // consume/produce only where they belong.
  for (const auto& f : {pair.agu, pair.cu}) {
    CHECK(count_op(f, Opcode::Load) == 0);
    CHECK(count_op(f, Opcode::Store) == 0);
  }
  CHECK(count_op(pair.cu, Opcode::SendLdAddr) == 0);
  CHECK(count_op(pair.cu, Opcode::SendStAddr) == 0);
  CHECK(count_op(pair.agu, Opcode::ProduceVal) == 0);

  // AGU sends the @C guard load, the @IDX load and both @A requests.
  CHECK(count_op(pair.agu, Opcode::SendLdAddr, "C") == 1);
  CHECK(count_op(pair.agu, Opcode::SendLdAddr, "IDX") == 1);
  CHECK(count_op(pair.agu, Opcode::SendLdAddr, "A") == 1);
  CHECK(count_op(pair.agu, Opcode::SendStAddr, "A") == 1);
  // The AGU needs the guard value (branch) and the index value (address),
  // but not the @A load value (it only feeds the stored value).
  CHECK(count_op(pair.agu, Opcode::ConsumeVal, "C") == 1);
  CHECK(count_op(pair.agu, Opcode::ConsumeVal, "IDX") == 1);
  CHECK(count_op(pair.agu, Opcode::ConsumeVal, "A") == 0);
  // The compute chain (opaque f) lives only in the CU.
  CHECK(count_op(pair.agu, Opcode::Opaque) == 0);
  CHECK(count_op(pair.cu, Opcode::Opaque) == 1);
  // CU consumes every load value and produces the store value.
  CHECK(count_op(pair.cu, Opcode::ConsumeVal, "C") == 1);
  CHECK(count_op(pair.cu, Opcode::ConsumeVal, "IDX") == 1);
  CHECK(count_op(pair.cu, Opcode::ConsumeVal, "A") == 1);
  CHECK(count_op(pair.cu, Opcode::ProduceVal, "A") == 1);
  // The CU produce sits under the branch (in block S).
  bool produce_in_S = false;
  for (const auto& in : pair.cu.block("S")->insts)
    if (in.op == Opcode::ProduceVal) produce_in_S = true;
  CHECK(produce_in_S);
}

TEST_CASE("guarded_self request-site table has three @A entries") {
  Program p = load_corpus("guarded_self.ir");
  DaePair pair = dae::decouple(p, p.functions[0]);
  int a_sites = 0;
  for (const auto& s : pair.sites)
    if (s.array == "A") a_sites++;
  CHECK(a_sites == 3);
  // The guard branch still consumes the @A value in the AGU: that is the
  // synchronization the speculation pass exists to remove.
  CHECK(count_op(pair.agu, Opcode::ConsumeVal, "A") == 1);
}

TEST_CASE("per-array send sites match consume/produce sites one to one") {
  for (const char* name :
       {"guarded_c.ir", "guarded_self.ir", "dual_source.ir", "hist.ir", "mm.ir"}) {
    CAPTURE(name);
    Program p = load_corpus(name);
    DaePair pair = dae::decouple(p, p.functions[0]);
    for (const auto& a : p.arrays) {
      int sends = count_op(pair.agu, Opcode::SendLdAddr, a.name) +
                  count_op(pair.agu, Opcode::SendStAddr, a.name);
      int cu_side = count_op(pair.cu, Opcode::ConsumeVal, a.name) +
                    count_op(pair.cu, Opcode::ProduceVal, a.name);
      CHECK(sends == cu_side);
    }
  }
}

TEST_CASE("pure compute loop: AGU collapses to ret, CU keeps the loop") {
  Program p = parse_program(
      "func @f(%N) {\n"
      "e: %z = const 0\n %one = const 1\n br H\n"
      "H: %i = phi [%z, e], [%in, L]\n %c = icmp lt %i, %N\n condbr %c, B, x\n"
      "B: %t = opaque g(%i)\n br L\n"
      "L: %in = add %i, %one\n br H\n"
      "x: ret\n}");
  REQUIRE(validate(p).empty());
  DaePair pair = dae::decouple(p, p.functions[0]);
  CHECK(pair.agu.blocks.size() == 1);
  CHECK(pair.agu.blocks[0].term().op == Opcode::Ret);
  // The CU is the original program (loads/stores aside, there are none).
  CHECK(pair.cu.blocks.size() == p.functions[0].blocks.size());
}

TEST_CASE("decoupled pair preserves semantics on the corpus (no speculation)") {
  for (const char* name :
       {"guarded_c.ir", "guarded_self.ir", "dual_source.ir", "triple_store.ir",
        "mergeable.ir", "guarded_load.ir", "hist.ir", "thr.ir", "mm.ir"}) {
    CAPTURE(name);
    Program p = load_corpus(name);
    const Function& f = p.functions[0];
    DaePair pair = dae::decouple(p, f);
    for (uint64_t seed : {11ull, 22ull, 33ull}) {
      sim::MemoryImage input = verify::gen_input(p, f, seed);
      if (input.args.count("N")) input.args["N"] = 12;  // keep indices in bounds
      sim::RefTrace ref = run_reference(p, f, input);
      REQUIRE(ref.status == sim::RefStatus::Ok);
      sim::SimResult sr = run_dae(pair, input, sim::SimConfig{});
      CAPTURE(sr.error);
      CHECK(sr.termination == sim::Termination::Completed);
      CHECK(sr.channel_balanced);
      for (const auto& a : p.arrays) {
        CHECK(sr.memory.at(a.name) == ref.memory.at(a.name));
        CHECK(sr.committed.at(a.name) == ref.committed.at(a.name));
      }
    }
  }
}
