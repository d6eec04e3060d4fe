#include "daecc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "daecc/analysis.hpp"
#include "daecc/json_io.hpp"
#include "daecc/support.hpp"

namespace daecc::verify {

using dae::DaePair;
using ir::BasicBlock;
using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;
using ir::Operand;
using ir::Program;
using sim::MemoryImage;

namespace {

std::map<BlockId, int> path_slots(const Function& f, const std::vector<BlockId>& path) {
  std::map<BlockId, int> slots;
  for (size_t i = 0; i + 1 < path.size(); i++) {
    const auto& targets = f.block(path[i])->term().targets;
    for (size_t k = 0; k < targets.size(); k++)
      if (targets[k] == path[i + 1]) {
        slots[path[i]] = static_cast<int>(k);
        break;
      }
  }
  return slots;
}

// Slot-driven AGU walk collecting store-request sites per array.
std::map<std::string, std::vector<int>> agu_store_sends(const Function& agu,
                                                        const std::vector<BlockId>& path,
                                                        const std::map<BlockId, int>& slots) {
  std::map<std::string, std::vector<int>> out;
  const BasicBlock* bb = agu.block(path.front());
  std::set<BlockId> visited;
  while (bb && visited.insert(bb->id).second) {
    for (const auto& in : bb->insts)
      if (in.op == Opcode::SendStAddr) out[in.array].push_back(in.site);
    if (bb->id == path.back()) break;
    const Instruction& t = bb->term();
    if (t.op == Opcode::Ret) break;
    if (t.targets.size() == 1) {
      bb = agu.block(t.targets[0]);
    } else {
      auto it = slots.find(bb->id);
      if (it == slots.end()) break;
      bb = agu.block(t.targets[static_cast<size_t>(it->second)]);
    }
  }
  return out;
}

struct ProduceEvent {
  std::string array;
  int site = -1;
  bool poison = false;
};

// Slot-driven CU walk. Steering values are constants threaded through phis,
// so they are evaluated along the walk; original branches take the recorded
// decision.
bool cu_produces(const Function& cu, const std::vector<BlockId>& path,
                 const std::map<BlockId, int>& slots, std::vector<ProduceEvent>* out,
                 std::string* err) {
  const BasicBlock* bb = cu.block(path.front());
  if (!bb) {
    *err = "path start missing from the compute slice";
    return false;
  }
  std::map<ir::ValueId, Word> env;
  BlockId prev;
  size_t steps = 0, limit = cu.blocks.size() * 4 + 16;
  while (bb) {
    if (++steps > limit) {
      *err = "compute-slice walk did not terminate";
      return false;
    }
    if (!prev.empty()) {
      std::vector<std::pair<ir::ValueId, std::pair<bool, Word>>> writes;
      for (const auto& in : bb->insts) {
        if (!in.is_phi()) break;
        for (const auto& inc : in.incomings) {
          if (inc.pred != prev) continue;
          if (inc.value.kind == Operand::Kind::Imm)
            writes.push_back({in.result, {true, inc.value.imm}});
          else if (inc.value.is_value() && env.count(inc.value.name))
            writes.push_back({in.result, {true, env.at(inc.value.name)}});
          else
            writes.push_back({in.result, {false, 0}});
        }
      }
      for (auto& [k, v] : writes) {
        if (v.first)
          env[k] = v.second;
        else
          env.erase(k);
      }
    }
    for (const auto& in : bb->insts)
      if (in.op == Opcode::ProduceVal) {
        bool poison = in.args[1].kind == Operand::Kind::Imm ? in.args[1].imm != 0 : false;
        out->push_back({in.array, in.site, poison});
      }
    if (bb->id == path.back()) break;
    const Instruction& t = bb->term();
    if (t.op == Opcode::Ret) break;
    BlockId next;
    if (t.targets.size() == 1) {
      next = t.targets[0];
    } else if (auto it = slots.find(bb->id); it != slots.end()) {
      next = t.targets[static_cast<size_t>(it->second)];
    } else if (t.op == Opcode::CondBr && t.args[0].is_value() && env.count(t.args[0].name)) {
      next = t.targets[env.at(t.args[0].name) != 0 ? 0 : 1];
    } else {
      *err = "undecidable branch in inserted block '" + bb->id + "'";
      return false;
    }
    prev = bb->id;
    bb = cu.block(next);
  }
  return true;
}

}  // namespace

Verdict check_lemma1_static(const Function& original, const DaePair& pair,
                            const spec::SpecReqMap& map, int64_t path_limit) {
  Verdict v;
  analysis::LoopInfo loops = analysis::loop_info(original);
  if (loops.loops.size() > 1) {
    v.status = Verdict::Status::Skip;
    v.reason = "static check supports single-loop functions only";
    return v;
  }
  (void)map;
  BlockId start = original.entry();
  if (!loops.loops.empty()) {
    analysis::Cfg cfg = analysis::Cfg::build(original);
    start = cfg.order[loops.loops[0].header];
  }

  std::map<BlockId, std::vector<std::pair<int, std::string>>> orig_stores;  // block -> (site, array)
  for (const auto& s : pair.sites)
    if (s.kind == dae::MemKind::Store) orig_stores[s.origBlock].push_back({s.id, s.array});

  std::vector<std::vector<BlockId>> paths;
  try {
    paths = analysis::forward_paths(original, start, path_limit);
  } catch (const PipelineError& e) {
    v.status = Verdict::Status::Skip;
    v.reason = e.what();
    return v;
  }

  for (const auto& path : paths) {
    auto slots = path_slots(original, path);
    auto la = agu_store_sends(pair.agu, path, slots);
    std::vector<ProduceEvent> events;
    std::string err;
    if (!cu_produces(pair.cu, path, slots, &events, &err)) {
      v.status = Verdict::Status::Fail;
      v.reason = err;
      return v;
    }
    std::map<std::string, std::vector<ProduceEvent>> lv;
    for (const auto& e : events) lv[e.array].push_back(e);

    // Original executed stores per array, in order.
    std::map<std::string, std::vector<int>> oseq;
    std::set<BlockId> on_path(path.begin(), path.end());
    for (const auto& b : path) {
      auto it = orig_stores.find(b);
      if (it != orig_stores.end())
        for (auto& [site, array] : it->second) oseq[array].push_back(site);
    }

    std::set<std::string> arrays;
    for (const auto& [a, x] : la) arrays.insert(a);
    for (const auto& [a, x] : lv) arrays.insert(a);
    for (const auto& [a, x] : oseq) arrays.insert(a);
    for (const auto& a : arrays) {
      const auto& sends = la[a];
      const auto& values = lv[a];
      std::ostringstream why;
      if (sends.size() != values.size()) {
        why << "array @" << a << ": " << sends.size() << " store requests vs "
            << values.size() << " store values on path";
        v.status = Verdict::Status::Fail;
        v.reason = why.str();
        return v;
      }
      std::vector<int> non_poisoned;
      for (size_t i = 0; i < sends.size(); i++) {
        const dae::RequestSite* rs = pair.site(sends[i]);
        bool executed = rs && on_path.count(rs->origBlock);
        if (values[i].poison == executed) {
          why << "array @" << a << " position " << i << ": slot "
              << (values[i].poison ? "poisoned" : "used") << " but store "
              << (executed ? "executes" : "does not execute") << " on the path";
          v.status = Verdict::Status::Fail;
          v.reason = why.str();
          return v;
        }
        if (!values[i].poison) non_poisoned.push_back(sends[i]);
      }
      if (non_poisoned != oseq[a]) {
        v.status = Verdict::Status::Fail;
        v.reason = "array @" + a + ": used-slot order differs from the original store order";
        return v;
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Random structured programs
// ---------------------------------------------------------------------------

namespace {

struct GenCtx {
  GenParams p;
  Rng rng;
  Program prog;
  Function fn;
  int block_seq = 0;
  int val_seq = 0;
  int op_seq = 0;
  int blocks_left = 0;

  BlockId cur;
  std::vector<Instruction> insts;

  // Values defined on every path to the current point: (name, tainted by a
  // data-array load).
  std::vector<std::pair<ir::ValueId, bool>> pool;

  explicit GenCtx(const GenParams& params) : p(params), rng(params.seed) {
    blocks_left = p.block_budget;
  }

  BlockId fresh_block() { return "b" + std::to_string(block_seq++); }
  ir::ValueId fresh_val() { return "v" + std::to_string(val_seq++); }

  void open(const BlockId& id) {
    cur = id;
    insts.clear();
  }
  void close(Instruction term) {
    insts.push_back(std::move(term));
    fn.blocks.push_back({cur, std::move(insts)});
    insts.clear();
    blocks_left--;
  }
  void emit(Instruction in) { insts.push_back(std::move(in)); }

  Instruction br(const BlockId& t) {
    Instruction in;
    in.op = Opcode::Br;
    in.targets = {t};
    return in;
  }
  Instruction condbr(Operand c, const BlockId& t0, const BlockId& t1) {
    Instruction in;
    in.op = Opcode::CondBr;
    in.args = {std::move(c)};
    in.targets = {t0, t1};
    return in;
  }

  Operand untainted_val() {
    std::vector<ir::ValueId> cands;
    for (auto& [v, taint] : pool)
      if (!taint) cands.push_back(v);
    if (cands.empty() || rng.chance(0.3))
      return Operand::immediate(rng.range(-9, 9));
    return Operand::value(cands[rng.below(cands.size())]);
  }
  Operand any_val() {
    if (pool.empty() || rng.chance(0.25)) return Operand::immediate(rng.range(-9, 9));
    return Operand::value(pool[rng.below(pool.size())].first);
  }

  ir::ValueId opaque(std::initializer_list<Operand> args, bool tainted) {
    Instruction in;
    in.op = Opcode::Opaque;
    in.callee = "h" + std::to_string(op_seq++);
    in.result = fresh_val();
    in.args = args;
    emit(in);
    pool.push_back({in.result, tainted});
    return in.result;
  }

  std::string data_array(int k) { return "D" + std::to_string(k); }
};

// One loop level. `iv` is the induction value; `bound` limits address
// offsets. Emits blocks from the loop body start through the latch.
void emit_body(GenCtx& g, const Operand& iv, const BlockId& latch, int depth);

void emit_loop(GenCtx& g, const BlockId& exit_to, const Operand& trip, int depth) {
  BlockId pre = g.cur;  // caller left an open block; close it into the header
  BlockId header = g.fresh_block();
  BlockId body = g.fresh_block();
  BlockId latch = g.fresh_block();
  g.close(g.br(header));

  ir::ValueId iv = g.fresh_val();
  ir::ValueId ivn = g.fresh_val();
  g.open(header);
  {
    Instruction phi;
    phi.op = Opcode::Phi;
    phi.result = iv;
    phi.incomings = {{Operand::immediate(0), pre}, {Operand::value(ivn), latch}};
    g.emit(phi);
    Instruction cmp;
    cmp.op = Opcode::Icmp;
    cmp.pred = ir::IcmpPred::Lt;
    cmp.result = g.fresh_val();
    cmp.args = {Operand::value(iv), trip};
    g.emit(cmp);
    g.close(g.condbr(Operand::value(cmp.result), body, exit_to));
  }

  size_t pool_mark = g.pool.size();
  g.pool.push_back({iv, false});
  g.open(body);
  emit_body(g, Operand::value(iv), latch, depth);
  // emit_body closes its final block with a branch to the latch.
  g.open(latch);
  {
    Instruction add;
    add.op = Opcode::Add;
    add.result = ivn;
    add.args = {Operand::value(iv), Operand::immediate(1)};
    g.emit(add);
    g.close(g.br(header));
  }
  g.pool.resize(pool_mark);
}

// Safe address: in [0, size) as long as the trip argument stays below
// size - 8 and index arrays are filled in bounds.
Operand safe_addr(GenCtx& g, const Operand& iv, const std::vector<ir::ValueId>& addr_pool) {
  if (!addr_pool.empty() && g.rng.chance(0.35))
    return Operand::value(addr_pool[g.rng.below(addr_pool.size())]);
  if (g.rng.chance(0.5)) return iv;
  Instruction add;
  add.op = Opcode::Add;
  add.result = g.fresh_val();
  add.args = {iv, Operand::immediate(g.rng.range(1, 7))};
  g.emit(add);
  return Operand::value(add.result);
}

void emit_store(GenCtx& g, int array, Operand addr, Operand val) {
  Instruction st;
  st.op = Opcode::Store;
  st.array = g.data_array(array);
  st.args = {std::move(addr), std::move(val)};
  g.emit(st);
}

ir::ValueId emit_load(GenCtx& g, const std::string& array, Operand addr, bool tainted) {
  Instruction ld;
  ld.op = Opcode::Load;
  ld.array = array;
  ld.result = g.fresh_val();
  ld.args = {std::move(addr)};
  g.emit(ld);
  g.pool.push_back({ld.result, tainted});
  return ld.result;
}

// Guarded tail: one chain of load-fed guards over a single data array, with
// the stores (and sometimes loads) they control. Last construct in the body.
void emit_lod_tail(GenCtx& g, const Operand& iv, const BlockId& latch,
                   const std::vector<ir::ValueId>& addr_pool) {
  int arr = static_cast<int>(g.rng.below(static_cast<uint64_t>(g.p.data_arrays)));
  std::string D = g.data_array(arr);

  bool dual = g.blocks_left > 8 && g.rng.chance(0.3);
  if (dual) {
    // Two mutually exclusive guard arms plus a covered trailing store.
    BlockId a1 = g.fresh_block(), a2 = g.fresh_block();
    BlockId s1 = g.fresh_block(), s2 = g.fresh_block();
    BlockId join = g.fresh_block();
    ir::ValueId sel = g.opaque({iv}, false);
    Instruction cmp;
    cmp.op = Opcode::Icmp;
    cmp.pred = ir::IcmpPred::Lt;
    cmp.result = g.fresh_val();
    cmp.args = {Operand::value(sel), Operand::immediate(0)};
    g.emit(cmp);
    Operand tail_addr = safe_addr(g, iv, addr_pool);
    Operand tail_val = Operand::value(g.opaque({iv}, false));
    g.close(g.condbr(Operand::value(cmp.result), a1, a2));

    for (int arm = 0; arm < 2; arm++) {
      g.open(arm == 0 ? a1 : a2);
      ir::ValueId gv = g.fresh_val();
      Instruction ld;
      ld.op = Opcode::Load;
      ld.array = D;
      ld.result = gv;
      ld.args = {iv};
      g.emit(ld);
      Instruction gc;
      gc.op = Opcode::Icmp;
      gc.pred = arm == 0 ? ir::IcmpPred::Gt : ir::IcmpPred::Le;
      gc.result = g.fresh_val();
      gc.args = {Operand::value(gv), Operand::immediate(g.rng.range(-3, 3))};
      g.emit(gc);
      g.close(g.condbr(Operand::value(gc.result), arm == 0 ? s1 : s2, join));
      g.open(arm == 0 ? s1 : s2);
      emit_store(g, arr, iv, Operand::immediate(g.rng.range(10, 99)));
      g.close(g.br(join));
    }
    g.open(join);
    emit_store(g, arr, tail_addr, tail_val);
    g.close(g.br(latch));
    return;
  }

  int levels = 1 + static_cast<int>(g.rng.below(2));
  BlockId guard = g.fresh_block();
  // Pre-compute guarded addresses/values above the guard so hoisting copies
  // always finds dominating operands.
  std::vector<std::pair<Operand, Operand>> slots;
  for (int k = 0; k < levels; k++)
    slots.push_back({safe_addr(g, iv, addr_pool), Operand::value(g.opaque({iv}, false))});
  ir::ValueId gv = emit_load(g, D, iv, true);
  g.close(g.br(guard));

  BlockId next = guard;
  for (int k = 0; k < levels; k++) {
    g.open(next);
    Instruction gc;
    gc.op = Opcode::Icmp;
    gc.pred = ir::IcmpPred::Gt;
    gc.result = g.fresh_val();
    gc.args = {Operand::value(gv), Operand::immediate(k)};
    g.emit(gc);
    BlockId body = g.fresh_block();
    g.close(g.condbr(Operand::value(gc.result), body, latch));
    g.open(body);
    if (g.rng.chance(0.3)) {
      // Speculative load: value feeds the store.
      ir::ValueId w = emit_load(g, D, slots[static_cast<size_t>(k)].first, true);
      ir::ValueId mixed = g.opaque({Operand::value(w)}, true);
      emit_store(g, arr, slots[static_cast<size_t>(k)].first, Operand::value(mixed));
    } else {
      emit_store(g, arr, slots[static_cast<size_t>(k)].first,
                 slots[static_cast<size_t>(k)].second);
    }
    next = body;  // continue the chain inside the guarded body
    if (k + 1 == levels) g.close(g.br(latch));
  }
}

void emit_body(GenCtx& g, const Operand& iv, const BlockId& latch, int depth) {
  std::vector<ir::ValueId> addr_pool;  // in-bounds address values (index loads)
  size_t pool_mark = g.pool.size();

  int stmts = 1 + static_cast<int>(g.rng.below(3));
  for (int s = 0; s < stmts; s++) {
    double roll = static_cast<double>(g.rng.below(100)) / 100.0;
    if (roll < 0.25) {
      g.opaque({iv, g.untainted_val()}, false);
    } else if (roll < 0.45) {
      int arr = static_cast<int>(g.rng.below(static_cast<uint64_t>(g.p.data_arrays)));
      emit_load(g, g.data_array(arr), safe_addr(g, iv, addr_pool), true);
    } else if (roll < 0.6) {
      addr_pool.push_back(emit_load(g, "X", iv, false));
    } else if (roll < 0.6 + g.p.store_density * 0.3) {
      int arr = static_cast<int>(g.rng.below(static_cast<uint64_t>(g.p.data_arrays)));
      emit_store(g, arr, safe_addr(g, iv, addr_pool), g.any_val());
    } else if (g.blocks_left > 6) {
      // Pure diamond, occasionally with a phi at the join.
      BlockId then_b = g.fresh_block(), join = g.fresh_block();
      ir::ValueId t = g.opaque({iv, g.untainted_val()}, false);
      Instruction cmp;
      cmp.op = Opcode::Icmp;
      cmp.pred = ir::IcmpPred::Lt;
      cmp.result = g.fresh_val();
      cmp.args = {Operand::value(t), Operand::immediate(0)};
      g.emit(cmp);
      Operand base = g.untainted_val();
      BlockId from = g.cur;
      g.close(g.condbr(Operand::value(cmp.result), then_b, join));
      g.open(then_b);
      ir::ValueId inner = g.opaque({iv}, false);
      if (g.rng.chance(g.p.store_density * 0.5)) {
        int arr = static_cast<int>(g.rng.below(static_cast<uint64_t>(g.p.data_arrays)));
        emit_store(g, arr, iv, Operand::value(inner));
      }
      g.close(g.br(join));
      g.open(join);
      if (g.rng.chance(0.6)) {
        Instruction phi;
        phi.op = Opcode::Phi;
        phi.result = g.fresh_val();
        phi.incomings = {{Operand::value(inner), then_b}, {base, from}};
        g.emit(phi);
        g.pool.push_back({phi.result, false});
      }
    }
  }

  // Optional inner loop (before any guarded tail).
  if (depth > 0 && g.blocks_left > 8 && g.rng.chance(0.4)) {
    BlockId after = g.fresh_block();
    emit_loop(g, after, Operand::immediate(g.rng.range(2, 6)), depth - 1);
    g.open(after);
  }

  if (g.rng.chance(g.p.lod_rate) && g.blocks_left > 4) {
    emit_lod_tail(g, iv, latch, addr_pool);
  } else {
    g.close(g.br(latch));
  }
  g.pool.resize(pool_mark);
}

}  // namespace

Program gen_program(const GenParams& p) {
  GenCtx g(p);
  for (int k = 0; k < p.data_arrays; k++)
    g.prog.arrays.push_back({g.data_array(k), p.array_size});
  g.prog.arrays.push_back({"X", p.array_size});
  g.fn.name = "gen";
  g.fn.params = {"N"};

  g.open("b" + std::to_string(g.block_seq++));  // entry
  BlockId exit_b = g.fresh_block();
  emit_loop(g, exit_b, Operand::value("N"), p.max_depth - 1);
  g.open(exit_b);
  Instruction ret;
  ret.op = Opcode::Ret;
  g.close(ret);

  g.prog.functions.push_back(std::move(g.fn));
  return g.prog;
}

MemoryImage gen_input(const Program& prog, const Function& f, uint64_t seed) {
  Rng rng(seed);
  MemoryImage m;
  int64_t min_size = INT64_MAX;
  for (const auto& a : prog.arrays) min_size = std::min(min_size, a.size);
  for (const auto& a : prog.arrays) {
    std::vector<Word> v(static_cast<size_t>(a.size));
    for (auto& w : v) {
      if (a.name.front() == 'X')
        w = static_cast<Word>(rng.below(static_cast<uint64_t>(min_size - 8)));
      else
        w = rng.range(-6, 6);
    }
    m.arrays[a.name] = std::move(v);
  }
  for (const auto& prm : f.params) {
    if (prm == "N")
      m.args[prm] = rng.range(0, std::max<int64_t>(1, min_size - 8));
    else
      m.args[prm] = rng.range(0, 9);
  }
  return m;
}

namespace {

Verdict fail_with_repro(const std::string& reason, const Program& prog,
                        const MemoryImage& input) {
  Verdict v;
  v.status = Verdict::Status::Fail;
  v.reason = reason;
  v.reproducer = ir::print_program(prog) + "\n// input:\n// " + io::to_json(input).dump() + "\n";
  return v;
}

Verdict run_one(const Program& prog, const Function& f, const MemoryImage& input,
                const DiffOptions& opt) {
  sim::RefTrace ref = run_reference(prog, f, input);
  if (ref.status != sim::RefStatus::Ok) {
    Verdict v;
    v.status = Verdict::Status::Skip;
    v.reason = "reference: " + ref.error;
    return v;
  }

  pipe::PipelineResult pr;
  try {
    pipe::PipelineOptions po;
    po.until = opt.speculate ? pipe::Stage::Merge : pipe::Stage::Decouple;
    po.path_limit = opt.path_limit;
    pr = pipe::run_pipeline(prog, f, po);
  } catch (const PipelineError& e) {
    Verdict v;
    v.status = Verdict::Status::Skip;
    v.reason = e.what();
    return v;
  }
  if (opt.speculate && !pr.spec_verdict.ok)
    return fail_with_repro("speculation validation: " + pr.spec_verdict.reason, prog, input);

  if (opt.speculate && opt.run_static_check) {
    Verdict st = check_lemma1_static(f, pr.pair, pr.map, opt.path_limit);
    if (st.status == Verdict::Status::Fail)
      return fail_with_repro("static check: " + st.reason, prog, input);
  }

  sim::SimResult sr = sim::run_dae(pr.pair, input, opt.sim);
  if (sr.termination != sim::Termination::Completed)
    return fail_with_repro("simulation: " + sr.error, prog, input);
  if (!sr.channel_balanced) return fail_with_repro("channel imbalance", prog, input);
  if (sr.undef_committed) return fail_with_repro("poison slot value committed", prog, input);
  for (const auto& a : prog.arrays) {
    if (sr.memory.at(a.name) != ref.memory.at(a.name))
      return fail_with_repro("final memory differs on @" + a.name, prog, input);
    if (sr.committed.at(a.name) != ref.committed.at(a.name))
      return fail_with_repro("committed store trace differs on @" + a.name, prog, input);
  }
  Verdict v;
  return v;
}

// Candidate program reductions that keep the function structurally valid.
std::vector<Program> shrink_candidates(const Program& prog) {
  std::vector<Program> out;
  const Function& f = prog.functions[0];
  // Drop one store.
  for (size_t bi = 0; bi < f.blocks.size(); bi++)
    for (size_t ii = 0; ii < f.blocks[bi].insts.size(); ii++)
      if (f.blocks[bi].insts[ii].op == Opcode::Store) {
        Program p = prog;
        auto& insts = p.functions[0].blocks[bi].insts;
        insts.erase(insts.begin() + static_cast<long>(ii));
        out.push_back(std::move(p));
      }
  // Collapse one conditional branch to either side.
  for (size_t bi = 0; bi < f.blocks.size(); bi++) {
    const Instruction& t = f.blocks[bi].term();
    if (t.op != Opcode::CondBr && t.op != Opcode::Switch) continue;
    std::set<BlockId> uniq(t.targets.begin(), t.targets.end());
    for (const auto& tgt : uniq) {
      Program p = prog;
      Instruction br;
      br.op = Opcode::Br;
      br.targets = {tgt};
      p.functions[0].blocks[bi].term() = br;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace

Verdict differential_test(const Program& prog, const Function& f, const MemoryImage& input,
                          const DiffOptions& opt) {
  Verdict v = run_one(prog, f, input, opt);
  if (v.status != Verdict::Status::Fail || !opt.shrink) return v;

  // Greedy shrink: keep any reduction that still fails and still validates.
  Program best = prog;
  int rounds = 0;
  bool improved = true;
  while (improved && rounds < 12) {
    improved = false;
    rounds++;
    for (auto& cand : shrink_candidates(best)) {
      Program cleaned = cand;
      cleaned.functions[0] = dae::simplify_cfg(dae::dce(cleaned.functions[0], true));
      if (!ir::validate(cleaned).empty()) continue;
      Verdict cv = run_one(cleaned, cleaned.functions[0], input, opt);
      if (cv.status == Verdict::Status::Fail) {
        best = std::move(cleaned);
        improved = true;
        break;
      }
    }
  }
  Verdict out = run_one(best, best.functions[0], input, opt);
  if (out.status != Verdict::Status::Fail) return v;  // shrink lost the bug; keep original
  out.reason = v.reason + " (shrunk)";
  return out;
}

// ---------------------------------------------------------------------------
// Sweep kernels
// ---------------------------------------------------------------------------

namespace {

const char* kHistText = R"(
array @A[2048]

func @hist(%N) {
en:
  %z = const 0
  %one = const 1
  %cap = const 100
  br H
H:
  %i = phi [%z, en], [%in, L]
  %hc = icmp lt %i, %N
  condbr %hc, B, x
B:
  %v = load @A[%i]
  %gb = icmp lt %v, %cap
  condbr %gb, S, L
S:
  store @A[%i], %i
  br L
L:
  %in = add %i, %one
  br H
x:
  ret
}
)";

const char* kThrText = R"(
array @IMG[2048]

func @thr(%T, %N) {
en:
  %z = const 0
  %one = const 1
  br H
H:
  %i = phi [%z, en], [%in, L]
  %hc = icmp lt %i, %N
  condbr %hc, B, x
B:
  %v = load @IMG[%i]
  %gb = icmp gt %v, %T
  condbr %gb, S, L
S:
  store @IMG[%i], %z
  br L
L:
  %in = add %i, %one
  br H
x:
  ret
}
)";

const char* kMmText = R"(
array @EU[1024]
array @EV[1024]
array @M[2048]

func @mm(%N) {
en:
  %z = const 0
  %one = const 1
  br H
H:
  %e = phi [%z, en], [%enext, L]
  %hc = icmp lt %e, %N
  condbr %hc, B, x
B:
  %u = load @EU[%e]
  %v = load @EV[%e]
  %mu = load @M[%u]
  %mv = load @M[%v]
  %c1 = icmp lt %mu, %z
  %c2 = icmp lt %mv, %z
  %both = mul %c1, %c2
  condbr %both, S, L
S:
  store @M[%u], %v
  store @M[%v], %u
  br L
L:
  %enext = add %e, %one
  br H
x:
  ret
}
)";

// Exactly k of n slots are misses, shuffled deterministically.
std::vector<bool> miss_pattern(int64_t n, double rate, Rng& rng) {
  int64_t k = llround(rate * static_cast<double>(n));
  std::vector<bool> miss(static_cast<size_t>(n), false);
  for (int64_t i = 0; i < k; i++) miss[static_cast<size_t>(i)] = true;
  for (int64_t i = n - 1; i > 0; i--) {
    int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i + 1)));
    std::swap(miss[static_cast<size_t>(i)], miss[static_cast<size_t>(j)]);
  }
  return miss;
}

}  // namespace

SweepKernel sweep_kernel_hist(int64_t n) {
  SweepKernel k;
  k.prog = ir::parse_program(kHistText);
  k.fn = "hist";
  k.make_input = [n](double rate, uint64_t seed) {
    Rng rng(seed);
    MemoryImage m;
    auto miss = miss_pattern(n, rate, rng);
    std::vector<Word> a(2048, 0);
    for (int64_t i = 0; i < n; i++)
      a[static_cast<size_t>(i)] = miss[static_cast<size_t>(i)]
                                      ? 1000
                                      : static_cast<Word>(rng.below(100));
    m.arrays["A"] = std::move(a);
    m.args["N"] = n;
    return m;
  };
  return k;
}

SweepKernel sweep_kernel_thr(int64_t n) {
  SweepKernel k;
  k.prog = ir::parse_program(kThrText);
  k.fn = "thr";
  k.make_input = [n](double rate, uint64_t seed) {
    Rng rng(seed);
    MemoryImage m;
    auto miss = miss_pattern(n, rate, rng);
    std::vector<Word> img(2048, 0);
    for (int64_t i = 0; i < n; i++)
      img[static_cast<size_t>(i)] =
          miss[static_cast<size_t>(i)] ? static_cast<Word>(rng.below(50))
                                       : 150 + static_cast<Word>(rng.below(50));
    m.arrays["IMG"] = std::move(img);
    m.args["T"] = 100;
    m.args["N"] = n;
    return m;
  };
  return k;
}

SweepKernel sweep_kernel_mm(int64_t n) {
  SweepKernel k;
  k.prog = ir::parse_program(kMmText);
  k.fn = "mm";
  k.make_input = [n](double rate, uint64_t seed) {
    Rng rng(seed);
    MemoryImage m;
    auto miss = miss_pattern(n, rate, rng);
    std::vector<Word> eu(1024, 0), ev(1024, 0), mm(2048, -1);
    for (int64_t i = 0; i < n; i++) {
      eu[static_cast<size_t>(i)] = 2 * i;
      ev[static_cast<size_t>(i)] = 2 * i + 1;
      if (miss[static_cast<size_t>(i)]) mm[static_cast<size_t>(2 * i)] = 1;
    }
    m.arrays["EU"] = std::move(eu);
    m.arrays["EV"] = std::move(ev);
    m.arrays["M"] = std::move(mm);
    m.args["N"] = n;
    return m;
  };
  return k;
}

std::vector<SweepRow> misspec_sweep(const SweepKernel& k, const std::vector<double>& rates,
                                    const sim::SimConfig& cfg, uint64_t seed,
                                    double tolerance) {
  const Function& f = *k.prog.function(k.fn);
  pipe::PipelineResult pr = pipe::run_pipeline(k.prog, f);
  std::vector<SweepRow> rows;
  for (size_t i = 0; i < rates.size(); i++) {
    MemoryImage input = k.make_input(rates[i], seed + i);
    sim::SimResult sr = sim::run_dae(pr.pair, input, cfg);
    if (sr.termination != sim::Termination::Completed)
      throw PipelineError(PipelineErrorKind::InvalidInput, "sweep simulation did not complete");
    SweepRow row;
    row.target_rate = rates[i];
    row.achieved_rate = sr.misspec_rate;
    row.cycles = sr.cycles;
    if (std::abs(row.achieved_rate - row.target_rate) > tolerance)
      throw PipelineError(PipelineErrorKind::UnreachableRate,
                          "achieved " + std::to_string(row.achieved_rate) + " vs target " +
                              std::to_string(row.target_rate));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Nesting template
// ---------------------------------------------------------------------------

namespace {

Program build_nesting_program(int n, bool lod_guards) {
  std::ostringstream os;
  os << "array @A[1024]\n\nfunc @nest(%N) {\n";
  os << "en:\n  %z = const 0\n  %one = const 1\n  br H\n";
  os << "H:\n  %i = phi [%z, en], [%in, L]\n  %hc = icmp lt %i, %N\n  condbr %hc, g, x\n";
  os << "g:\n";
  if (lod_guards)
    os << "  %gv = load @A[%i]\n";
  else
    os << "  %gv = opaque sel(%i)\n";
  os << "  %c1 = icmp gt %gv, %z\n";
  os << "  condbr %c1, s1, L\n";
  for (int k = 1; k <= n; k++) {
    os << "s" << k << ":\n";
    os << "  %a" << k << " = add %i, " << 64 * k << "\n";
    os << "  %w" << k << " = opaque f" << k << "(%i)\n";
    os << "  store @A[%a" << k << "], %w" << k << "\n";
    if (k < n) {
      os << "  %c" << k + 1 << " = icmp gt %gv, " << k << "\n";
      os << "  condbr %c" << k + 1 << ", s" << k + 1 << ", L\n";
    } else {
      os << "  br L\n";
    }
  }
  os << "L:\n  %in = add %i, %one\n  br H\n";
  os << "x:\n  ret\n}\n";
  return ir::parse_program(os.str());
}

}  // namespace

NestingResult nesting_sweep(int n, int64_t iterations, const sim::SimConfig& cfg) {
  NestingResult res;
  res.program = build_nesting_program(n, true);
  const Function& f = res.program.functions[0];
  pipe::PipelineResult pr = pipe::run_pipeline(res.program, f);
  res.poison_blocks = static_cast<int>(pr.record.created_blocks.size());
  res.poison_calls = pr.record.poison_calls;

  MemoryImage input;
  std::vector<Word> a(1024, 0);
  for (int64_t i = 0; i < iterations; i++)
    a[static_cast<size_t>(i)] = static_cast<Word>(i % (n + 1));
  input.arrays["A"] = a;
  input.args["N"] = iterations;
  sim::SimResult spec_run = sim::run_dae(pr.pair, input, cfg);
  res.cycles_spec = spec_run.cycles;

  Program oracle = build_nesting_program(n, false);
  pipe::PipelineOptions po;
  po.until = pipe::Stage::Merge;
  pipe::PipelineResult orr = pipe::run_pipeline(oracle, oracle.functions[0], po);
  sim::SimResult oracle_run = sim::run_dae(orr.pair, input, cfg);
  res.cycles_oracle = oracle_run.cycles;
  return res;
}

}  // namespace daecc::verify
