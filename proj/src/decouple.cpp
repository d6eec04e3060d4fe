#include "daecc/decouple.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "daecc/analysis.hpp"
#include "daecc/support.hpp"

namespace daecc::dae {

using ir::BasicBlock;
using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;
using ir::Operand;

namespace {

bool is_effect_root(const Instruction& in, bool root_consumes) {
  if (in.is_terminator()) return true;
  switch (in.op) {
    case Opcode::Store:
    case Opcode::Load:
    case Opcode::SendLdAddr:
    case Opcode::SendStAddr:
    case Opcode::ProduceVal:
      return true;
    case Opcode::ConsumeVal:
      return root_consumes;
    default:
      return false;
  }
}

}  // namespace

Function dce(const Function& f, bool root_consumes) {
  // Liveness over SSA values: roots are effectful instructions; an
  // instruction is live iff it is a root or its result feeds a live use.
  std::set<ir::ValueId> live_values;
  bool changed = true;
  auto uses = [&](const Instruction& in, auto&& fn) {
    for (const auto& a : in.args)
      if (a.is_value()) fn(a.name);
    for (const auto& inc : in.incomings)
      if (inc.value.is_value()) fn(inc.value.name);
  };
  while (changed) {
    changed = false;
    for (const auto& b : f.blocks) {
      for (const auto& in : b.insts) {
        bool live = is_effect_root(in, root_consumes) ||
                    (in.has_result() && live_values.count(in.result));
        if (!live) continue;
        uses(in, [&](const ir::ValueId& v) {
          if (live_values.insert(v).second) changed = true;
        });
      }
    }
  }
  Function out = f;
  for (auto& b : out.blocks) {
    std::vector<Instruction> kept;
    for (auto& in : b.insts) {
      bool live = is_effect_root(in, root_consumes) ||
                  (in.has_result() && live_values.count(in.result));
      if (live) kept.push_back(std::move(in));
    }
    b.insts = std::move(kept);
  }
  return out;
}

namespace {

// Replace every occurrence of target `from` with `to` in a terminator.
void retarget(Instruction& term, const BlockId& from, const BlockId& to) {
  for (auto& t : term.targets)
    if (t == from) t = to;
}

// One simplify step; returns true if something changed.
bool simplify_step(Function& f) {
  analysis::Cfg cfg = analysis::Cfg::build(f);
  analysis::DomTree dom = analysis::dominator_tree(cfg);

  // Drop unreachable blocks (and phi incomings from them).
  {
    std::vector<char> reach(cfg.size(), 0);
    std::deque<int> q{0};
    reach[0] = 1;
    while (!q.empty()) {
      int b = q.front();
      q.pop_front();
      for (int s : cfg.succ[b])
        if (!reach[s]) {
          reach[s] = 1;
          q.push_back(s);
        }
    }
    std::set<BlockId> dead;
    for (int b = 0; b < cfg.size(); b++)
      if (!reach[b]) dead.insert(cfg.order[b]);
    if (!dead.empty()) {
      std::vector<BasicBlock> keep;
      for (auto& b : f.blocks)
        if (!dead.count(b.id)) keep.push_back(std::move(b));
      f.blocks = std::move(keep);
      for (auto& b : f.blocks)
        for (auto& in : b.insts)
          if (in.is_phi())
            std::erase_if(in.incomings,
                          [&](const ir::PhiIncoming& inc) { return dead.count(inc.pred); });
      return true;
    }
  }

  // Fold branches whose targets are all identical.
  for (auto& b : f.blocks) {
    Instruction& t = b.term();
    if ((t.op == Opcode::CondBr || t.op == Opcode::Switch) &&
        std::all_of(t.targets.begin(), t.targets.end(),
                    [&](const BlockId& x) { return x == t.targets[0]; })) {
      Instruction br;
      br.op = Opcode::Br;
      br.targets.push_back(t.targets[0]);
      t = br;
      return true;
    }
  }

  // Remove empty forwarding blocks (single unconditional successor, no
  // instructions). Loop headers and latches are kept.
  {
    std::set<int> headers, latches;
    analysis::EdgeClassification ec = analysis::classify_edges(cfg, dom);
    for (auto [l, h] : ec.back) {
      headers.insert(h);
      latches.insert(l);
    }
    for (const auto& b : f.blocks) {
      if (b.insts.size() != 1 || b.term().op != Opcode::Br) continue;
      int bi = cfg.id(b.id);
      if (bi == 0 || headers.count(bi) || latches.count(bi)) continue;
      BlockId succ = b.term().targets[0];
      if (succ == b.id) continue;
      // Phi safety in the successor: re-pointing each pred of b must not
      // clash with an existing incoming carrying a different value.
      const BasicBlock* sb = f.block(succ);
      std::vector<BlockId> preds;
      for (int p : cfg.pred[bi]) preds.push_back(cfg.order[p]);
      bool safe = true;
      for (const auto& in : sb->insts) {
        if (!in.is_phi()) break;
        Operand via_b;
        for (const auto& inc : in.incomings)
          if (inc.pred == b.id) via_b = inc.value;
        for (const auto& p : preds)
          for (const auto& inc : in.incomings)
            if (inc.pred == p && !(inc.value == via_b)) safe = false;
      }
      if (!safe) continue;
      // Rewire.
      Function& fn = f;
      for (auto& pb : fn.blocks)
        if (std::find(preds.begin(), preds.end(), pb.id) != preds.end())
          retarget(pb.term(), b.id, succ);
      for (auto& ob : fn.blocks) {
        if (ob.id != succ) continue;
        for (auto& in : ob.insts) {
          if (!in.is_phi()) break;
          Operand via_b;
          bool had = false;
          for (const auto& inc : in.incomings)
            if (inc.pred == b.id) {
              via_b = inc.value;
              had = true;
            }
          std::erase_if(in.incomings,
                        [&](const ir::PhiIncoming& inc) { return inc.pred == b.id; });
          if (had)
            for (const auto& p : preds) {
              bool exists = std::any_of(in.incomings.begin(), in.incomings.end(),
                                        [&](const ir::PhiIncoming& inc) { return inc.pred == p; });
              if (!exists) in.incomings.push_back({via_b, p});
            }
        }
      }
      std::erase_if(fn.blocks, [&](const BasicBlock& x) { return x.id == b.id; });
      return true;
    }
  }

  // Remove loops with no effects and no values used outside.
  {
    analysis::LoopInfo li = analysis::loop_info(f);
    for (const auto& loop : li.loops) {
      if (loop.parent >= 0) continue;  // handle outermost first
      std::set<BlockId> body;
      for (int b : loop.body) body.insert(cfg.order[b]);
      bool pure = true;
      std::set<ir::ValueId> defs;
      for (const auto& b : f.blocks) {
        if (!body.count(b.id)) continue;
        for (const auto& in : b.insts) {
          switch (in.op) {
            case Opcode::Load:
            case Opcode::Store:
            case Opcode::SendLdAddr:
            case Opcode::SendStAddr:
            case Opcode::ConsumeVal:
            case Opcode::ProduceVal:
            case Opcode::Ret:
              pure = false;
              break;
            default:
              break;
          }
          if (in.has_result()) defs.insert(in.result);
        }
      }
      if (!pure) continue;
      bool escapes = false;
      for (const auto& b : f.blocks) {
        if (body.count(b.id)) continue;
        for (const auto& in : b.insts) {
          for (const auto& a : in.args)
            if (a.is_value() && defs.count(a.name)) escapes = true;
          for (const auto& inc : in.incomings)
            if (inc.value.is_value() && defs.count(inc.value.name)) escapes = true;
        }
      }
      if (escapes) continue;
      // Exactly one exit target outside the loop.
      std::set<BlockId> exits;
      for (const auto& b : f.blocks) {
        if (!body.count(b.id)) continue;
        for (const auto& t : ir::successors(b.term()))
          if (!body.count(t)) exits.insert(t);
      }
      if (exits.size() != 1) continue;
      BlockId exit = *exits.begin();
      BlockId header = cfg.order[loop.header];
      // Preds of the header outside the loop jump straight to the exit.
      std::vector<BlockId> outer_preds;
      for (int p : cfg.pred[loop.header])
        if (!body.count(cfg.order[p])) outer_preds.push_back(cfg.order[p]);
      // Exit phis must not name loop blocks with differing values per pred;
      // retag incomings from loop blocks onto the outer preds.
      BasicBlock* eb = f.block(exit);
      bool safe = true;
      for (auto& in : eb->insts) {
        if (!in.is_phi()) break;
        std::set<BlockId> from_loop;
        Operand val;
        int nloop = 0;
        for (const auto& inc : in.incomings)
          if (body.count(inc.pred)) {
            val = inc.value;
            nloop++;
          }
        if (nloop > 1) safe = false;
        (void)from_loop;
      }
      if (!safe) continue;
      for (auto& in : eb->insts) {
        if (!in.is_phi()) break;
        Operand val;
        bool had = false;
        for (const auto& inc : in.incomings)
          if (body.count(inc.pred)) {
            val = inc.value;
            had = true;
          }
        std::erase_if(in.incomings,
                      [&](const ir::PhiIncoming& inc) { return body.count(inc.pred); });
        if (had)
          for (const auto& p : outer_preds) in.incomings.push_back({val, p});
      }
      for (auto& b : f.blocks)
        if (std::find(outer_preds.begin(), outer_preds.end(), b.id) != outer_preds.end())
          retarget(b.term(), header, exit);
      std::erase_if(f.blocks, [&](const BasicBlock& x) { return body.count(x.id); });
      return true;
    }
  }

  return false;
}

}  // namespace

Function simplify_cfg(const Function& f) {
  Function out = f;
  while (simplify_step(out)) {
  }
  return out;
}

Function clean_slice(const Function& f, bool root_consumes) {
  Function cur = f;
  for (;;) {
    Function next = dce(cur, root_consumes);
    next = simplify_cfg(next);
    if (next == cur) return cur;
    cur = std::move(next);
  }
}

DaePair decouple(const ir::Program& prog, const Function& f) {
  auto diags = ir::validate_function(prog, f);
  if (!diags.empty())
    throw PipelineError(PipelineErrorKind::InvalidInput,
                        "decouple input: " + diags.front().message);
  for (const auto& b : f.blocks)
    for (const auto& in : b.insts)
      if (in.is_channel())
        throw PipelineError(PipelineErrorKind::InvalidInput,
                            "decouple input already contains channel ops");

  DaePair pair;
  pair.arrays = prog.arrays;
  pair.source = f.name;

  // Request sites in program order; display names unique.
  std::set<std::string> used_names;
  std::map<std::pair<BlockId, int>, int> site_at;
  for (const auto& b : f.blocks) {
    for (size_t i = 0; i < b.insts.size(); i++) {
      const auto& in = b.insts[i];
      if (!in.is_mem()) continue;
      RequestSite s;
      s.id = static_cast<int>(pair.sites.size());
      s.array = in.array;
      s.kind = in.op == Opcode::Load ? MemKind::Load : MemKind::Store;
      s.origBlock = b.id;
      s.origIndex = static_cast<int>(i);
      s.display = analysis::request_display(in, b.id, static_cast<int>(i));
      if (!used_names.insert(s.display).second) {
        s.display += "." + std::to_string(s.id);
        used_names.insert(s.display);
      }
      site_at[{b.id, static_cast<int>(i)}] = s.id;
      pair.sites.push_back(std::move(s));
    }
  }

  // AGU slice.
  Function agu = f;
  agu.name = f.name + ".agu";
  for (auto& b : agu.blocks) {
    std::vector<Instruction> out;
    for (size_t i = 0; i < b.insts.size(); i++) {
      Instruction in = b.insts[i];
      if (in.op == Opcode::Load) {
        int site = site_at.at({b.id, static_cast<int>(i)});
        Instruction send;
        send.op = Opcode::SendLdAddr;
        send.array = in.array;
        send.args = {in.args[0]};
        send.site = site;
        out.push_back(std::move(send));
        Instruction cons;
        cons.op = Opcode::ConsumeVal;
        cons.array = in.array;
        cons.result = in.result;
        cons.site = site;
        out.push_back(std::move(cons));
      } else if (in.op == Opcode::Store) {
        Instruction send;
        send.op = Opcode::SendStAddr;
        send.array = in.array;
        send.args = {in.args[0]};  // value operand dropped
        send.site = site_at.at({b.id, static_cast<int>(i)});
        out.push_back(std::move(send));
      } else {
        out.push_back(std::move(in));
      }
    }
    b.insts = std::move(out);
  }

  // CU slice.
  Function cu = f;
  cu.name = f.name + ".cu";
  for (auto& b : cu.blocks) {
    for (size_t i = 0; i < b.insts.size(); i++) {
      Instruction& in = b.insts[i];
      if (in.op == Opcode::Load) {
        Instruction cons;
        cons.op = Opcode::ConsumeVal;
        cons.array = in.array;
        cons.result = in.result;
        cons.site = site_at.at({b.id, static_cast<int>(i)});
        in = std::move(cons);
      } else if (in.op == Opcode::Store) {
        Instruction prod;
        prod.op = Opcode::ProduceVal;
        prod.array = in.array;
        prod.args = {in.args[1], Operand::immediate(0)};
        prod.site = site_at.at({b.id, static_cast<int>(i)});
        in = std::move(prod);
      }
    }
  }

  pair.agu = clean_slice(agu, /*root_consumes=*/false);
  pair.cu = clean_slice(cu, /*root_consumes=*/true);
  refresh_site_flags(pair);
  return pair;
}

void refresh_site_flags(DaePair& pair) {
  for (auto& s : pair.sites) s.aguConsumes = false;
  for (const auto& b : pair.agu.blocks)
    for (const auto& in : b.insts)
      if (in.op == Opcode::ConsumeVal && in.site >= 0)
        for (auto& s : pair.sites)
          if (s.id == in.site) s.aguConsumes = true;
}

}  // namespace daecc::dae
