#include "daecc/poison.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "daecc/analysis.hpp"
#include "daecc/support.hpp"

namespace daecc::poison {

using analysis::Cfg;
using dae::DaePair;
using ir::BasicBlock;
using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;
using ir::Operand;
using spec::SpecReqMap;
using spec::SpecRequest;

namespace {

struct PendingGroup {
  BlockId trueBB;
  std::vector<SpecRequest> reqs;
};

std::vector<PendingGroup> pending_groups(const std::vector<SpecRequest>& reqs) {
  std::vector<PendingGroup> out;
  for (const auto& r : reqs) {
    if (!r.is_store) continue;  // loads are consumed, never poisoned
    if (!out.empty() && out.back().trueBB == r.trueBB)
      out.back().reqs.push_back(r);
    else
      out.push_back({r.trueBB, {r}});
  }
  return out;
}

}  // namespace

PoisonPlan plan_poisons(const Function& cu, const SpecReqMap& map, int64_t path_limit) {
  PoisonPlan plan;
  std::set<std::pair<EdgeKey, int>> emitted;  // (edge, site) pairs, at most once
  analysis::LoopInfo loops = analysis::loop_info(cu);
  analysis::Cfg cfg = Cfg::build(cu);

  for (const auto& [specBB, reqs] : map.entries) {
    std::vector<PendingGroup> groups = pending_groups(reqs);
    if (groups.empty()) continue;
    const analysis::Loop* home = loops.loop_of(cfg.id(specBB));
    auto paths = analysis::forward_paths(cu, specBB, path_limit);
    for (const auto& path : paths) {
      plan.paths_walked++;
      for (const auto& b : path) {
        const analysis::Loop* lb = loops.loop_of(cfg.id(b));
        if (lb == home) continue;
        // Walking out of the loop is fine; walking into a nested loop is not.
        bool ancestor = false;
        for (const analysis::Loop* l = home; l;
             l = l->parent < 0 ? nullptr : &loops.loops[static_cast<size_t>(l->parent)])
          if (l == lb) ancestor = true;
        if (lb && !ancestor && (!home || lb->depth > home->depth))
          throw PipelineError(PipelineErrorKind::RequestInInnerLoop,
                              "poison path from '" + specBB + "' enters inner loop at '" + b +
                                  "'");
      }
      std::deque<PendingGroup> pending(groups.begin(), groups.end());
      for (size_t i = 0; i + 1 < path.size() && !pending.empty(); i++) {
        EdgeKey edge{path[i], path[i + 1]};
        while (!pending.empty()) {
          PendingGroup& front = pending.front();
          if (edge.second == front.trueBB) {
            pending.pop_front();  // the request comes true here
            break;                // on to the next edge
          }
          if (!analysis::reachable_fwd(cu, edge.second, front.trueBB)) {
            for (const auto& r : front.reqs)
              if (emitted.insert({edge, r.site}).second)
                plan.actions.push_back({edge, r, specBB});
            pending.pop_front();
            continue;  // the new front may also be dead on this edge
          }
          break;  // front still reachable: skip this edge
        }
      }
    }
  }
  return plan;
}

namespace {

Instruction make_poison(const SpecRequest& r) {
  Instruction in;
  in.op = Opcode::ProduceVal;
  in.array = r.array;
  in.args = {Operand::undef(), Operand::immediate(1)};
  in.site = r.site;
  return in;
}

Instruction make_br(const BlockId& target) {
  Instruction in;
  in.op = Opcode::Br;
  in.targets.push_back(target);
  return in;
}

// Steering value construction: 1 on every path that passed specBB since the
// loop header, 0 otherwise, evaluated at `src`. Inserts phi nodes at joins.
ir::Operand build_steer(Function& cu, const BlockId& specBB, const BlockId& src, int* name_seq) {
  Cfg cfg = Cfg::build(cu);
  std::set<BlockId> relevant;  // blocks on forward paths specBB -> src
  for (const auto& b : cu.blocks)
    if (analysis::reachable_fwd(cu, specBB, b.id) && analysis::reachable_fwd(cu, b.id, src))
      relevant.insert(b.id);
  std::map<BlockId, Operand> at;
  at[specBB] = Operand::immediate(1);
  for (const auto& b : analysis::forward_topo(cu)) {
    if (!relevant.count(b) || b == specBB) continue;
    std::vector<std::pair<Operand, BlockId>> incoming;
    for (int p : cfg.pred[cfg.id(b)]) {
      const BlockId& pid = cfg.order[p];
      auto it = at.find(pid);
      incoming.push_back({it == at.end() ? Operand::immediate(0) : it->second, pid});
    }
    bool uniform = std::all_of(incoming.begin(), incoming.end(),
                               [&](const auto& x) { return x.first == incoming[0].first; });
    if (uniform && !incoming.empty()) {
      at[b] = incoming[0].first;
      continue;
    }
    Instruction phi;
    phi.op = Opcode::Phi;
    phi.result = "sp." + std::to_string((*name_seq)++) + "." + specBB + "." + b;
    for (auto& [v, p] : incoming) phi.incomings.push_back({v, p});
    BasicBlock* bb = cu.block(b);
    bb->insts.insert(bb->insts.begin(), phi);
    at[b] = Operand::value(phi.result);
  }
  auto it = at.find(src);
  return it == at.end() ? Operand::immediate(0) : it->second;
}

}  // namespace

std::pair<Function, PlacementRecord> apply_poison(const Function& cu, const PoisonPlan& plan,
                                                  const SpecReqMap& map, const DaePair& pair) {
  (void)map;
  Function out = cu;
  PlacementRecord rec;
  if (plan.actions.empty()) return {out, rec};

  Cfg cfg = Cfg::build(cu);
  analysis::DomTree dom = analysis::dominator_tree(cfg);
  auto dominates = [&](const BlockId& a, const BlockId& b) {
    return dom.dominates(cfg.id(a), cfg.id(b));
  };
  auto single_pred = [&](const BlockId& b) { return cfg.pred[cfg.id(b)].size() == 1; };

  // Group actions per edge, then per specBB (plan order within a group).
  std::vector<EdgeKey> edge_order;
  std::map<EdgeKey, std::map<BlockId, std::vector<PoisonAction>>> by_edge;
  for (const auto& a : plan.actions) {
    if (!by_edge.count(a.edge)) edge_order.push_back(a.edge);
    by_edge[a.edge][a.specBB].push_back(a);
  }

  int steer_seq = 0;
  std::map<std::pair<BlockId, BlockId>, Operand> steer_cache;  // (specBB, src)

  for (const auto& edge : edge_order) {
    auto& groups = by_edge[edge];
    const auto& [src, dst] = edge;

    // Classify each group.
    struct GroupPlan {
      BlockId specBB;
      std::vector<PoisonAction> actions;
      bool prepend = false;
      bool steered = false;
      std::vector<int> case_ids;
    };
    std::vector<GroupPlan> gps;
    for (auto& [specBB, actions] : groups) {
      GroupPlan gp;
      gp.specBB = specBB;
      gp.actions = actions;
      bool all_case3 = true;
      for (const auto& a : actions) {
        int case_id;
        if (analysis::reachable_fwd(cu, a.req.trueBB, dst))
          case_id = 1;
        else if (!dominates(specBB, dst))
          case_id = 2;
        else
          case_id = 3;
        gp.case_ids.push_back(case_id);
        if (case_id != 3) all_case3 = false;
      }
      gp.prepend = all_case3 && single_pred(dst) && dominates(specBB, dst);
      gp.steered = !gp.prepend && !dominates(specBB, src);
      gps.push_back(std::move(gp));
    }
    // Ascending specBB so the lowest head ends nearest the destination;
    // steering keeps the chains mutually exclusive.
    std::sort(gps.begin(), gps.end(),
              [](const GroupPlan& a, const GroupPlan& b) { return a.specBB < b.specBB; });

    // Prepends first (they do not touch the edge itself).
    for (auto& gp : gps) {
      if (!gp.prepend) continue;
      BasicBlock* db = out.block(dst);
      size_t at = 0;
      while (at < db->insts.size() && db->insts[at].is_phi()) at++;
      std::vector<Instruction> kills;
      for (const auto& a : gp.actions) kills.push_back(make_poison(a.req));
      db->insts.insert(db->insts.begin() + static_cast<long>(at), kills.begin(), kills.end());
      for (size_t i = 0; i < gp.actions.size(); i++) {
        rec.placements.push_back({gp.actions[i], gp.case_ids[i], false, dst, ""});
        rec.poison_calls++;
      }
    }

    // Then build the on-edge chain, back to front.
    BlockId next = dst;
    std::vector<BlockId> direct_preds_of_dst;
    for (auto& gp : gps) {
      if (gp.prepend) continue;
      Operand steer;
      if (gp.steered) {
        auto key = std::make_pair(gp.specBB, src);
        auto it = steer_cache.find(key);
        if (it == steer_cache.end()) {
          steer = build_steer(out, gp.specBB, src, &steer_seq);
          steer_cache[key] = steer;
        } else {
          steer = it->second;
        }
      }
      BasicBlock pb;
      pb.id = "p." + src + "." + dst + "." + gp.specBB;
      for (const auto& a : gp.actions) pb.insts.push_back(make_poison(a.req));
      pb.insts.push_back(make_br(next));
      if (next == dst) direct_preds_of_dst.push_back(pb.id);
      BlockId chain_head = pb.id;
      if (gp.steered) {
        BasicBlock rb;
        rb.id = "r." + src + "." + dst + "." + gp.specBB;
        Instruction cbr;
        cbr.op = Opcode::CondBr;
        cbr.args.push_back(steer);
        cbr.targets = {pb.id, next};
        rb.insts.push_back(cbr);
        if (next == dst) direct_preds_of_dst.push_back(rb.id);
        chain_head = rb.id;
        out.blocks.push_back(std::move(rb));
      }
      out.blocks.push_back(std::move(pb));
      rec.created_blocks.push_back("p." + src + "." + dst + "." + gp.specBB);
      for (size_t i = 0; i < gp.actions.size(); i++) {
        rec.placements.push_back({gp.actions[i], gp.case_ids[i], gp.steered,
                                  "p." + src + "." + dst + "." + gp.specBB,
                                  gp.steered && steer.is_value() ? steer.name : ""});
        rec.poison_calls++;
      }
      next = chain_head;
    }

    if (next != dst) {
      // Rewire the edge through the chain and fix the destination's phis.
      BasicBlock* sb = out.block(src);
      for (auto& t : sb->term().targets)
        if (t == dst) t = next;
      BasicBlock* db = out.block(dst);
      for (auto& in : db->insts) {
        if (!in.is_phi()) break;
        Operand via_src;
        bool had = false;
        for (const auto& inc : in.incomings)
          if (inc.pred == src) {
            via_src = inc.value;
            had = true;
          }
        if (!had) continue;
        std::erase_if(in.incomings,
                      [&](const ir::PhiIncoming& inc) { return inc.pred == src; });
        for (const auto& p : direct_preds_of_dst) in.incomings.push_back({via_src, p});
      }
    }
  }

  auto diags = ir::validate_function(ir::Program{pair.arrays, {out}}, out);
  if (!diags.empty())
    throw PipelineError(PipelineErrorKind::DominanceBroken,
                        "poisoned CU fails validation: " + diags.front().message);
  return {out, rec};
}

namespace {

bool is_poison_only_block(const BasicBlock& b) {
  if (b.insts.size() < 2 || b.term().op != Opcode::Br) return false;
  for (size_t i = 0; i + 1 < b.insts.size(); i++) {
    const Instruction& in = b.insts[i];
    if (in.op != Opcode::ProduceVal) return false;
    if (!(in.args[1] == Operand::immediate(1))) return false;
  }
  return true;
}

std::vector<std::string> poison_list(const BasicBlock& b) {
  std::vector<std::string> out;
  for (size_t i = 0; i + 1 < b.insts.size(); i++) out.push_back(b.insts[i].array);
  return out;
}

}  // namespace

std::pair<Function, int> merge_poison_blocks(const Function& cu) {
  Function out = cu;
  int merges = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < out.blocks.size() && !changed; i++) {
      if (!is_poison_only_block(out.blocks[i])) continue;
      for (size_t j = i + 1; j < out.blocks.size() && !changed; j++) {
        if (!is_poison_only_block(out.blocks[j])) continue;
        const BasicBlock& a = out.blocks[i];
        const BasicBlock& b = out.blocks[j];
        if (poison_list(a) != poison_list(b)) continue;
        if (a.term().targets != b.term().targets) continue;
        // Successor phi values coming from a and b must agree.
        const BlockId succ = a.term().targets[0];
        BasicBlock* sb = out.block(succ);
        bool phi_ok = true;
        for (const auto& in : sb->insts) {
          if (!in.is_phi()) break;
          Operand va, vb;
          for (const auto& inc : in.incomings) {
            if (inc.pred == a.id) va = inc.value;
            if (inc.pred == b.id) vb = inc.value;
          }
          if (!(va == vb)) phi_ok = false;
        }
        if (!phi_ok) continue;
        // Keep a; redirect predecessors of b and drop b.
        BlockId dead = b.id;
        BlockId keep = a.id;
        for (auto& blk : out.blocks)
          for (auto& t : blk.term().targets)
            if (t == dead) t = keep;
        for (auto& in : *&sb->insts) {
          if (!in.is_phi()) break;
          std::erase_if(in.incomings,
                        [&](const ir::PhiIncoming& inc) { return inc.pred == dead; });
        }
        std::erase_if(out.blocks, [&](const BasicBlock& x) { return x.id == dead; });
        merges++;
        changed = true;
      }
    }
  }
  return {out, merges};
}

Function hoist_load_consumes(const Function& cu, const SpecReqMap& map, const DaePair& pair) {
  Function out = cu;
  bool any = false;
  for (const auto& [head, reqs] : map.entries) {
    for (const auto& r : reqs) {
      if (r.is_store) continue;
      any = true;
      // Find and detach the consume for this site.
      Instruction consume;
      bool found = false;
      for (auto& b : out.blocks) {
        for (size_t i = 0; i < b.insts.size(); i++) {
          if (b.insts[i].op == Opcode::ConsumeVal && b.insts[i].site == r.site) {
            consume = b.insts[i];
            b.insts.erase(b.insts.begin() + static_cast<long>(i));
            found = true;
            break;
          }
        }
        if (found) break;
      }
      if (!found) continue;  // already hoisted (duplicate head entry)
      BasicBlock* hb = out.block(head);
      hb->insts.insert(hb->insts.end() - 1, consume);

      // phis over the hoisted value become selects when the guard and the
      // alternative value are both available at the join.
      Cfg cfg = Cfg::build(out);
      analysis::DomTree dom = analysis::dominator_tree(cfg);
      const Instruction& hterm = out.block(head)->term();
      if (hterm.op != Opcode::CondBr) continue;
      std::map<std::string, BlockId> defs;
      for (const auto& b : out.blocks)
        for (const auto& in : b.insts)
          if (in.has_result()) defs[in.result] = b.id;
      for (auto& b : out.blocks) {
        for (size_t i = 0; i < b.insts.size(); i++) {
          Instruction& in = b.insts[i];
          if (!in.is_phi() || in.incomings.size() != 2) continue;
          int v_at = -1;
          for (int k = 0; k < 2; k++)
            if (in.incomings[static_cast<size_t>(k)].value ==
                Operand::value(consume.result))
              v_at = k;
          if (v_at < 0) continue;
          const auto& v_inc = in.incomings[static_cast<size_t>(v_at)];
          const auto& o_inc = in.incomings[static_cast<size_t>(1 - v_at)];
          // Which side of the head's branch feeds the value?
          bool via_true = v_inc.pred == hterm.targets[0] ||
                          analysis::reachable_fwd(out, hterm.targets[0], v_inc.pred);
          bool via_false = v_inc.pred == hterm.targets[1] ||
                           analysis::reachable_fwd(out, hterm.targets[1], v_inc.pred);
          if (via_true == via_false) continue;  // ambiguous
          // The alternative must dominate the join.
          if (o_inc.value.is_value()) {
            auto it = defs.find(o_inc.value.name);
            if (it != defs.end() && !dom.dominates(cfg.id(it->second), cfg.id(b.id))) continue;
          }
          Instruction sel;
          sel.op = Opcode::Select;
          sel.result = in.result;
          sel.args = {hterm.args[0],
                      via_true ? v_inc.value : o_inc.value,
                      via_true ? o_inc.value : v_inc.value};
          b.insts.erase(b.insts.begin() + static_cast<long>(i));
          size_t at = 0;
          while (at < b.insts.size() && b.insts[at].is_phi()) at++;
          b.insts.insert(b.insts.begin() + static_cast<long>(at), sel);
          break;
        }
      }
    }
  }
  if (any) {
    auto diags = ir::validate_function(ir::Program{pair.arrays, {out}}, out);
    if (!diags.empty())
      throw PipelineError(PipelineErrorKind::DominanceBroken,
                          "CU after load-consume hoisting fails validation: " +
                              diags.front().message);
  }
  return out;
}

}  // namespace daecc::poison
