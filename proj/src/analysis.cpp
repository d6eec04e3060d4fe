#include "daecc/analysis.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <queue>

namespace daecc::analysis {

using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;

Cfg Cfg::build(const Function& f) {
  Cfg cfg;
  for (const auto& b : f.blocks) {
    cfg.index[b.id] = static_cast<int>(cfg.order.size());
    cfg.order.push_back(b.id);
  }
  cfg.succ.resize(cfg.order.size());
  cfg.pred.resize(cfg.order.size());
  for (const auto& b : f.blocks) {
    int s = cfg.index.at(b.id);
    for (const auto& t : ir::successors(b.term())) {
      int d = cfg.index.at(t);
      cfg.succ[s].push_back(d);
      cfg.pred[d].push_back(s);
    }
  }
  return cfg;
}

namespace {

// Reverse post-order from `root` following `succ`.
std::vector<int> rpo_order(const std::vector<std::vector<int>>& succ, int root) {
  std::vector<int> post;
  std::vector<char> seen(succ.size(), 0);
  // Iterative DFS with explicit stack of (node, next-child).
  std::vector<std::pair<int, size_t>> stack;
  stack.push_back({root, 0});
  seen[root] = 1;
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < succ[n].size()) {
      int c = succ[n][i++];
      if (!seen[c]) {
        seen[c] = 1;
        stack.push_back({c, 0});
      }
    } else {
      post.push_back(n);
      stack.pop_back();
    }
  }
  std::reverse(post.begin(), post.end());
  return post;
}

DomTree dominators_generic(const std::vector<std::vector<int>>& succ,
                           const std::vector<std::vector<int>>& pred, int root) {
  int n = static_cast<int>(succ.size());
  std::vector<int> rpo = rpo_order(succ, root);
  std::vector<int> rpo_pos(n, -1);
  for (size_t i = 0; i < rpo.size(); i++) rpo_pos[rpo[i]] = static_cast<int>(i);

  DomTree dt;
  dt.root = root;
  dt.idom.assign(n, -1);
  dt.idom[root] = root;

  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (rpo_pos[a] > rpo_pos[b]) a = dt.idom[a];
      while (rpo_pos[b] > rpo_pos[a]) b = dt.idom[b];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : rpo) {
      if (b == root) continue;
      int new_idom = -1;
      for (int p : pred[b]) {
        if (dt.idom[p] < 0) continue;  // not yet processed / unreachable
        new_idom = new_idom < 0 ? p : intersect(p, new_idom);
      }
      if (new_idom >= 0 && dt.idom[b] != new_idom) {
        dt.idom[b] = new_idom;
        changed = true;
      }
    }
  }
  return dt;
}

}  // namespace

DomTree dominator_tree(const Cfg& cfg) { return dominators_generic(cfg.succ, cfg.pred, 0); }

DomTree post_dominator_tree(const Cfg& cfg, const std::vector<std::pair<int, int>>& backedges) {
  int n = cfg.size();
  int vexit = n;
  // Forward graph without backedges, reversed, rooted at a virtual exit.
  std::vector<std::vector<int>> fsucc(n + 1), fpred(n + 1);
  std::set<std::pair<int, int>> back(backedges.begin(), backedges.end());
  for (int b = 0; b < n; b++) {
    for (int s : cfg.succ[b]) {
      if (back.count({b, s})) continue;
      fsucc[b].push_back(s);
      fpred[s].push_back(b);
    }
  }
  for (int b = 0; b < n; b++)
    if (fsucc[b].empty()) {
      fsucc[b].push_back(vexit);
      fpred[vexit].push_back(b);
    }
  // Reverse.
  std::vector<std::vector<int>> rsucc(n + 1), rpred(n + 1);
  for (int b = 0; b <= n; b++)
    for (int s : fsucc[b]) {
      rsucc[s].push_back(b);
      rpred[b].push_back(s);
    }
  return dominators_generic(rsucc, rpred, vexit);
}

EdgeClassification classify_edges(const Cfg& cfg, const DomTree& dom) {
  EdgeClassification ec;
  for (int b = 0; b < cfg.size(); b++) {
    for (int s : cfg.succ[b]) {
      if (dom.dominates(s, b))
        ec.back.push_back({b, s});
      else
        ec.forward.push_back({b, s});
    }
  }
  // Reducible iff the forward edges form a DAG.
  std::vector<int> indeg(cfg.size(), 0);
  std::vector<std::vector<int>> fsucc(cfg.size());
  for (auto [u, v] : ec.forward) {
    fsucc[u].push_back(v);
    indeg[v]++;
  }
  std::deque<int> q;
  for (int b = 0; b < cfg.size(); b++)
    if (indeg[b] == 0) q.push_back(b);
  int emitted = 0;
  while (!q.empty()) {
    int b = q.front();
    q.pop_front();
    emitted++;
    for (int s : fsucc[b])
      if (--indeg[s] == 0) q.push_back(s);
  }
  if (emitted != cfg.size()) {
    ec.reducible = false;
    ec.problem = "irreducible control flow";
  }
  return ec;
}

LoopInfo loop_info(const Function& f) {
  Cfg cfg = Cfg::build(f);
  DomTree dom = dominator_tree(cfg);
  EdgeClassification ec = classify_edges(cfg, dom);
  LoopInfo li;
  li.innermost.assign(cfg.size(), -1);
  if (!ec.reducible) {
    li.problems.push_back({"irreducible", ec.problem, f.entry()});
    return li;
  }
  // Group backedges by header.
  std::map<int, std::vector<int>> latches;
  for (auto [l, h] : ec.back) latches[h].push_back(l);
  for (auto& [header, ls] : latches) {
    if (ls.size() > 1) {
      li.problems.push_back({"non-canonical-loop",
                             "loop header '" + cfg.order[header] + "' has multiple backedges",
                             cfg.order[header]});
    }
    Loop loop;
    loop.header = header;
    loop.latch = ls.front();
    // Natural loop: header plus all blocks reaching a latch without passing
    // through the header.
    loop.body.insert(header);
    std::deque<int> work;
    for (int l : ls) {
      if (!loop.body.count(l)) {
        loop.body.insert(l);
        work.push_back(l);
      }
    }
    while (!work.empty()) {
      int b = work.front();
      work.pop_front();
      for (int p : cfg.pred[b]) {
        if (!loop.body.count(p)) {
          loop.body.insert(p);
          work.push_back(p);
        }
      }
    }
    li.loops.push_back(std::move(loop));
  }
  // Nesting: parent = smallest strictly-containing loop.
  for (size_t i = 0; i < li.loops.size(); i++) {
    int best = -1;
    size_t best_size = SIZE_MAX;
    for (size_t j = 0; j < li.loops.size(); j++) {
      if (i == j) continue;
      const auto& a = li.loops[i];
      const auto& b = li.loops[j];
      if (b.body.size() > a.body.size() &&
          std::includes(b.body.begin(), b.body.end(), a.body.begin(), a.body.end()) &&
          b.body.size() < best_size) {
        best = static_cast<int>(j);
        best_size = b.body.size();
      }
    }
    li.loops[i].parent = best;
  }
  for (size_t i = 0; i < li.loops.size(); i++) {
    int d = 1;
    for (int p = li.loops[i].parent; p >= 0; p = li.loops[p].parent) d++;
    li.loops[i].depth = d;
  }
  // Innermost loop per block: deepest loop containing it.
  for (int b = 0; b < cfg.size(); b++) {
    int best = -1;
    for (size_t i = 0; i < li.loops.size(); i++) {
      if (li.loops[i].body.count(b) && (best < 0 || li.loops[i].depth > li.loops[best].depth))
        best = static_cast<int>(i);
    }
    li.innermost[b] = best;
  }
  return li;
}

namespace {

// Forward successor list (backedges removed).
std::vector<std::vector<int>> forward_succ(const Cfg& cfg) {
  DomTree dom = dominator_tree(cfg);
  std::vector<std::vector<int>> fs(cfg.size());
  for (int b = 0; b < cfg.size(); b++)
    for (int s : cfg.succ[b])
      if (!dom.dominates(s, b)) fs[b].push_back(s);
  return fs;
}

}  // namespace

bool reachable_fwd(const Function& f, const BlockId& from, const BlockId& to) {
  if (from == to) return true;
  Cfg cfg = Cfg::build(f);
  auto fs = forward_succ(cfg);
  int src = cfg.id(from), dst = cfg.id(to);
  std::vector<char> seen(cfg.size(), 0);
  std::deque<int> q{src};
  seen[src] = 1;
  while (!q.empty()) {
    int b = q.front();
    q.pop_front();
    if (b == dst) return true;
    for (int s : fs[b])
      if (!seen[s]) {
        seen[s] = 1;
        q.push_back(s);
      }
  }
  return false;
}

std::vector<BlockId> region_rpo(const Function& f, const BlockId& src) {
  Cfg cfg = Cfg::build(f);
  LoopInfo li = loop_info(f);
  auto fs = forward_succ(cfg);
  int s = cfg.id(src);
  const Loop* home = li.loop_of(s);

  // Region membership: forward-reachable from src, restricted to the home
  // loop's body, without entering inner-loop headers.
  auto in_region_target = [&](int b) {
    if (home && !home->body.count(b)) return false;
    const Loop* l = li.loop_of(b);
    if (l && home && l != home) {
      // b is in a nested loop; its header is not entered.
      return false;
    }
    if (l && !home) return false;  // src outside loops, b inside one
    return true;
  };

  std::set<int> region{s};
  std::deque<int> work{s};
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int t : fs[b]) {
      if (!in_region_target(t)) continue;
      if (!region.count(t)) {
        region.insert(t);
        work.push_back(t);
      }
    }
  }

  // Kahn topological sort over the region, min block id first.
  std::map<int, int> indeg;
  for (int b : region) indeg[b] = 0;
  for (int b : region)
    for (int t : fs[b])
      if (region.count(t)) indeg[t]++;
  auto cmp = [&](int a, int b) { return cfg.order[a] > cfg.order[b]; };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (auto [b, d] : indeg)
    if (d == 0) heap.push(b);
  std::vector<BlockId> out;
  while (!heap.empty()) {
    int b = heap.top();
    heap.pop();
    out.push_back(cfg.order[b]);
    for (int t : fs[b])
      if (region.count(t) && --indeg[t] == 0) heap.push(t);
  }
  return out;
}

std::vector<BlockId> forward_topo(const Function& f) {
  Cfg cfg = Cfg::build(f);
  auto fs = forward_succ(cfg);
  std::vector<int> indeg(cfg.size(), 0);
  for (int b = 0; b < cfg.size(); b++)
    for (int t : fs[b]) indeg[t]++;
  auto cmp = [&](int a, int b) { return cfg.order[a] > cfg.order[b]; };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (int b = 0; b < cfg.size(); b++)
    if (indeg[b] == 0) heap.push(b);
  std::vector<BlockId> out;
  while (!heap.empty()) {
    int b = heap.top();
    heap.pop();
    out.push_back(cfg.order[b]);
    for (int t : fs[b])
      if (--indeg[t] == 0) heap.push(t);
  }
  return out;
}

std::vector<std::vector<BlockId>> forward_paths(const Function& f, const BlockId& from,
                                                int64_t cap) {
  Cfg cfg = Cfg::build(f);
  auto fs = forward_succ(cfg);
  std::vector<std::vector<BlockId>> out;
  std::vector<BlockId> cur;
  std::function<void(int)> walk = [&](int b) {
    cur.push_back(cfg.order[b]);
    if (fs[b].empty()) {
      if (static_cast<int64_t>(out.size()) >= cap)
        throw PipelineError(PipelineErrorKind::PathLimit,
                            "forward path enumeration exceeded " + std::to_string(cap));
      out.push_back(cur);
    } else {
      for (int s : fs[b]) walk(s);
    }
    cur.pop_back();
  };
  walk(cfg.id(from));
  return out;
}

CtrlDepMap control_dependence(const Function& f) {
  Cfg cfg = Cfg::build(f);
  DomTree dom = dominator_tree(cfg);
  EdgeClassification ec = classify_edges(cfg, dom);
  DomTree pdom = post_dominator_tree(cfg, ec.back);
  int vexit = cfg.size();

  CtrlDepMap cd;
  // Classic edge-walk: for forward edge (u, v) with slot k, every block on
  // the pdom path from v up to (exclusive) ipdom(u) is control dependent on
  // (u, k).
  for (int u = 0; u < cfg.size(); u++) {
    const auto& succs = cfg.succ[u];
    for (size_t k = 0; k < succs.size(); k++) {
      int v = succs[k];
      if (dom.dominates(v, u)) continue;  // backedge
      int stop = pdom.idom[u];
      int w = v;
      while (w != stop && w != vexit) {
        cd.deps[cfg.order[w]].push_back({cfg.order[u], static_cast<int>(k)});
        w = pdom.idom[w];
        if (w < 0) break;
      }
    }
  }
  // Deduplicate per block.
  for (auto& [b, v] : cd.deps) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return cd;
}

std::string request_display(const Instruction& inst, const BlockId& block, int index) {
  if (inst.op == Opcode::Load || inst.op == Opcode::ConsumeVal) return inst.result;
  if ((inst.op == Opcode::Store || inst.op == Opcode::ProduceVal) && inst.args.size() > 1 &&
      inst.args[1].is_value())
    return inst.args[1].name;
  if (inst.op == Opcode::SendLdAddr || inst.op == Opcode::SendStAddr)
    return "req." + block + "." + std::to_string(index);
  return "st." + block + "." + std::to_string(index);
}

namespace {

struct DefSite {
  BlockId block;
  int index;
  const Instruction* inst;
};

// Map from value id to its defining instruction.
std::map<std::string, DefSite> def_map(const Function& f) {
  std::map<std::string, DefSite> defs;
  for (const auto& b : f.blocks)
    for (size_t i = 0; i < b.insts.size(); i++)
      if (b.insts[i].has_result())
        defs[b.insts[i].result] = {b.id, static_cast<int>(i), &b.insts[i]};
  return defs;
}

}  // namespace

LodReport lod_analysis(const Function& f, const LodConfig& cfg) {
  LodReport rep;
  rep.config = cfg;

  auto defs = def_map(f);
  Cfg graph = Cfg::build(f);
  LoopInfo li = loop_info(f);
  CtrlDepMap cd = control_dependence(f);

  // Collect requests (the G set) and loads.
  struct LoadRef {
    std::string display;
    std::string array;
    std::string result;
  };
  std::vector<LoadRef> loads;
  for (const auto& b : f.blocks) {
    for (size_t i = 0; i < b.insts.size(); i++) {
      const auto& in = b.insts[i];
      if (in.op == Opcode::Load || in.op == Opcode::Store) {
        RequestRef r;
        r.block = b.id;
        r.index = static_cast<int>(i);
        r.display = request_display(in, b.id, r.index);
        r.array = in.array;
        r.is_store = in.op == Opcode::Store;
        rep.requests.push_back(r);
        if (in.op == Opcode::Load) loads.push_back({r.display, in.array, in.result});
      }
    }
  }

  // Does this load feed any branch condition? (for the BranchFeedingLoads policy)
  auto feeds_branch = [&](const std::string& loadResult) {
    // Backward from each branch condition; cheap given tiny functions.
    for (const auto& b : f.blocks) {
      const auto& t = b.term();
      if (t.op != Opcode::CondBr && t.op != Opcode::Switch) continue;
      std::deque<std::string> work;
      std::set<std::string> seen;
      if (t.args[0].is_value()) work.push_back(t.args[0].name);
      while (!work.empty()) {
        std::string v = work.front();
        work.pop_front();
        if (!seen.insert(v).second) continue;
        if (v == loadResult) return true;
        auto it = defs.find(v);
        if (it == defs.end()) continue;
        for (const auto& a : it->second.inst->args)
          if (a.is_value()) work.push_back(a.name);
        for (const auto& inc : it->second.inst->incomings)
          if (inc.value.is_value()) work.push_back(inc.value.name);
      }
    }
    return false;
  };

  // The A set for a given request array under the configured policy.
  auto a_set_for = [&](const std::string& array) {
    std::set<std::string> out;  // load result value ids
    for (const auto& l : loads) {
      switch (cfg.policy) {
        case LodConfig::Policy::AllLoads:
          out.insert(l.result);
          break;
        case LodConfig::Policy::SameArray:
          if (l.array == array) out.insert(l.result);
          break;
        case LodConfig::Policy::BranchFeedingLoads:
          if (feeds_branch(l.result)) out.insert(l.result);
          break;
      }
    }
    return out;
  };

  std::set<std::string> a_union;

  // Def-use back-trace from a set of root operands. At each phi, incoming
  // values are followed and so are the incoming blocks' terminator operands.
  // Returns the value chain from a member of A to the root, front = the load.
  auto trace_to_a = [&](const std::vector<ir::Operand>& roots, const std::set<std::string>& A,
                        std::vector<std::string>* chain) {
    std::map<std::string, std::string> from;  // value -> next value toward root
    std::deque<std::string> work;
    for (const auto& r : roots)
      if (r.is_value()) {
        from[r.name] = "";
        work.push_back(r.name);
      }
    while (!work.empty()) {
      std::string v = work.front();
      work.pop_front();
      if (A.count(v)) {
        if (chain) {
          chain->clear();
          for (std::string c = v; !c.empty(); c = from[c]) chain->push_back(c);
        }
        return true;
      }
      auto it = defs.find(v);
      if (it == defs.end()) continue;
      const Instruction* di = it->second.inst;
      auto push = [&](const std::string& n) {
        if (!from.count(n)) {
          from[n] = v;
          work.push_back(n);
        }
      };
      for (const auto& a : di->args)
        if (a.is_value()) push(a.name);
      for (const auto& inc : di->incomings) {
        if (inc.value.is_value()) push(inc.value.name);
        // Also trace the incoming block's terminator condition.
        const auto* pb = f.block(inc.pred);
        if (pb) {
          const auto& t = pb->term();
          for (const auto& a : t.args)
            if (a.is_value()) push(a.name);
        }
      }
      continue;
    }
    return false;
  };

  // Transitive control dependence closure restricted to g's innermost loop.
  auto ctrl_sources = [&](const BlockId& gBlock, std::vector<BlockId>* crossLoop) {
    std::set<BlockId> seen;
    std::vector<BlockId> out;
    const Loop* home = li.loop_of(graph.id(gBlock));
    std::deque<BlockId> work{gBlock};
    std::set<BlockId> visited{gBlock};
    while (!work.empty()) {
      BlockId b = work.front();
      work.pop_front();
      auto it = cd.deps.find(b);
      if (it == cd.deps.end()) continue;
      for (const auto& [branchBlock, slot] : it->second) {
        const Loop* bl = li.loop_of(graph.id(branchBlock));
        if (bl != home) {
          if (crossLoop) crossLoop->push_back(branchBlock);
          continue;
        }
        if (seen.insert(branchBlock).second) out.push_back(branchBlock);
        if (visited.insert(branchBlock).second) work.push_back(branchBlock);
      }
    }
    return out;
  };

  // Per-request analysis.
  std::set<std::pair<BlockId, BlockId>> sourceEdges;  // (src source block, dest source block)
  std::set<BlockId> sources, destinations;

  for (const auto& r : rep.requests) {
    const auto& bb = *f.block(r.block);
    const Instruction& inst = bb.insts[r.index];
    std::set<std::string> A = a_set_for(r.array);
    for (const auto& a : A) a_union.insert(a);

    // Data dependency: address operand chain reaches a load in A.
    std::vector<ir::Operand> addr_roots;
    addr_roots.push_back(inst.args[0]);  // index operand for load/store
    std::vector<std::string> chain;
    std::set<std::string> A_minus_self = A;
    if (inst.op == Opcode::Load) A_minus_self.erase(inst.result);
    if (trace_to_a(addr_roots, A_minus_self, &chain)) {
      LodDataDep d;
      d.g = r.display;
      d.a = chain.front();
      d.path = chain;
      rep.dataDeps.push_back(std::move(d));
    }

    // Control dependency: some controlling branch's condition is fed by A.
    std::vector<BlockId> crossLoop;
    for (const auto& srcBB : ctrl_sources(r.block, &crossLoop)) {
      const auto& t = f.block(srcBB)->term();
      if (trace_to_a(t.args, A, nullptr)) {
        rep.controlDeps.push_back({r.display, srcBB, r.block});
        sources.insert(srcBB);
        destinations.insert(r.block);
      }
    }
    for (const auto& c : crossLoop)
      rep.crossLoopNotes.push_back(r.display + ": controlling branch in '" + c +
                                   "' crosses loop nesting, not chained");
  }

  rep.aSet.assign(a_union.begin(), a_union.end());

  // Source chain edges: s1 -> s2 when source block s2 contains a request
  // whose control dependency source is s1. (s2 is then a destination.)
  for (const auto& dep : rep.controlDeps) {
    if (sources.count(dep.gBlock) && dep.gBlock != dep.srcBB)
      sourceEdges.insert({dep.srcBB, dep.gBlock});
  }

  // Chain heads: sources that are not destinations.
  for (const auto& s : sources)
    if (!destinations.count(s)) rep.chainHeads.push_back(s);
  rep.sources.assign(sources.begin(), sources.end());

  // Chains: maximal paths in the source DAG starting at heads.
  std::map<BlockId, std::vector<BlockId>> adj;
  for (const auto& [a, b] : sourceEdges) adj[a].push_back(b);
  std::vector<BlockId> path;
  std::vector<std::vector<BlockId>> chains;
  std::function<void(const BlockId&)> walk = [&](const BlockId& b) {
    path.push_back(b);
    auto it = adj.find(b);
    if (it == adj.end() || it->second.empty()) {
      if (path.size() > 1) chains.push_back(path);
    } else {
      for (const auto& n : it->second) walk(n);
    }
    path.pop_back();
  };
  for (const auto& h : rep.chainHeads) walk(h);
  rep.chains = std::move(chains);
  return rep;
}

}  // namespace daecc::analysis
