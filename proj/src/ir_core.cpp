#include <algorithm>
#include <deque>
#include <set>

#include "daecc/analysis.hpp"
#include "daecc/ir.hpp"

namespace daecc::ir {

std::vector<BlockId> successors(const Instruction& term) {
  return term.targets;
}

std::vector<Edge> cfg_edges(const Function& f) {
  analysis::Cfg cfg = analysis::Cfg::build(f);
  analysis::DomTree dom = analysis::dominator_tree(cfg);
  std::vector<Edge> edges;
  for (const auto& b : f.blocks) {
    for (const auto& t : successors(b.term())) {
      Edge e;
      e.src = b.id;
      e.dst = t;
      e.kind = dom.dominates(cfg.id(t), cfg.id(b.id)) ? Edge::Kind::Back : Edge::Kind::Forward;
      edges.push_back(std::move(e));
    }
  }
  return edges;
}

namespace {

void check_structure(const Program& p, const Function& f, std::vector<Diagnostic>& out) {
  std::set<BlockId> ids;
  for (const auto& b : f.blocks) {
    if (!ids.insert(b.id).second)
      out.push_back({"duplicate-block", "duplicate block label '" + b.id + "'", b.id});
    if (b.insts.empty()) {
      out.push_back({"empty-block", "block '" + b.id + "' has no instructions", b.id});
      continue;
    }
    if (!b.insts.back().is_terminator())
      out.push_back({"missing-terminator", "block '" + b.id + "' does not end in a terminator",
                     b.id});
    bool in_phi_prefix = true;
    for (size_t i = 0; i < b.insts.size(); i++) {
      const auto& in = b.insts[i];
      if (in.is_terminator() && i + 1 != b.insts.size())
        out.push_back({"terminator-mid-block",
                       "terminator before end of block '" + b.id + "'", b.id});
      if (in.is_phi()) {
        if (!in_phi_prefix)
          out.push_back({"phi-not-at-head", "phi after non-phi in block '" + b.id + "'", b.id});
      } else {
        in_phi_prefix = false;
      }
      if (!in.array.empty() && !p.array(in.array))
        out.push_back({"unknown-array", "reference to undeclared array '@" + in.array + "'",
                       b.id});
    }
  }
  for (const auto& b : f.blocks)
    for (const auto& t : successors(b.term()))
      if (!ids.count(t))
        out.push_back({"unknown-target", "branch to unknown block '" + t + "'", b.id});
}

void check_ssa(const Function& f, std::vector<Diagnostic>& out) {
  std::set<ValueId> defs(f.params.begin(), f.params.end());
  for (const auto& b : f.blocks)
    for (const auto& in : b.insts)
      if (in.has_result() && !defs.insert(in.result).second)
        out.push_back({"duplicate-def", "duplicate SSA definition '%" + in.result + "'", b.id});

  analysis::Cfg cfg = analysis::Cfg::build(f);
  analysis::DomTree dom = analysis::dominator_tree(cfg);

  // Def block per value; params count as defined at entry.
  std::map<ValueId, std::pair<int, int>> defat;  // value -> (block idx, inst idx)
  for (const auto& prm : f.params) defat[prm] = {0, -1};
  for (const auto& b : f.blocks)
    for (size_t i = 0; i < b.insts.size(); i++)
      if (b.insts[i].has_result())
        defat[b.insts[i].result] = {cfg.id(b.id), static_cast<int>(i)};

  // Reachability from entry (unreachable blocks are rejected).
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
  for (int b = 0; b < cfg.size(); b++)
    if (!reach[b])
      out.push_back({"unreachable-block", "block '" + cfg.order[b] + "' is unreachable",
                     cfg.order[b]});

  auto check_use = [&](const Operand& op, int useBlock, int useIdx, const BlockId& where) {
    if (!op.is_value()) return;
    auto it = defat.find(op.name);
    if (it == defat.end()) {
      out.push_back({"undefined-value", "use of undefined value '%" + op.name + "'", where});
      return;
    }
    auto [db, di] = it->second;
    bool ok;
    if (db == useBlock)
      ok = di < useIdx;
    else
      ok = dom.dominates(db, useBlock);
    if (!ok && reach[useBlock])
      out.push_back({"use-before-def",
                     "use of '%" + op.name + "' not dominated by its definition", where});
  };

  if (!cfg.pred[0].empty())
    out.push_back({"entry-has-preds", "entry block has predecessors", f.entry()});

  for (const auto& b : f.blocks) {
    int bi = cfg.id(b.id);
    // Phi incoming labels must match the predecessor set exactly.
    std::multiset<BlockId> preds;
    for (int p : cfg.pred[bi]) preds.insert(cfg.order[p]);
    for (size_t i = 0; i < b.insts.size(); i++) {
      const auto& in = b.insts[i];
      if (in.is_phi()) {
        std::multiset<BlockId> incs;
        for (const auto& inc : in.incomings) incs.insert(inc.pred);
        if (incs != preds)
          out.push_back({"phi-pred-mismatch",
                         "phi '%" + in.result + "' incomings do not match predecessors", b.id});
        for (const auto& inc : in.incomings) {
          if (!inc.value.is_value()) continue;
          auto it = defat.find(inc.value.name);
          if (it == defat.end()) {
            out.push_back({"undefined-value",
                           "use of undefined value '%" + inc.value.name + "'", b.id});
            continue;
          }
          auto predIt = cfg.index.find(inc.pred);
          if (predIt == cfg.index.end()) continue;
          if (!dom.dominates(it->second.first, predIt->second) && reach[predIt->second])
            out.push_back({"use-before-def",
                           "phi incoming '%" + inc.value.name +
                               "' does not dominate predecessor '" + inc.pred + "'",
                           b.id});
        }
      } else {
        for (const auto& a : in.args) check_use(a, bi, static_cast<int>(i), b.id);
      }
    }
  }
}

void check_shape(const Program& p, const Function& f, std::vector<Diagnostic>& out) {
  analysis::Cfg cfg = analysis::Cfg::build(f);
  analysis::DomTree dom = analysis::dominator_tree(cfg);
  analysis::EdgeClassification ec = analysis::classify_edges(cfg, dom);
  if (!ec.reducible) {
    out.push_back({"irreducible", ec.problem, f.entry()});
    return;
  }
  std::map<int, int> backedge_count;
  for (auto [l, h] : ec.back) backedge_count[h]++;
  for (auto [h, n] : backedge_count)
    if (n > 1)
      out.push_back({"non-canonical-loop",
                     "loop header '" + cfg.order[h] + "' has " + std::to_string(n) +
                         " backedges",
                     cfg.order[h]});

  // A function never mixes direct stores and produce_val for one array.
  std::map<std::string, int> stores, produces;
  for (const auto& b : f.blocks)
    for (const auto& in : b.insts) {
      if (in.op == Opcode::Store) stores[in.array]++;
      if (in.op == Opcode::ProduceVal) produces[in.array]++;
    }
  for (const auto& [a, n] : stores)
    if (produces.count(a))
      out.push_back({"store-produce-mix",
                     "array '@" + a + "' has both store and produce_val in one function",
                     f.entry()});
  (void)p;
}

}  // namespace

std::vector<Diagnostic> validate_function(const Program& p, const Function& f) {
  std::vector<Diagnostic> out;
  if (f.blocks.empty()) {
    out.push_back({"empty-function", "function '" + f.name + "' has no blocks", ""});
    return out;
  }
  check_structure(p, f, out);
  if (!out.empty()) return out;  // later checks assume structural sanity
  check_ssa(f, out);
  check_shape(p, f, out);
  return out;
}

std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> out;
  std::set<std::string> names;
  for (const auto& a : p.arrays) {
    if (!names.insert(a.name).second)
      out.push_back({"duplicate-array", "duplicate array '@" + a.name + "'", ""});
    if (a.size <= 0)
      out.push_back({"bad-array-size", "array '@" + a.name + "' has non-positive size", ""});
  }
  std::set<std::string> fnames;
  for (const auto& f : p.functions)
    if (!fnames.insert(f.name).second)
      out.push_back({"duplicate-function", "duplicate function '@" + f.name + "'", ""});
  for (const auto& f : p.functions) {
    auto d = validate_function(p, f);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace daecc::ir
