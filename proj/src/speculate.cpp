#include "daecc/speculate.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "daecc/support.hpp"

namespace daecc::spec {

using analysis::LodReport;
using dae::DaePair;
using dae::RequestSite;
using ir::BasicBlock;
using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;

namespace {

struct Collected {
  int site;
  BlockId fromBB;
  std::vector<BlockId> heads;  // every head whose region reaches the request
};

const RequestSite& site_of(const DaePair& pair, int id) {
  const RequestSite* s = pair.site(id);
  if (!s) throw PipelineError(PipelineErrorKind::InvalidInput, "unknown request site");
  return *s;
}

// Block of the definition of a value, or empty when it is a parameter.
std::map<std::string, BlockId> def_blocks(const Function& f) {
  std::map<std::string, BlockId> out;
  for (const auto& b : f.blocks)
    for (const auto& in : b.insts)
      if (in.has_result()) out[in.result] = b.id;
  return out;
}

}  // namespace

SpecReqMap hoist_requests(DaePair& pair, const LodReport& report) {
  Function& agu = pair.agu;
  SpecReqMap map;
  if (report.chainHeads.empty()) return map;

  // Any hoist-eligible request with an address data dependency on the loads
  // that caused the loss of decoupling cannot be made speculative.
  std::set<std::string> data_dep_requests;
  for (const auto& d : report.dataDeps) data_dep_requests.insert(d.g);

  // Heads in topological order.
  std::vector<BlockId> heads;
  for (const auto& b : analysis::forward_topo(agu))
    if (std::find(report.chainHeads.begin(), report.chainHeads.end(), b) !=
        report.chainHeads.end())
      heads.push_back(b);
  if (heads.size() != report.chainHeads.size())
    throw PipelineError(PipelineErrorKind::InvalidInput,
                        "a chain head block is missing from the AGU slice");

  analysis::Cfg cfg = analysis::Cfg::build(agu);
  analysis::DomTree dom = analysis::dominator_tree(cfg);
  analysis::LoopInfo loops = analysis::loop_info(agu);

  // Collect per head; remember every head that reaches a given site.
  std::map<int, Collected> collected;             // site -> info
  std::map<BlockId, std::vector<int>> per_head;   // head -> site order
  for (const auto& h : heads) {
    int hidx = cfg.id(h);
    const analysis::Loop* home = loops.loop_of(hidx);
    // Reject requests inside nested loops reachable from this head.
    for (const auto& b : agu.blocks) {
      int bi = cfg.id(b.id);
      const analysis::Loop* bl = loops.loop_of(bi);
      if (bl == home || !home || !home->body.count(bi)) continue;
      if (!analysis::reachable_fwd(agu, h, b.id)) continue;
      for (const auto& in : b.insts)
        if (in.is_send())
          throw PipelineError(PipelineErrorKind::RequestInInnerLoop,
                              "request '" + site_of(pair, in.site).display +
                                  "' sits in an inner loop reachable from '" + h + "'");
    }
    for (const auto& fromBB : analysis::region_rpo(agu, h)) {
      if (fromBB == h) continue;
      const BasicBlock* bb = agu.block(fromBB);
      for (const auto& in : bb->insts) {
        if (!in.is_send()) continue;
        auto [it, fresh] = collected.try_emplace(in.site);
        if (fresh) {
          it->second.site = in.site;
          it->second.fromBB = fromBB;
        }
        it->second.heads.push_back(h);
        per_head[h].push_back(in.site);
      }
    }
  }
  if (collected.empty()) return map;

  // Two heads that may co-occur on a path must not share a request.
  for (const auto& [site, info] : collected) {
    for (size_t i = 0; i < info.heads.size(); i++)
      for (size_t j = i + 1; j < info.heads.size(); j++) {
        const BlockId& a = info.heads[i];
        const BlockId& b = info.heads[j];
        if (analysis::reachable_fwd(agu, a, b) || analysis::reachable_fwd(agu, b, a))
          throw PipelineError(PipelineErrorKind::MultiSourceCoOccurrence,
                              "heads '" + a + "' and '" + b + "' can co-occur and both reach '" +
                                  site_of(pair, site).display + "'");
      }
  }

  auto defs = def_blocks(agu);
  auto dominates_block = [&](const BlockId& a, const BlockId& b) {
    return dom.dominates(cfg.id(a), cfg.id(b));
  };

  // Decide materialization mode per source block.
  // cluster: the single head dominates the block; the request's operand
  // chain moves along. copies: operands must already dominate every head.
  std::map<BlockId, bool> cluster_mode;
  for (const auto& [site, info] : collected) {
    const RequestSite& rs = site_of(pair, site);
    if (data_dep_requests.count(rs.display))
      throw PipelineError(PipelineErrorKind::UnhoistableDataDep,
                          "request '" + rs.display + "' has an address data dependency");
    bool single = info.heads.size() == 1;
    bool dominated = single && dominates_block(info.heads[0], info.fromBB);
    if (dominated) {
      cluster_mode[info.fromBB] = true;
      continue;
    }
    cluster_mode.try_emplace(info.fromBB, false);
    // Copy mode: address operands must dominate every head.
    const BasicBlock* bb = agu.block(info.fromBB);
    for (const auto& in : bb->insts) {
      if (!in.is_send() || in.site != site) continue;
      for (const auto& op : in.args) {
        if (!op.is_value()) continue;
        auto it = defs.find(op.name);
        if (it == defs.end()) continue;  // parameter
        for (const auto& h : info.heads)
          if (!dominates_block(it->second, h))
            throw PipelineError(PipelineErrorKind::UnhoistableOperands,
                                "address of '" + rs.display + "' is defined in '" + it->second +
                                    "', which does not dominate head '" + h + "'");
      }
    }
    if (rs.kind == dae::MemKind::Load && rs.aguConsumes && info.heads.size() > 1)
      throw PipelineError(PipelineErrorKind::UnhoistableOperands,
                          "load '" + rs.display +
                              "' is consumed by the AGU and reachable from several heads");
  }

  // Materialize. Heads receive requests in per_head order; sends (plus any
  // cluster instructions) are appended before the terminator.
  std::map<BlockId, std::vector<Instruction>> appended;    // head -> new tail
  std::map<BlockId, std::set<int>> moved_out;              // fromBB -> moved indices
  for (const auto& h : heads) {
    auto ph = per_head.find(h);
    if (ph == per_head.end()) continue;
    std::vector<SpecRequest> reqs;
    std::set<BlockId> handled;
    for (int site : ph->second) {
      const Collected& info = collected.at(site);
      const RequestSite& rs = site_of(pair, site);
      SpecRequest sr;
      sr.site = site;
      sr.trueBB = rs.origBlock;
      sr.array = rs.array;
      sr.is_store = rs.kind == dae::MemKind::Store;
      sr.display = rs.display;
      reqs.push_back(sr);

      BasicBlock* bb = agu.block(info.fromBB);
      if (cluster_mode.at(info.fromBB)) {
        if (handled.count(info.fromBB)) continue;  // whole block moved at once
        handled.insert(info.fromBB);
        // Move the block's sends plus the operand-defining instructions that
        // live in the same block (consumes and pure chains), keeping order.
        std::set<int> take;
        for (size_t i = 0; i < bb->insts.size(); i++)
          if (bb->insts[i].is_send()) take.insert(static_cast<int>(i));
        bool grew = true;
        while (grew) {
          grew = false;
          std::set<std::string> needed;
          for (int i : take)
            for (const auto& op : bb->insts[static_cast<size_t>(i)].args)
              if (op.is_value()) needed.insert(op.name);
          for (size_t i = 0; i < bb->insts.size(); i++) {
            const Instruction& in = bb->insts[i];
            if (take.count(static_cast<int>(i)) || !in.has_result()) continue;
            if (in.is_phi() || in.is_terminator()) continue;
            if (needed.count(in.result)) {
              take.insert(static_cast<int>(i));
              grew = true;
            }
          }
        }
        for (int i : take) appended[h].push_back(bb->insts[static_cast<size_t>(i)]);
        moved_out[info.fromBB].insert(take.begin(), take.end());
      } else {
        for (const auto& in : bb->insts)
          if (in.is_send() && in.site == site) appended[h].push_back(in);
        for (size_t i = 0; i < bb->insts.size(); i++)
          if (bb->insts[i].is_send() && bb->insts[i].site == site)
            moved_out[info.fromBB].insert(static_cast<int>(i));
      }
    }
    map.entries.push_back({h, std::move(reqs)});
  }

  for (auto& [h, tail] : appended) {
    BasicBlock* hb = agu.block(h);
    hb->insts.insert(hb->insts.end() - 1, tail.begin(), tail.end());
  }
  for (auto& [b, idxs] : moved_out) {
    BasicBlock* bb = agu.block(b);
    std::vector<Instruction> kept;
    for (size_t i = 0; i < bb->insts.size(); i++)
      if (!idxs.count(static_cast<int>(i))) kept.push_back(std::move(bb->insts[i]));
    bb->insts = std::move(kept);
  }

  for (const auto& [site, info] : collected)
    for (auto& s : pair.sites)
      if (s.id == site) s.speculated = true;

  pair.agu = dae::clean_slice(agu, /*root_consumes=*/false);
  dae::refresh_site_flags(pair);

  auto diags = ir::validate_function(ir::Program{pair.arrays, {pair.agu}}, pair.agu);
  if (!diags.empty())
    throw PipelineError(PipelineErrorKind::DominanceBroken,
                        "hoisted AGU fails validation: " + diags.front().message);
  return map;
}

SpecVerdict validate_speculation(const Function& original, const DaePair& pair,
                                 const SpecReqMap& map, int64_t path_limit) {
  SpecVerdict verdict;
  // Site lookup per original block, in instruction order.
  std::map<BlockId, std::vector<int>> orig_sites;
  for (const auto& s : pair.sites) orig_sites[s.origBlock].push_back(s.id);
  std::set<int> speculated;
  for (const auto& [h, reqs] : map.entries)
    for (const auto& r : reqs) speculated.insert(r.site);

  analysis::LoopInfo loops = analysis::loop_info(original);
  analysis::Cfg cfg = analysis::Cfg::build(original);

  std::vector<BlockId> starts;
  if (loops.loops.empty())
    starts.push_back(original.entry());
  else
    for (const auto& l : loops.loops) starts.push_back(cfg.order[l.header]);

  for (const auto& start : starts) {
    std::vector<std::vector<BlockId>> paths;
    try {
      paths = analysis::forward_paths(original, start, path_limit);
    } catch (const PipelineError&) {
      verdict.ok = false;
      verdict.reason = "PATH-LIMIT";
      return verdict;
    }
    for (const auto& path : paths) {
      // Branch decisions along the original path, by successor slot.
      std::map<BlockId, int> slot_of;
      for (size_t i = 0; i + 1 < path.size(); i++) {
        const auto& targets = original.block(path[i])->term().targets;
        for (size_t k = 0; k < targets.size(); k++)
          if (targets[k] == path[i + 1]) {
            slot_of[path[i]] = static_cast<int>(k);
            break;
          }
      }
      // Original executed sites, in order.
      std::vector<int> orig_seq;
      for (const auto& b : path) {
        auto it = orig_sites.find(b);
        if (it != orig_sites.end())
          for (int s : it->second) orig_seq.push_back(s);
      }
      // AGU walk driven by the same decisions (slot indices survive block
      // removal; a folded branch has a single target).
      std::vector<int> agu_seq;
      const BasicBlock* bb = pair.agu.block(path.front());
      std::set<BlockId> visited;
      while (bb) {
        if (!visited.insert(bb->id).second) break;  // backedge loop guard
        for (const auto& in : bb->insts)
          if (in.is_send()) agu_seq.push_back(in.site);
        if (bb->id == path.back()) break;  // end of the original path
        const Instruction& t = bb->term();
        if (t.op == Opcode::Ret) break;
        BlockId next;
        if (t.targets.size() == 1) {
          next = t.targets[0];
        } else {
          auto it = slot_of.find(bb->id);
          if (it == slot_of.end()) break;  // left the enumerated region
          next = t.targets[static_cast<size_t>(it->second)];
        }
        bb = pair.agu.block(next);
      }
      // Per-request at-most-once.
      std::map<int, int> count;
      for (int s : agu_seq) count[s]++;
      for (auto [s, n] : count)
        if (n > 1) {
          verdict.ok = false;
          verdict.reason = "request sent twice on one path: site " + std::to_string(s);
          verdict.path = path;
          return verdict;
        }
      // Coverage + order: the subsequence of originally executed sites must
      // equal the original sequence.
      std::set<int> orig_set(orig_seq.begin(), orig_seq.end());
      std::vector<int> filtered;
      for (int s : agu_seq)
        if (orig_set.count(s)) filtered.push_back(s);
      if (filtered != orig_seq) {
        verdict.ok = false;
        verdict.reason = "originally executed request sequence not preserved";
        verdict.path = path;
        return verdict;
      }
      // Extras must be speculated sites.
      for (int s : agu_seq)
        if (!orig_set.count(s) && !speculated.count(s)) {
          verdict.ok = false;
          verdict.reason = "non-speculative request sent on a path that never executes it";
          verdict.path = path;
          return verdict;
        }
    }
  }
  return verdict;
}

}  // namespace daecc::spec
