#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "daecc/ir.hpp"

namespace daecc::analysis {

// Indexed CFG view over a function. Block indices follow function block order.
struct Cfg {
  std::vector<ir::BlockId> order;
  std::map<ir::BlockId, int> index;
  std::vector<std::vector<int>> succ;
  std::vector<std::vector<int>> pred;

  static Cfg build(const ir::Function& f);
  int id(const ir::BlockId& b) const { return index.at(b); }
  int size() const { return static_cast<int>(order.size()); }
};

struct DomTree {
  // idom[b] = immediate dominator index; entry maps to itself.
  std::vector<int> idom;
  int root = 0;

  bool dominates(int a, int b) const {
    while (true) {
      if (a == b) return true;
      if (b == root || idom[b] < 0) return false;
      b = idom[b];
    }
  }
};

DomTree dominator_tree(const Cfg& cfg);

// Post-dominators over the forward-edge graph augmented with a virtual exit
// that all sink blocks (ret blocks and latch-only blocks) feed.
// Index cfg.size() is the virtual exit.
DomTree post_dominator_tree(const Cfg& cfg, const std::vector<std::pair<int, int>>& backedges);

struct EdgeClassification {
  std::vector<std::pair<int, int>> forward;
  std::vector<std::pair<int, int>> back;  // latch -> header
  bool reducible = true;
  std::string problem;  // non-empty if not reducible
};

EdgeClassification classify_edges(const Cfg& cfg, const DomTree& dom);

struct Loop {
  int header = -1;
  int latch = -1;
  std::set<int> body;  // includes header and latch
  int parent = -1;     // index into LoopInfo::loops, -1 for top level
  int depth = 1;
};

struct LoopInfo {
  std::vector<Loop> loops;
  std::vector<int> innermost;  // per block: loop index or -1
  std::vector<ir::Diagnostic> problems;

  const Loop* loop_of(int block) const {
    return innermost[block] < 0 ? nullptr : &loops[innermost[block]];
  }
};

LoopInfo loop_info(const ir::Function& f);

// Topological order of the forward-edge DAG restricted to blocks reachable
// from `src` inside src's innermost loop (whole function when src is not in
// a loop). Inner-loop headers are not entered. Ties broken by block id.
std::vector<ir::BlockId> region_rpo(const ir::Function& f, const ir::BlockId& src);

// Forward-edge reachability (loop backedges ignored). reachable_fwd(x, x) is
// true via the empty path.
bool reachable_fwd(const ir::Function& f, const ir::BlockId& from, const ir::BlockId& to);

// Topological order of the whole function's forward-edge DAG, ties broken by
// block id.
std::vector<ir::BlockId> forward_topo(const ir::Function& f);

// All maximal forward-edge paths starting at `from` (a path ends at a block
// with no forward successors). Throws PipelineError{PathLimit} past `cap`.
std::vector<std::vector<ir::BlockId>> forward_paths(const ir::Function& f,
                                                    const ir::BlockId& from, int64_t cap);

// Control dependence: for each block, the set of (branch block, successor
// slot) pairs it depends on. Computed on the forward-edge graph with a
// virtual exit.
struct CtrlDepMap {
  std::map<ir::BlockId, std::vector<std::pair<ir::BlockId, int>>> deps;
};

CtrlDepMap control_dependence(const ir::Function& f);

struct LodConfig {
  enum class Policy { AllLoads, SameArray, BranchFeedingLoads };
  Policy policy = Policy::SameArray;
};

// A memory request instruction, identified by its position.
struct RequestRef {
  ir::BlockId block;
  int index = 0;         // instruction index within the block
  std::string display;   // stable human name (see request_display)
  std::string array;
  bool is_store = false;
};

struct LodDataDep {
  std::string g;                  // request display name
  std::string a;                  // offending load display name
  std::vector<std::string> path;  // def-use value chain from a to g's address
};

struct LodCtrlDep {
  std::string g;        // request display name
  ir::BlockId srcBB;    // block containing the controlling branch
  ir::BlockId gBlock;   // block containing g
};

struct LodReport {
  LodConfig config;
  std::vector<RequestRef> requests;              // all requests (the G set)
  std::vector<std::string> aSet;                 // loads considered as A
  std::vector<LodDataDep> dataDeps;
  std::vector<LodCtrlDep> controlDeps;
  std::vector<std::vector<ir::BlockId>> chains;  // maximal source chains
  std::vector<ir::BlockId> chainHeads;
  std::vector<ir::BlockId> sources;              // all LoD control dep sources
  std::vector<std::string> crossLoopNotes;       // flagged cross-loop cases

  bool has_lod() const { return !dataDeps.empty() || !controlDeps.empty(); }
};

LodReport lod_analysis(const ir::Function& f, const LodConfig& cfg = {});

// Display name for a request: the result name for loads, the stored value's
// name for stores (falls back to a positional tag for immediates).
std::string request_display(const ir::Instruction& inst, const ir::BlockId& block, int index);

}  // namespace daecc::analysis
