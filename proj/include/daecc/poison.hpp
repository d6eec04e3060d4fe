#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "daecc/decouple.hpp"
#include "daecc/ir.hpp"
#include "daecc/speculate.hpp"

namespace daecc::poison {

using EdgeKey = std::pair<ir::BlockId, ir::BlockId>;

struct PoisonAction {
  EdgeKey edge;
  spec::SpecRequest req;
  ir::BlockId specBB;
};

struct PoisonPlan {
  std::vector<PoisonAction> actions;
  int64_t paths_walked = 0;
};

// Walk every forward path from each speculation block to the end of its
// loop, keeping the pending request list in order; a pending request is
// consumed at its own block and poisoned on the first edge from which its
// block is no longer reachable. Earlier pending requests keep later ones
// from being poisoned out of order.
PoisonPlan plan_poisons(const ir::Function& cu, const spec::SpecReqMap& map,
                        int64_t path_limit = 100000);

struct Placement {
  PoisonAction action;
  int case_id = 0;       // 1 new block (reusable), 2 new block + steering, 3 prepend
  bool steered = false;  // a steering condition guards the poison block
  ir::BlockId block;     // where the poison call landed
  ir::ValueId steer;     // steering value, when steered
};

struct PlacementRecord {
  std::vector<Placement> placements;
  std::vector<ir::BlockId> created_blocks;
  int poison_calls = 0;
};

// Materialize the plan: poison calls become produce_val(array, undef, 1).
// Placement cases follow the reachability/dominance guards; a poison block
// is additionally steered whenever its speculation block does not dominate
// the edge source (a path through the edge may have skipped the
// speculation).
std::pair<ir::Function, PlacementRecord> apply_poison(const ir::Function& cu,
                                                      const PoisonPlan& plan,
                                                      const spec::SpecReqMap& map,
                                                      const dae::DaePair& pair);

// Iteratively merge poison blocks that hold the same poison list and share
// the same successor list. Returns the new function and the merge count.
std::pair<ir::Function, int> merge_poison_blocks(const ir::Function& cu);

// Move the consume of every speculated load to the block where its request
// was hoisted, and rewrite phis over the load value into selects where the
// guarding branch is known.
ir::Function hoist_load_consumes(const ir::Function& cu, const spec::SpecReqMap& map,
                                 const dae::DaePair& pair);

}  // namespace daecc::poison
