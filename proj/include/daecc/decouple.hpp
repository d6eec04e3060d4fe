#pragma once

#include <string>
#include <vector>

#include "daecc/ir.hpp"

namespace daecc::dae {

enum class MemKind { Load, Store };

// One original memory instruction and its channel footprint in the slices.
struct RequestSite {
  int id = -1;
  std::string array;
  MemKind kind = MemKind::Load;
  ir::BlockId origBlock;
  int origIndex = 0;
  std::string display;       // human-readable request name
  bool aguConsumes = false;  // the AGU reads this load's value back
  bool speculated = false;   // at least one hoisted copy exists
};

struct DaePair {
  ir::Function agu;
  ir::Function cu;
  std::vector<RequestSite> sites;
  std::vector<ir::ArrayDecl> arrays;
  std::string source;  // original function name

  const RequestSite* site(int id) const {
    for (const auto& s : sites)
      if (s.id == id) return &s;
    return nullptr;
  }
};

// Split `f` into an address-generation slice and a compute slice talking
// through per-array channels. Loads become send_ld_addr (+ consume_val where
// the slice still needs the value), stores become send_st_addr / produce_val.
DaePair decouple(const ir::Program& prog, const ir::Function& f);

// Dead code elimination. Effectful instructions (terminators, memory ops,
// sends, produces) are roots; consume_val is a root only when
// `root_consumes` is set, otherwise unused consumes are deleted.
ir::Function dce(const ir::Function& f, bool root_consumes = true);

// Removes empty blocks, folds branches whose targets collapsed, drops
// unreachable blocks and side-effect-free loops. Canonical loop form is
// preserved (headers and latches are never deleted while their loop lives).
ir::Function simplify_cfg(const ir::Function& f);

// dce + simplify_cfg to a fixpoint.
ir::Function clean_slice(const ir::Function& f, bool root_consumes);

// Recompute per-site flags from the current slices (consume sites move or
// disappear during speculation).
void refresh_site_flags(DaePair& pair);

}  // namespace daecc::dae
