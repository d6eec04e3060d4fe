#pragma once

#include <string>
#include <vector>

#include "daecc/analysis.hpp"
#include "daecc/decouple.hpp"
#include "daecc/ir.hpp"

namespace daecc::spec {

struct SpecRequest {
  int site = -1;
  ir::BlockId trueBB;   // block of the original request (in source/CU ids)
  std::string array;
  bool is_store = false;
  std::string display;
};

struct SpecReqMap {
  // Ordered: heads in topological order, requests in hoist order.
  std::vector<std::pair<ir::BlockId, std::vector<SpecRequest>>> entries;

  bool empty() const { return entries.empty(); }
  const std::vector<SpecRequest>* at(const ir::BlockId& b) const {
    for (const auto& [h, v] : entries)
      if (h == b) return &v;
    return nullptr;
  }
};

// Algorithmic core: hoist every memory request reachable from each chain
// head to the end of that head, in region topological order. Mutates the
// AGU slice and the per-site speculated flags.
//
// Throws PipelineError on REQUEST-IN-INNER-LOOP, MULTI-SOURCE-CO-OCCURRENCE,
// UNHOISTABLE-OPERANDS, UNHOISTABLE-DATA-DEP.
SpecReqMap hoist_requests(dae::DaePair& pair, const analysis::LodReport& report);

struct SpecVerdict {
  bool ok = true;
  std::string reason;
  std::vector<ir::BlockId> path;  // counterexample when !ok
};

// Path-enumeration check over the original function vs the transformed AGU:
// per path, a request is sent at most once, every originally executed
// request is still sent, and the originally-executed subsequence keeps its
// order.
SpecVerdict validate_speculation(const ir::Function& original, const dae::DaePair& pair,
                                 const SpecReqMap& map, int64_t path_limit = 100000);

}  // namespace daecc::spec
