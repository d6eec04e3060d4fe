#include "daecc/json_io.hpp"

namespace daecc::io {

Json to_json(const analysis::LodReport& rep) {
  Json j;
  switch (rep.config.policy) {
    case analysis::LodConfig::Policy::AllLoads: j["policy"] = "all-loads"; break;
    case analysis::LodConfig::Policy::SameArray: j["policy"] = "same-array"; break;
    case analysis::LodConfig::Policy::BranchFeedingLoads:
      j["policy"] = "all-branch-feeding-loads";
      break;
  }
  j["G"] = Json::array();
  for (const auto& r : rep.requests)
    j["G"].push_back({{"id", r.display},
                      {"block", r.block},
                      {"array", r.array},
                      {"kind", r.is_store ? "store" : "load"}});
  j["A"] = rep.aSet;
  j["data_deps"] = Json::array();
  for (const auto& d : rep.dataDeps)
    j["data_deps"].push_back({{"g", d.g}, {"a", d.a}, {"path", d.path}});
  j["control_deps"] = Json::array();
  for (const auto& d : rep.controlDeps)
    j["control_deps"].push_back({{"g", d.g}, {"srcBB", d.srcBB}, {"block", d.gBlock}});
  j["chains"] = rep.chains;
  j["chain_heads"] = rep.chainHeads;
  j["sources"] = rep.sources;
  if (!rep.crossLoopNotes.empty()) j["cross_loop"] = rep.crossLoopNotes;
  return j;
}

Json to_json(const spec::SpecReqMap& map) {
  Json j = Json::object();
  for (const auto& [head, reqs] : map.entries) {
    Json list = Json::array();
    for (const auto& r : reqs)
      list.push_back({{"id", r.display},
                      {"trueBB", r.trueBB},
                      {"array", r.array},
                      {"kind", r.is_store ? "store" : "load"}});
    j[head] = std::move(list);
  }
  return j;
}

Json to_json(const poison::PoisonPlan& plan) {
  Json j;
  j["paths_walked"] = plan.paths_walked;
  j["actions"] = Json::array();
  for (const auto& a : plan.actions)
    j["actions"].push_back({{"edge", {a.edge.first, a.edge.second}},
                            {"request", a.req.display},
                            {"array", a.req.array},
                            {"specBB", a.specBB},
                            {"trueBB", a.req.trueBB}});
  return j;
}

Json to_json(const poison::PlacementRecord& rec) {
  Json j;
  j["poison_calls"] = rec.poison_calls;
  j["created_blocks"] = rec.created_blocks;
  j["placements"] = Json::array();
  for (const auto& p : rec.placements) {
    Json e = {{"request", p.action.req.display},
              {"edge", {p.action.edge.first, p.action.edge.second}},
              {"specBB", p.action.specBB},
              {"case", p.case_id},
              {"steered", p.steered},
              {"block", p.block}};
    if (!p.steer.empty()) e["steer"] = p.steer;
    j["placements"].push_back(std::move(e));
  }
  return j;
}

Json to_json(const sim::SimResult& r) {
  Json j;
  j["cycles"] = r.cycles;
  switch (r.termination) {
    case sim::Termination::Completed: j["termination"] = "completed"; break;
    case sim::Termination::Deadlock: j["termination"] = "deadlock"; break;
    case sim::Termination::BudgetExceeded: j["termination"] = "budget-exceeded"; break;
    case sim::Termination::Fault: j["termination"] = "fault"; break;
  }
  if (!r.error.empty()) j["error"] = r.error;
  j["misspec_rate"] = r.misspec_rate;
  j["produced"] = r.produced_spec;
  j["poisoned"] = r.poisoned_spec;
  j["stalls"] = {{"agu_fifo_full", r.stalls.agu_fifo_full},
                 {"agu_fifo_empty", r.stalls.agu_fifo_empty},
                 {"cu_fifo_full", r.stalls.cu_fifo_full},
                 {"cu_fifo_empty", r.stalls.cu_fifo_empty},
                 {"du_raw_wait", r.stalls.du_raw_wait},
                 {"du_deliver_block", r.stalls.du_deliver_block}};
  j["occupancy"] = {{"req_max", r.max_req_occupancy}, {"lsq_max", r.max_lsq_occupancy}};
  j["channel_balanced"] = r.channel_balanced;
  Json la = Json::object();
  for (const auto& [a, evs] : r.la) {
    Json list = Json::array();
    for (const auto& e : evs)
      list.push_back({{"site", e.site}, {"kind", e.is_store ? "store" : "load"},
                      {"addr", e.addr}});
    la[a] = std::move(list);
  }
  j["la"] = std::move(la);
  Json lv = Json::object();
  for (const auto& [a, evs] : r.lv) {
    Json list = Json::array();
    for (const auto& e : evs)
      list.push_back({{"value", e.value}, {"poison", e.poison}, {"site", e.site}});
    lv[a] = std::move(list);
  }
  j["lv"] = std::move(lv);
  Json committed = Json::object();
  for (const auto& [a, evs] : r.committed) {
    Json list = Json::array();
    for (const auto& e : evs) list.push_back({e.addr, e.value});
    committed[a] = std::move(list);
  }
  j["committed"] = std::move(committed);
  Json mem = Json::object();
  for (const auto& [a, words] : r.memory) mem[a] = words;
  j["memory"] = std::move(mem);
  return j;
}

Json channel_table(const dae::DaePair& pair) {
  Json j;
  j["function"] = pair.source;
  Json arrays = Json::object();
  for (const auto& a : pair.arrays) {
    Json sites = Json::array();
    for (const auto& s : pair.sites) {
      if (s.array != a.name) continue;
      sites.push_back({{"site", s.id},
                       {"kind", s.kind == dae::MemKind::Load ? "load" : "store"},
                       {"block", s.origBlock},
                       {"display", s.display},
                       {"agu_consumes", s.aguConsumes},
                       {"speculated", s.speculated}});
    }
    arrays[a.name] = std::move(sites);
  }
  j["arrays"] = std::move(arrays);
  return j;
}

sim::MemoryImage parse_memory(const std::string& text) {
  sim::MemoryImage m;
  Json j = Json::parse(text);
  if (j.contains("arrays"))
    for (auto& [name, vals] : j["arrays"].items())
      m.arrays[name] = vals.get<std::vector<Word>>();
  if (j.contains("args"))
    for (auto& [name, v] : j["args"].items()) m.args[name] = v.get<Word>();
  return m;
}

Json to_json(const sim::MemoryImage& m) {
  Json j;
  Json arrays = Json::object();
  for (const auto& [a, v] : m.arrays) arrays[a] = v;
  j["arrays"] = std::move(arrays);
  Json args = Json::object();
  for (const auto& [a, v] : m.args) args[a] = v;
  j["args"] = std::move(args);
  return j;
}

}  // namespace daecc::io
