#pragma once

#include <string>

#include "json.hpp"

#include "daecc/analysis.hpp"
#include "daecc/decouple.hpp"
#include "daecc/poison.hpp"
#include "daecc/sim.hpp"
#include "daecc/speculate.hpp"

namespace daecc::io {

using Json = nlohmann::ordered_json;

Json to_json(const analysis::LodReport& rep);
Json to_json(const spec::SpecReqMap& map);
Json to_json(const poison::PoisonPlan& plan);
Json to_json(const poison::PlacementRecord& rec);
Json to_json(const sim::SimResult& r);
Json channel_table(const dae::DaePair& pair);

// Input format: {"arrays": {"A": [..]}, "args": {"N": 1000}}
sim::MemoryImage parse_memory(const std::string& text);
Json to_json(const sim::MemoryImage& m);

}  // namespace daecc::io
