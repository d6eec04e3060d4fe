#pragma once

#include "daecc/analysis.hpp"
#include "daecc/decouple.hpp"
#include "daecc/ir.hpp"
#include "daecc/poison.hpp"
#include "daecc/speculate.hpp"

namespace daecc::pipe {

enum class Stage { Analyze, Decouple, Speculate, Poison, Merge };

struct PipelineOptions {
  Stage until = Stage::Merge;
  int64_t path_limit = 100000;
  analysis::LodConfig lod;
};

struct PipelineResult {
  analysis::LodReport report;
  dae::DaePair pair;  // slices after the last executed stage
  spec::SpecReqMap map;
  spec::SpecVerdict spec_verdict;
  poison::PoisonPlan plan;
  poison::PlacementRecord record;
  int merges = 0;
  Stage reached = Stage::Analyze;
};

// Runs analyze -> decouple -> speculate -> poison -> merge, stopping at
// `until`. Throws PipelineError for unsupported inputs.
PipelineResult run_pipeline(const ir::Program& prog, const ir::Function& f,
                            const PipelineOptions& opt = {});

}  // namespace daecc::pipe
