#include "daecc/pipeline.hpp"

#include "daecc/support.hpp"

namespace daecc::pipe {

PipelineResult run_pipeline(const ir::Program& prog, const ir::Function& f,
                            const PipelineOptions& opt) {
  PipelineResult r;
  r.report = analysis::lod_analysis(f, opt.lod);
  r.reached = Stage::Analyze;
  if (opt.until == Stage::Analyze) return r;

  r.pair = dae::decouple(prog, f);
  r.reached = Stage::Decouple;
  if (opt.until == Stage::Decouple) return r;

  r.map = spec::hoist_requests(r.pair, r.report);
  r.spec_verdict = spec::validate_speculation(f, r.pair, r.map, opt.path_limit);
  r.reached = Stage::Speculate;
  if (opt.until == Stage::Speculate) return r;

  r.pair.cu = poison::hoist_load_consumes(r.pair.cu, r.map, r.pair);
  r.plan = poison::plan_poisons(r.pair.cu, r.map, opt.path_limit);
  auto [cu, rec] = poison::apply_poison(r.pair.cu, r.plan, r.map, r.pair);
  r.pair.cu = std::move(cu);
  r.record = std::move(rec);
  r.reached = Stage::Poison;
  if (opt.until == Stage::Poison) return r;

  auto [merged, n] = poison::merge_poison_blocks(r.pair.cu);
  r.pair.cu = std::move(merged);
  r.merges = n;
  r.reached = Stage::Merge;
  return r;
}

}  // namespace daecc::pipe
