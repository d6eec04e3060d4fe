#pragma once

#include <functional>
#include <string>
#include <vector>

#include "daecc/decouple.hpp"
#include "daecc/ir.hpp"
#include "daecc/pipeline.hpp"
#include "daecc/sim.hpp"
#include "daecc/speculate.hpp"

namespace daecc::verify {

struct Verdict {
  enum class Status { Pass, Fail, Skip };
  Status status = Status::Pass;
  std::string reason;
  std::string reproducer;  // program text + input, present on Fail

  bool pass() const { return status == Status::Pass; }
};

// Static sequential-consistency check: every forward path through the loop
// produces, per array, a tagged store-value sequence positionally matching
// the AGU's request sequence, with a slot poisoned exactly when the original
// path does not execute that store.
Verdict check_lemma1_static(const ir::Function& original, const dae::DaePair& pair,
                            const spec::SpecReqMap& map, int64_t path_limit = 100000);

struct GenParams {
  uint64_t seed = 1;
  int max_depth = 2;       // loop nesting levels
  int block_budget = 24;   // rough block count limit
  double store_density = 0.6;
  double lod_rate = 0.6;   // probability a loop body gets a lod-guarded tail
  int data_arrays = 2;
  int64_t array_size = 64;
};

// Structured (hence reducible) random program; always validates cleanly.
ir::Program gen_program(const GenParams& p);

// Random input for a generated (or corpus) program: index arrays get
// in-bounds values, data arrays small signed words.
sim::MemoryImage gen_input(const ir::Program& prog, const ir::Function& f, uint64_t seed);

struct DiffOptions {
  bool speculate = true;  // false: decouple-only baseline
  sim::SimConfig sim;
  int64_t path_limit = 100000;
  bool run_static_check = true;
  bool shrink = true;
};

// Full pipeline + simulation vs the reference interpreter on one input.
Verdict differential_test(const ir::Program& prog, const ir::Function& f,
                          const sim::MemoryImage& input, const DiffOptions& opt);

struct SweepKernel {
  ir::Program prog;
  std::string fn;
  // Builds an input achieving roughly the target mis-speculation rate.
  std::function<sim::MemoryImage(double rate, uint64_t seed)> make_input;
};

SweepKernel sweep_kernel_hist(int64_t n);
SweepKernel sweep_kernel_thr(int64_t n);
SweepKernel sweep_kernel_mm(int64_t n);

struct SweepRow {
  double target_rate = 0;
  double achieved_rate = 0;
  int64_t cycles = 0;
};

// Simulates the speculated pipeline at each target rate. Throws
// PipelineError{UnreachableRate} if an achieved rate is off by more than the
// tolerance.
std::vector<SweepRow> misspec_sweep(const SweepKernel& k, const std::vector<double>& rates,
                                    const sim::SimConfig& cfg, uint64_t seed,
                                    double tolerance = 0.02);

struct NestingResult {
  ir::Program program;
  int poison_blocks = 0;
  int poison_calls = 0;
  int64_t cycles_spec = 0;
  int64_t cycles_oracle = 0;
};

// Synthetic nested-guard template with n conditional stores under one
// speculation source; counts inserted poison blocks/calls and compares the
// speculated build against a hand-decoupled variant with pure guards.
NestingResult nesting_sweep(int n, int64_t iterations, const sim::SimConfig& cfg);

}  // namespace daecc::verify
