#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "daecc/decouple.hpp"
#include "daecc/ir.hpp"

namespace daecc::sim {

struct SimConfig {
  int fifo_depth = 16;
  int mem_latency = 8;     // cycles from load issue to value availability
  int lq_cap = 4;
  int sq_cap = 32;
  int64_t budget = 10'000'000;
};

struct MemoryImage {
  std::map<std::string, std::vector<Word>> arrays;
  std::map<std::string, Word> args;
};

struct StoreEvent {
  Word addr = 0;
  Word value = 0;
  bool operator==(const StoreEvent&) const = default;
};

enum class RefStatus { Ok, OutOfBounds, Budget };

struct RefTrace {
  RefStatus status = RefStatus::Ok;
  std::string error;
  std::map<std::string, std::vector<Word>> memory;
  std::map<std::string, std::vector<StoreEvent>> committed;
  std::vector<ir::BlockId> blocks;  // executed block sequence
};

RefTrace run_reference(const ir::Program& prog, const ir::Function& f,
                       const MemoryImage& input, int64_t step_budget = 10'000'000);

enum class Termination { Completed, Deadlock, BudgetExceeded, Fault };

struct ReqEvent {
  int site = -1;
  bool is_store = false;
  Word addr = 0;
};

struct ValEvent {
  Word value = 0;
  bool poison = false;
  int site = -1;
};

struct Stalls {
  int64_t agu_fifo_full = 0;
  int64_t agu_fifo_empty = 0;
  int64_t cu_fifo_full = 0;
  int64_t cu_fifo_empty = 0;
  int64_t du_raw_wait = 0;      // load blocked on a valueless older store, same address
  int64_t du_deliver_block = 0; // value ready but consumer FIFO full
};

struct SimResult {
  int64_t cycles = 0;
  Termination termination = Termination::Completed;
  std::string error;
  std::map<std::string, std::vector<Word>> memory;
  std::map<std::string, std::vector<ReqEvent>> la;        // per-array request stream
  std::map<std::string, std::vector<ValEvent>> lv;        // per-array tagged store values
  std::map<std::string, std::vector<StoreEvent>> committed;
  int64_t produced_spec = 0;
  int64_t poisoned_spec = 0;
  double misspec_rate = 0.0;
  Stalls stalls;
  int max_req_occupancy = 0;
  int max_lsq_occupancy = 0;
  bool channel_balanced = true;
  bool undef_committed = false;
  bool slot_site_mismatch = false;  // store value arrived for a different site's slot
};

SimResult run_dae(const dae::DaePair& pair, const MemoryImage& input, const SimConfig& cfg,
                  std::string* occupancy_trace = nullptr);

// Human-readable per-unit stall breakdown.
std::string pipeline_report(const SimResult& r);

}  // namespace daecc::sim
