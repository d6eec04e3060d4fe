#include "daecc/sim.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace daecc::sim {

using ir::BasicBlock;
using ir::BlockId;
using ir::Function;
using ir::Instruction;
using ir::Opcode;
using ir::Operand;

namespace {

Word wrap_add(Word a, Word b) {
  return static_cast<Word>(static_cast<uint64_t>(a) + static_cast<uint64_t>(b));
}
Word wrap_sub(Word a, Word b) {
  return static_cast<Word>(static_cast<uint64_t>(a) - static_cast<uint64_t>(b));
}
Word wrap_mul(Word a, Word b) {
  return static_cast<Word>(static_cast<uint64_t>(a) * static_cast<uint64_t>(b));
}

Word icmp_eval(ir::IcmpPred p, Word a, Word b) {
  switch (p) {
    case ir::IcmpPred::Lt: return a < b;
    case ir::IcmpPred::Gt: return a > b;
    case ir::IcmpPred::Le: return a <= b;
    case ir::IcmpPred::Ge: return a >= b;
    case ir::IcmpPred::Eq: return a == b;
    case ir::IcmpPred::Ne: return a != b;
  }
  return 0;
}

Word opaque_eval(const Instruction& in, const std::vector<Word>& args) {
  uint64_t h = hash_str(in.callee);
  for (Word a : args) h = mix64(h ^ static_cast<uint64_t>(a));
  return static_cast<Word>(h);
}

struct Env {
  std::map<ir::ValueId, Word> vals;
  Word get(const Operand& o) const {
    switch (o.kind) {
      case Operand::Kind::Imm: return o.imm;
      case Operand::Kind::Undef: return kUndefWord;
      case Operand::Kind::Value: {
        auto it = vals.find(o.name);
        return it == vals.end() ? 0 : it->second;
      }
    }
    return 0;
  }
};

// Evaluate a pure instruction; returns false if the opcode is not pure.
bool eval_pure(const Instruction& in, Env& env, Word* out) {
  std::vector<Word> a;
  a.reserve(in.args.size());
  for (const auto& op : in.args) a.push_back(env.get(op));
  switch (in.op) {
    case Opcode::Const: *out = in.args[0].imm; return true;
    case Opcode::Add: *out = wrap_add(a[0], a[1]); return true;
    case Opcode::Sub: *out = wrap_sub(a[0], a[1]); return true;
    case Opcode::Mul: *out = wrap_mul(a[0], a[1]); return true;
    case Opcode::Icmp: *out = icmp_eval(in.pred, a[0], a[1]); return true;
    case Opcode::Select: *out = a[0] != 0 ? a[1] : a[2]; return true;
    case Opcode::Opaque: *out = opaque_eval(in, a); return true;
    default: return false;
  }
}

int branch_target_index(const Instruction& term, Word cond) {
  if (term.op == Opcode::Br) return 0;
  if (term.op == Opcode::CondBr) return cond != 0 ? 0 : 1;
  // switch: clamp the selector into the target range
  Word n = static_cast<Word>(term.targets.size());
  Word idx = cond < 0 ? 0 : (cond >= n ? n - 1 : cond);
  return static_cast<int>(idx);
}

// Evaluate the phi prefix of a block as a parallel copy.
void eval_phis(const BasicBlock& bb, const BlockId& prev, Env& env) {
  std::vector<std::pair<ir::ValueId, Word>> writes;
  for (const auto& in : bb.insts) {
    if (!in.is_phi()) break;
    for (const auto& inc : in.incomings)
      if (inc.pred == prev) writes.push_back({in.result, env.get(inc.value)});
  }
  for (auto& [k, v] : writes) env.vals[k] = v;
}

std::map<std::string, std::vector<Word>> init_memory(const std::vector<ir::ArrayDecl>& arrays,
                                                     const MemoryImage& input) {
  std::map<std::string, std::vector<Word>> mem;
  for (const auto& a : arrays) {
    std::vector<Word> v(static_cast<size_t>(a.size), 0);
    auto it = input.arrays.find(a.name);
    if (it != input.arrays.end())
      for (size_t i = 0; i < v.size() && i < it->second.size(); i++) v[i] = it->second[i];
    mem[a.name] = std::move(v);
  }
  return mem;
}

}  // namespace

RefTrace run_reference(const ir::Program& prog, const Function& f, const MemoryImage& input,
                       int64_t step_budget) {
  RefTrace tr;
  tr.memory = init_memory(prog.arrays, input);
  for (const auto& a : prog.arrays) tr.committed[a.name];

  Env env;
  for (const auto& p : f.params) {
    auto it = input.args.find(p);
    env.vals[p] = it == input.args.end() ? 0 : it->second;
  }

  const BasicBlock* bb = &f.blocks.front();
  BlockId prev;
  size_t ii = 0;
  tr.blocks.push_back(bb->id);
  for (int64_t steps = 0;; steps++) {
    if (steps >= step_budget) {
      tr.status = RefStatus::Budget;
      tr.error = "NON-TERMINATION: step budget exhausted";
      return tr;
    }
    const Instruction& in = bb->insts[ii];
    if (in.is_phi()) {  // phis are folded at block entry
      ii++;
      continue;
    }
    Word v = 0;
    if (eval_pure(in, env, &v)) {
      env.vals[in.result] = v;
      ii++;
      continue;
    }
    switch (in.op) {
      case Opcode::Load: {
        auto& arr = tr.memory.at(in.array);
        Word idx = env.get(in.args[0]);
        if (idx < 0 || idx >= static_cast<Word>(arr.size())) {
          tr.status = RefStatus::OutOfBounds;
          tr.error = "OUT-OF-BOUNDS: load @" + in.array + "[" + std::to_string(idx) + "]";
          return tr;
        }
        env.vals[in.result] = arr[static_cast<size_t>(idx)];
        ii++;
        break;
      }
      case Opcode::Store: {
        auto& arr = tr.memory.at(in.array);
        Word idx = env.get(in.args[0]);
        if (idx < 0 || idx >= static_cast<Word>(arr.size())) {
          tr.status = RefStatus::OutOfBounds;
          tr.error = "OUT-OF-BOUNDS: store @" + in.array + "[" + std::to_string(idx) + "]";
          return tr;
        }
        Word val = env.get(in.args[1]);
        arr[static_cast<size_t>(idx)] = val;
        tr.committed[in.array].push_back({idx, val});
        ii++;
        break;
      }
      case Opcode::Br:
      case Opcode::CondBr:
      case Opcode::Switch: {
        Word c = in.args.empty() ? 0 : env.get(in.args[0]);
        const BlockId& tgt = in.targets[branch_target_index(in, c)];
        prev = bb->id;
        bb = f.block(tgt);
        eval_phis(*bb, prev, env);
        ii = 0;
        while (ii < bb->insts.size() && bb->insts[ii].is_phi()) ii++;
        tr.blocks.push_back(bb->id);
        break;
      }
      case Opcode::Ret:
        return tr;
      default:
        tr.status = RefStatus::OutOfBounds;
        tr.error = "channel op in reference interpreter";
        return tr;
    }
  }
}

namespace {

template <typename T>
struct Fifo {
  std::deque<std::pair<T, int64_t>> q;
  int cap = 16;
  size_t max_seen = 0;

  bool can_push() const { return static_cast<int>(q.size()) < cap; }
  void push(T item, int64_t now) {
    q.push_back({std::move(item), now});
    max_seen = std::max(max_seen, q.size());
  }
  bool can_pop(int64_t now) const { return !q.empty() && q.front().second < now; }
  T pop() {
    T item = std::move(q.front().first);
    q.pop_front();
    return item;
  }
};

struct ReqMsg {
  int site = -1;
  bool is_store = false;
  Word addr = 0;
};

struct StValMsg {
  Word value = 0;
  bool poison = false;
  int site = -1;
};

struct LsqEntry {
  int64_t seq = 0;
  int site = -1;
  bool is_store = false;
  Word addr = 0;
  bool oob = false;
  // stores
  bool has_value = false;
  Word value = 0;
  bool poison = false;
  bool store_done = false;  // committed or dropped
  // loads
  bool issued = false;
  bool delivered = false;
  int64_t ready_cycle = 0;
  Word data = 0;
};

struct Channel {
  Fifo<ReqMsg> req;
  Fifo<StValMsg> st_val;
  Fifo<Word> ld_val_cu;
  Fifo<Word> ld_val_agu;
  std::deque<LsqEntry> lsq;
  int64_t next_seq = 0;
  int loads_in_lsq = 0;
  int stores_in_lsq = 0;
};

enum class StepOutcome { Idle, Stalled, Progress };

struct Unit {
  const Function* fn = nullptr;
  Env env;
  const BasicBlock* bb = nullptr;
  size_t ii = 0;
  bool done = false;
  bool is_agu = false;

  void start(const Function& f, const MemoryImage& input) {
    fn = &f;
    for (const auto& p : f.params) {
      auto it = input.args.find(p);
      env.vals[p] = it == input.args.end() ? 0 : it->second;
    }
    bb = &f.blocks.front();
    ii = 0;
    skip_phis();
  }
  void skip_phis() {
    while (ii < bb->insts.size() && bb->insts[ii].is_phi()) ii++;
  }
};

struct Machine {
  const dae::DaePair& pair;
  SimConfig cfg;
  SimResult res;
  std::map<std::string, Channel> chans;
  std::map<std::string, std::vector<Word>> mem;
  Unit agu, cu;
  int64_t now = 0;
  bool costed_this_cycle = false;

  explicit Machine(const dae::DaePair& p, const MemoryImage& input, const SimConfig& c)
      : pair(p), cfg(c) {
    mem = init_memory(p.arrays, input);
    for (const auto& a : p.arrays) {
      Channel& ch = chans[a.name];
      ch.req.cap = cfg.fifo_depth;
      ch.st_val.cap = cfg.fifo_depth;
      ch.ld_val_cu.cap = cfg.fifo_depth;
      ch.ld_val_agu.cap = cfg.fifo_depth;
      res.la[a.name];
      res.lv[a.name];
      res.committed[a.name];
    }
    agu.is_agu = true;
    agu.start(p.agu, input);
    cu.start(p.cu, input);
  }

  const dae::RequestSite* site(int id) const { return pair.site(id); }

  StepOutcome step_unit(Unit& u) {
    if (u.done) return StepOutcome::Idle;
    for (;;) {
      const Instruction& in = u.bb->insts[u.ii];
      if (in.op == Opcode::Ret) {  // free
        u.done = true;
        return StepOutcome::Progress;
      }
      Word v = 0;
      if (eval_pure(in, u.env, &v)) {
        u.env.vals[in.result] = v;
        u.ii++;
        costed_this_cycle = true;
        return StepOutcome::Progress;
      }
      switch (in.op) {
        case Opcode::SendLdAddr:
        case Opcode::SendStAddr: {
          Channel& ch = chans.at(in.array);
          if (!ch.req.can_push()) {
            res.stalls.agu_fifo_full++;
            costed_this_cycle = true;
            return StepOutcome::Stalled;
          }
          ReqMsg m;
          m.site = in.site;
          m.is_store = in.op == Opcode::SendStAddr;
          m.addr = u.env.get(in.args[0]);
          ch.req.push(m, now);
          u.ii++;
          costed_this_cycle = true;
          return StepOutcome::Progress;
        }
        case Opcode::ConsumeVal: {
          Channel& ch = chans.at(in.array);
          Fifo<Word>& f = u.is_agu ? ch.ld_val_agu : ch.ld_val_cu;
          if (!f.can_pop(now)) {
            (u.is_agu ? res.stalls.agu_fifo_empty : res.stalls.cu_fifo_empty)++;
            costed_this_cycle = true;
            return StepOutcome::Stalled;
          }
          u.env.vals[in.result] = f.pop();
          u.ii++;
          costed_this_cycle = true;
          return StepOutcome::Progress;
        }
        case Opcode::ProduceVal: {
          Channel& ch = chans.at(in.array);
          if (!ch.st_val.can_push()) {
            res.stalls.cu_fifo_full++;
            costed_this_cycle = true;
            return StepOutcome::Stalled;
          }
          StValMsg m;
          m.value = u.env.get(in.args[0]);
          m.poison = u.env.get(in.args[1]) != 0;
          m.site = in.site;
          ch.st_val.push(m, now);
          const dae::RequestSite* s = site(in.site);
          if (s && s->speculated) {
            res.produced_spec++;
            if (m.poison) res.poisoned_spec++;
          }
          u.ii++;
          costed_this_cycle = true;
          return StepOutcome::Progress;
        }
        case Opcode::Br:
        case Opcode::CondBr:
        case Opcode::Switch: {
          Word c = in.args.empty() ? 0 : u.env.get(in.args[0]);
          const BlockId& tgt = in.targets[branch_target_index(in, c)];
          BlockId prev = u.bb->id;
          u.bb = u.fn->block(tgt);
          eval_phis(*u.bb, prev, u.env);
          u.ii = 0;
          u.skip_phis();
          costed_this_cycle = true;
          return StepOutcome::Progress;
        }
        default:
          throw PipelineError(PipelineErrorKind::InvalidInput,
                              "raw memory op inside a decoupled slice");
      }
    }
  }

  // One DU cycle for one array; returns true if anything happened.
  bool step_channel(const std::string& array, Channel& ch) {
    bool acted = false;

    // 1. Accept a request into the LSQ.
    if (ch.req.can_pop(now)) {
      const ReqMsg& front = ch.req.q.front().first;
      bool room = front.is_store ? ch.stores_in_lsq < cfg.sq_cap : ch.loads_in_lsq < cfg.lq_cap;
      if (room) {
        ReqMsg m = ch.req.pop();
        LsqEntry e;
        e.seq = ch.next_seq++;
        e.site = m.site;
        e.is_store = m.is_store;
        e.addr = m.addr;
        e.oob = m.addr < 0 || m.addr >= static_cast<Word>(mem.at(array).size());
        ch.lsq.push_back(e);
        (m.is_store ? ch.stores_in_lsq : ch.loads_in_lsq)++;
        res.la[array].push_back({m.site, m.is_store, m.addr});
        acted = true;
      }
    }

    // 2. Bind one store value to the oldest valueless store.
    if (ch.st_val.can_pop(now)) {
      LsqEntry* slot = nullptr;
      for (auto& e : ch.lsq)
        if (e.is_store && !e.has_value && !e.store_done) {
          slot = &e;
          break;
        }
      if (slot) {
        StValMsg m = ch.st_val.pop();
        slot->has_value = true;
        slot->value = m.value;
        slot->poison = m.poison;
        if (m.site != slot->site) res.slot_site_mismatch = true;
        res.lv[array].push_back({m.value, m.poison, m.site});
        acted = true;
      }
    }

    // 3. Issue one ready load (oldest first; younger loads may pass a
    //    RAW-blocked older one).
    {
      bool counted_raw = false;
      for (auto& e : ch.lsq) {
        if (e.is_store || e.issued) continue;
        // RAW check against older pending stores to the same address.
        const LsqEntry* hit = nullptr;
        bool blocked = false;
        for (auto it = ch.lsq.rbegin(); it != ch.lsq.rend(); ++it) {
          const LsqEntry& s = *it;
          if (!s.is_store || s.seq > e.seq || s.store_done) continue;
          if (s.addr != e.addr) continue;
          if (!s.has_value) {
            blocked = true;  // address matches, value not yet known
            break;
          }
          if (s.poison) continue;  // dropped store is transparent
          hit = &s;
          break;
        }
        if (blocked) {
          if (!counted_raw) {
            res.stalls.du_raw_wait++;
            counted_raw = true;
          }
          continue;  // try a younger load
        }
        e.issued = true;
        if (hit) {  // store-to-load forwarding
          e.data = hit->value;
          e.ready_cycle = now + 1;
        } else {
          e.data = e.oob ? kUndefWord : mem.at(array)[static_cast<size_t>(e.addr)];
          e.ready_cycle = now + cfg.mem_latency;
        }
        acted = true;
        break;  // one issue per cycle per array
      }
    }

    // 4. Deliver one load value, in request order.
    {
      const dae::RequestSite* s = nullptr;
      for (auto& e : ch.lsq) {
        if (e.is_store || e.delivered) continue;
        if (!e.issued || e.ready_cycle > now) break;  // in-order delivery
        s = site(e.site);
        bool want_agu = s && s->aguConsumes;
        if (!ch.ld_val_cu.can_push() || (want_agu && !ch.ld_val_agu.can_push())) {
          res.stalls.du_deliver_block++;
          break;
        }
        ch.ld_val_cu.push(e.data, now);
        if (want_agu) ch.ld_val_agu.push(e.data, now);
        e.delivered = true;
        ch.loads_in_lsq--;
        acted = true;
        break;
      }
    }

    // 5. Commit or drop the oldest finished store (stores retire in order,
    //    and only after every older load has issued).
    {
      LsqEntry* st = nullptr;
      bool older_load_pending = false;
      for (auto& e : ch.lsq) {
        if (!e.is_store) {
          if (!e.issued) older_load_pending = true;
          continue;
        }
        if (e.store_done) continue;
        st = &e;
        break;
      }
      if (st && st->has_value && !older_load_pending) {
        if (st->poison) {
          st->store_done = true;
          ch.stores_in_lsq--;
          acted = true;
        } else if (st->oob) {
          res.termination = Termination::Fault;
          res.error = "OUT-OF-BOUNDS: committed store @" + array + "[" +
                      std::to_string(st->addr) + "]";
        } else {
          mem.at(array)[static_cast<size_t>(st->addr)] = st->value;
          if (st->value == kUndefWord) res.undef_committed = true;
          res.committed[array].push_back({st->addr, st->value});
          st->store_done = true;
          ch.stores_in_lsq--;
          acted = true;
        }
      }
    }

    // Pop fully retired entries off the front.
    while (!ch.lsq.empty()) {
      const LsqEntry& e = ch.lsq.front();
      if ((e.is_store && e.store_done) || (!e.is_store && e.delivered))
        ch.lsq.pop_front();
      else
        break;
    }

    res.max_req_occupancy =
        std::max(res.max_req_occupancy, static_cast<int>(ch.req.max_seen));
    res.max_lsq_occupancy =
        std::max(res.max_lsq_occupancy, ch.loads_in_lsq + ch.stores_in_lsq);
    if (acted) costed_this_cycle = true;
    return acted;
  }

  bool drained() const {
    for (const auto& [name, ch] : chans) {
      if (!ch.req.q.empty() || !ch.st_val.q.empty() || !ch.ld_val_cu.q.empty() ||
          !ch.ld_val_agu.q.empty() || !ch.lsq.empty())
        return false;
    }
    return true;
  }

  bool in_flight() const {
    for (const auto& [name, ch] : chans)
      for (const auto& e : ch.lsq)
        if (!e.is_store && e.issued && !e.delivered) return true;
    return false;
  }

  void run(std::string* trace) {
    int64_t last_cost = -1;
    for (;;) {
      if (agu.done && cu.done && drained()) {
        res.termination = Termination::Completed;
        break;
      }
      if (now >= cfg.budget) {
        res.termination = Termination::BudgetExceeded;
        res.error = "cycle budget exhausted";
        break;
      }
      costed_this_cycle = false;
      bool progress = false;
      progress |= step_unit(agu) == StepOutcome::Progress;
      for (auto& [name, ch] : chans) progress |= step_channel(name, ch);
      progress |= step_unit(cu) == StepOutcome::Progress;
      if (res.termination == Termination::Fault) break;
      if (trace) {
        std::ostringstream line;
        line << now;
        for (auto& [name, ch] : chans)
          line << " " << name << ":req=" << ch.req.q.size() << ",lsq="
               << (ch.loads_in_lsq + ch.stores_in_lsq) << ",stv=" << ch.st_val.q.size();
        line << "\n";
        trace->append(line.str());
      }
      if (costed_this_cycle) last_cost = now;
      if (!progress && !in_flight()) {
        res.termination = Termination::Deadlock;
        res.error = "no unit can make progress";
        break;
      }
      now++;
    }
    res.cycles = res.termination == Termination::Completed ? last_cost + 1 : now;
    res.memory = mem;
    // Channel balance: per array, store requests match produced values and
    // load requests match deliveries.
    for (const auto& [name, la] : res.la) {
      int64_t st_req = 0, ld_req = 0;
      for (const auto& e : la) (e.is_store ? st_req : ld_req)++;
      if (res.termination == Termination::Completed) {
        if (st_req != static_cast<int64_t>(res.lv[name].size())) res.channel_balanced = false;
        if (st_req != static_cast<int64_t>(res.committed[name].size()) +
                          count_poisoned(name))
          res.channel_balanced = false;
      }
    }
    res.misspec_rate =
        res.produced_spec ? static_cast<double>(res.poisoned_spec) / res.produced_spec : 0.0;
  }

  int64_t count_poisoned(const std::string& array) const {
    int64_t n = 0;
    for (const auto& v : res.lv.at(array))
      if (v.poison) n++;
    return n;
  }
};

}  // namespace

SimResult run_dae(const dae::DaePair& pair, const MemoryImage& input, const SimConfig& cfg,
                  std::string* occupancy_trace) {
  Machine m(pair, input, cfg);
  m.run(occupancy_trace);
  return m.res;
}

std::string pipeline_report(const SimResult& r) {
  std::ostringstream os;
  os << "cycles: " << r.cycles << "\n";
  os << "termination: "
     << (r.termination == Termination::Completed    ? "completed"
         : r.termination == Termination::Deadlock   ? "deadlock"
         : r.termination == Termination::Fault      ? "fault"
                                                    : "budget-exceeded")
     << "\n";
  os << "agu: fifo-full=" << r.stalls.agu_fifo_full << " fifo-empty=" << r.stalls.agu_fifo_empty
     << "\n";
  os << "cu:  fifo-full=" << r.stalls.cu_fifo_full << " fifo-empty=" << r.stalls.cu_fifo_empty
     << "\n";
  os << "du:  raw-wait=" << r.stalls.du_raw_wait
     << " deliver-block=" << r.stalls.du_deliver_block << "\n";
  os << "misspec-rate: " << r.misspec_rate << " (" << r.poisoned_spec << "/" << r.produced_spec
     << ")\n";
  os << "occupancy: req-max=" << r.max_req_occupancy << " lsq-max=" << r.max_lsq_occupancy
     << "\n";
  return os.str();
}

}  // namespace daecc::sim
