#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "daecc/support.hpp"

namespace daecc::ir {

using ValueId = std::string;  // SSA value name, without the leading '%'
using BlockId = std::string;  // block label

enum class Opcode {
  Const,
  Add,
  Sub,
  Mul,
  Icmp,
  Select,
  Phi,
  Load,
  Store,
  Opaque,
  SendLdAddr,
  SendStAddr,
  ConsumeVal,
  ProduceVal,
  Br,
  CondBr,
  Switch,
  Ret,
};

enum class IcmpPred { Lt, Gt, Le, Ge, Eq, Ne };

struct Operand {
  enum class Kind { Value, Imm, Undef };
  Kind kind = Kind::Imm;
  ValueId name;   // Kind::Value
  Word imm = 0;   // Kind::Imm

  static Operand value(ValueId v) {
    Operand o;
    o.kind = Kind::Value;
    o.name = std::move(v);
    return o;
  }
  static Operand immediate(Word w) {
    Operand o;
    o.kind = Kind::Imm;
    o.imm = w;
    return o;
  }
  static Operand undef() {
    Operand o;
    o.kind = Kind::Undef;
    return o;
  }
  bool is_value() const { return kind == Kind::Value; }
  bool operator==(const Operand&) const = default;
};

struct PhiIncoming {
  Operand value;
  BlockId pred;
  bool operator==(const PhiIncoming&) const = default;
};

struct Instruction {
  Opcode op = Opcode::Ret;
  ValueId result;                    // empty when the op produces no value
  IcmpPred pred = IcmpPred::Lt;      // Icmp only
  std::string callee;                // Opaque only
  std::string array;                 // memory / channel ops
  std::vector<Operand> args;         // generic operand list (see below)
  std::vector<PhiIncoming> incomings;  // Phi only
  std::vector<BlockId> targets;      // Br/CondBr/Switch
  int site = -1;                     // request-site id for memory/channel ops

  // Operand layout by opcode:
  //   Const: [] (imm stored in args[0])      Add/Sub/Mul/Icmp: [a, b]
  //   Select: [c, a, b]                      Load/SendLdAddr/SendStAddr: [idx]
  //   Store: [idx, val]                      Opaque: args...
  //   ProduceVal: [val, poison]              CondBr: [c]    Switch: [v]
  //   ConsumeVal / Br / Ret: []

  bool is_terminator() const {
    return op == Opcode::Br || op == Opcode::CondBr || op == Opcode::Switch ||
           op == Opcode::Ret;
  }
  bool is_phi() const { return op == Opcode::Phi; }
  bool is_mem() const { return op == Opcode::Load || op == Opcode::Store; }
  bool is_send() const { return op == Opcode::SendLdAddr || op == Opcode::SendStAddr; }
  bool is_channel() const {
    return is_send() || op == Opcode::ConsumeVal || op == Opcode::ProduceVal;
  }
  // Memory request in either form (source memory op or its AGU send form).
  bool is_request() const { return is_mem() || is_send(); }
  bool has_result() const { return !result.empty(); }

  bool operator==(const Instruction&) const = default;
};

struct BasicBlock {
  BlockId id;
  std::vector<Instruction> insts;

  const Instruction& term() const { return insts.back(); }
  Instruction& term() { return insts.back(); }
  bool operator==(const BasicBlock&) const = default;
};

struct Function {
  std::string name;
  std::vector<ValueId> params;
  std::vector<BasicBlock> blocks;  // blocks.front() is the entry

  const BlockId& entry() const { return blocks.front().id; }
  const BasicBlock* block(const BlockId& id) const {
    for (const auto& b : blocks)
      if (b.id == id) return &b;
    return nullptr;
  }
  BasicBlock* block(const BlockId& id) {
    for (auto& b : blocks)
      if (b.id == id) return &b;
    return nullptr;
  }
  bool operator==(const Function&) const = default;
};

struct ArrayDecl {
  std::string name;
  int64_t size = 0;
  bool operator==(const ArrayDecl&) const = default;
};

struct Program {
  std::vector<ArrayDecl> arrays;
  std::vector<Function> functions;

  const ArrayDecl* array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
  const Function* function(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
  bool operator==(const Program&) const = default;
};

struct Diagnostic {
  std::string code;     // stable machine-readable tag, e.g. "irreducible"
  std::string message;  // human-readable detail
  BlockId block;        // offending block when known
};

class ParseError : public std::runtime_error {
public:
  ParseError(int line, int col, const std::string& msg)
      : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

Program parse_program(const std::string& text);
std::string print_program(const Program& p);
std::string print_function(const Function& f);

std::vector<Diagnostic> validate(const Program& p);
std::vector<Diagnostic> validate_function(const Program& p, const Function& f);

// Successor labels of a terminator, in target order.
std::vector<BlockId> successors(const Instruction& term);

struct Edge {
  BlockId src;
  BlockId dst;
  enum class Kind { Forward, Back } kind = Kind::Forward;
};

// All CFG edges with forward/back classification (back = target dominates
// source). Requires a valid, reducible function.
std::vector<Edge> cfg_edges(const Function& f);

struct DotAnnotations {
  // Extra lines appended to a block's label, e.g. "spec: b,e".
  std::map<BlockId, std::vector<std::string>> block_notes;
};

std::string to_dot(const Function& f, const DotAnnotations* ann = nullptr);

// Summary used in DOT labels, reports, and request display names.
std::string to_string(const Instruction& inst);
std::string to_string(IcmpPred p);

}  // namespace daecc::ir
