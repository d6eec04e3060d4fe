#include <cctype>
#include <sstream>

#include "daecc/ir.hpp"

namespace daecc::ir {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

struct Lexer {
  const std::string& text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Lexer(const std::string& t) : text(t) {}

  void advance() {
    if (pos < text.size()) {
      if (text[pos] == '\n') {
        line++;
        col = 1;
      } else {
        col++;
      }
      pos++;
    }
  }

  void skip_ws() {
    while (pos < text.size()) {
      char c = text[pos];
      if (c == '/' && pos + 1 < text.size() && text[pos + 1] == '/') {
        while (pos < text.size() && text[pos] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(line, col, msg); }

  bool try_punct(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      advance();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!try_punct(c)) fail(std::string("expected '") + c + "'");
  }

  std::string word() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && is_word_char(text[pos])) advance();
    if (pos == start) fail("expected identifier");
    return text.substr(start, pos - start);
  }

  bool peek_word(std::string* out) {
    skip_ws();
    size_t p = pos;
    while (p < text.size() && is_word_char(text[p])) p++;
    if (p == pos) return false;
    *out = text.substr(pos, p - pos);
    return true;
  }

  void expect_word(const std::string& w) {
    std::string got = word();
    if (got != w) fail("expected '" + w + "', got '" + got + "'");
  }

  Word integer() {
    skip_ws();
    size_t start = pos;
    if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) advance();
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) advance();
    if (pos == start) fail("expected integer");
    return static_cast<Word>(std::stoll(text.substr(start, pos - start)));
  }
};

struct Parser {
  Lexer lex;

  explicit Parser(const std::string& t) : lex(t) {}

  Operand operand() {
    char c = lex.peek();
    if (c == '%') {
      lex.advance();
      return Operand::value(lex.word());
    }
    std::string w;
    if (lex.peek_word(&w) && w == "undef") {
      lex.word();
      return Operand::undef();
    }
    return Operand::immediate(lex.integer());
  }

  std::string at_name() {
    lex.expect('@');
    return lex.word();
  }

  IcmpPred icmp_pred() {
    std::string w = lex.word();
    if (w == "lt") return IcmpPred::Lt;
    if (w == "gt") return IcmpPred::Gt;
    if (w == "le") return IcmpPred::Le;
    if (w == "ge") return IcmpPred::Ge;
    if (w == "eq") return IcmpPred::Eq;
    if (w == "ne") return IcmpPred::Ne;
    lex.fail("unknown icmp predicate '" + w + "'");
  }

  // Instruction body after "%res =".
  Instruction valued_instr(ValueId res) {
    Instruction in;
    in.result = std::move(res);
    std::string op = lex.word();
    if (op == "const") {
      in.op = Opcode::Const;
      in.args.push_back(Operand::immediate(lex.integer()));
    } else if (op == "add" || op == "sub" || op == "mul") {
      in.op = op == "add" ? Opcode::Add : op == "sub" ? Opcode::Sub : Opcode::Mul;
      in.args.push_back(operand());
      lex.expect(',');
      in.args.push_back(operand());
    } else if (op == "icmp") {
      in.op = Opcode::Icmp;
      in.pred = icmp_pred();
      in.args.push_back(operand());
      lex.expect(',');
      in.args.push_back(operand());
    } else if (op == "select") {
      in.op = Opcode::Select;
      for (int i = 0; i < 3; i++) {
        if (i) lex.expect(',');
        in.args.push_back(operand());
      }
    } else if (op == "phi") {
      in.op = Opcode::Phi;
      do {
        lex.expect('[');
        PhiIncoming inc;
        inc.value = operand();
        lex.expect(',');
        inc.pred = lex.word();
        lex.expect(']');
        in.incomings.push_back(std::move(inc));
      } while (lex.try_punct(','));
    } else if (op == "load") {
      in.op = Opcode::Load;
      in.array = at_name();
      lex.expect('[');
      in.args.push_back(operand());
      lex.expect(']');
    } else if (op == "opaque") {
      in.op = Opcode::Opaque;
      in.callee = lex.word();
      lex.expect('(');
      if (!lex.try_punct(')')) {
        do {
          in.args.push_back(operand());
        } while (lex.try_punct(','));
        lex.expect(')');
      }
    } else if (op == "consume_val") {
      in.op = Opcode::ConsumeVal;
      in.array = at_name();
    } else {
      lex.fail("unknown opcode '" + op + "'");
    }
    return in;
  }

  // Instruction with no result.
  Instruction plain_instr(const std::string& op) {
    Instruction in;
    if (op == "store") {
      in.op = Opcode::Store;
      in.array = at_name();
      lex.expect('[');
      in.args.push_back(operand());
      lex.expect(']');
      lex.expect(',');
      in.args.push_back(operand());
    } else if (op == "send_ld_addr" || op == "send_st_addr") {
      in.op = op == "send_ld_addr" ? Opcode::SendLdAddr : Opcode::SendStAddr;
      in.array = at_name();
      lex.expect('[');
      in.args.push_back(operand());
      lex.expect(']');
    } else if (op == "produce_val") {
      in.op = Opcode::ProduceVal;
      in.array = at_name();
      lex.expect(',');
      in.args.push_back(operand());
      lex.expect(',');
      in.args.push_back(operand());
    } else if (op == "br") {
      in.op = Opcode::Br;
      in.targets.push_back(lex.word());
    } else if (op == "condbr") {
      in.op = Opcode::CondBr;
      in.args.push_back(operand());
      lex.expect(',');
      in.targets.push_back(lex.word());
      lex.expect(',');
      in.targets.push_back(lex.word());
    } else if (op == "switch") {
      in.op = Opcode::Switch;
      in.args.push_back(operand());
      while (lex.try_punct(',')) in.targets.push_back(lex.word());
      if (in.targets.size() < 2) lex.fail("switch needs at least two targets");
    } else if (op == "ret") {
      in.op = Opcode::Ret;
    } else {
      lex.fail("unknown opcode '" + op + "'");
    }
    return in;
  }

  Function function() {
    Function f;
    f.name = at_name();
    lex.expect('(');
    if (!lex.try_punct(')')) {
      do {
        lex.expect('%');
        f.params.push_back(lex.word());
      } while (lex.try_punct(','));
      lex.expect(')');
    }
    lex.expect('{');
    while (!lex.try_punct('}')) {
      if (lex.eof()) lex.fail("unexpected end of input in function body");
      BasicBlock bb;
      bb.id = lex.word();
      lex.expect(':');
      // Instructions until the next "label:" or '}'.
      for (;;) {
        char c = lex.peek();
        if (c == '}') break;
        if (c == '%') {
          lex.advance();
          ValueId res = lex.word();
          lex.expect('=');
          bb.insts.push_back(valued_instr(std::move(res)));
          continue;
        }
        std::string w;
        if (!lex.peek_word(&w)) lex.fail("expected instruction or label");
        // A label is a word immediately followed by ':'.
        size_t save_pos = lex.pos;
        int save_line = lex.line, save_col = lex.col;
        lex.word();
        bool is_label = lex.try_punct(':');
        lex.pos = save_pos;
        lex.line = save_line;
        lex.col = save_col;
        if (is_label) break;
        lex.word();
        bb.insts.push_back(plain_instr(w));
      }
      if (bb.insts.empty()) lex.fail("empty block '" + bb.id + "'");
      f.blocks.push_back(std::move(bb));
    }
    if (f.blocks.empty()) lex.fail("function '" + f.name + "' has no blocks");
    return f;
  }

  Program program() {
    Program p;
    while (!lex.eof()) {
      std::string w = lex.word();
      if (w == "array") {
        ArrayDecl a;
        a.name = at_name();
        lex.expect('[');
        a.size = lex.integer();
        lex.expect(']');
        p.arrays.push_back(std::move(a));
      } else if (w == "func") {
        p.functions.push_back(function());
      } else {
        lex.fail("expected 'array' or 'func', got '" + w + "'");
      }
    }
    if (p.functions.empty()) lex.fail("program has no functions");
    return p;
  }
};

std::string operand_str(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Value: return "%" + o.name;
    case Operand::Kind::Imm: return std::to_string(o.imm);
    case Operand::Kind::Undef: return "undef";
  }
  return "?";
}

void print_instr(std::ostringstream& os, const Instruction& in) {
  auto args2 = [&] { return operand_str(in.args[0]) + ", " + operand_str(in.args[1]); };
  switch (in.op) {
    case Opcode::Const:
      os << "%" << in.result << " = const " << in.args[0].imm;
      break;
    case Opcode::Add:
      os << "%" << in.result << " = add " << args2();
      break;
    case Opcode::Sub:
      os << "%" << in.result << " = sub " << args2();
      break;
    case Opcode::Mul:
      os << "%" << in.result << " = mul " << args2();
      break;
    case Opcode::Icmp:
      os << "%" << in.result << " = icmp " << to_string(in.pred) << " " << args2();
      break;
    case Opcode::Select:
      os << "%" << in.result << " = select " << operand_str(in.args[0]) << ", "
         << operand_str(in.args[1]) << ", " << operand_str(in.args[2]);
      break;
    case Opcode::Phi: {
      os << "%" << in.result << " = phi ";
      bool first = true;
      for (const auto& inc : in.incomings) {
        if (!first) os << ", ";
        first = false;
        os << "[" << operand_str(inc.value) << ", " << inc.pred << "]";
      }
      break;
    }
    case Opcode::Load:
      os << "%" << in.result << " = load @" << in.array << "[" << operand_str(in.args[0]) << "]";
      break;
    case Opcode::Opaque: {
      os << "%" << in.result << " = opaque " << in.callee << "(";
      bool first = true;
      for (const auto& a : in.args) {
        if (!first) os << ", ";
        first = false;
        os << operand_str(a);
      }
      os << ")";
      break;
    }
    case Opcode::ConsumeVal:
      os << "%" << in.result << " = consume_val @" << in.array;
      break;
    case Opcode::Store:
      os << "store @" << in.array << "[" << operand_str(in.args[0]) << "], "
         << operand_str(in.args[1]);
      break;
    case Opcode::SendLdAddr:
      os << "send_ld_addr @" << in.array << "[" << operand_str(in.args[0]) << "]";
      break;
    case Opcode::SendStAddr:
      os << "send_st_addr @" << in.array << "[" << operand_str(in.args[0]) << "]";
      break;
    case Opcode::ProduceVal:
      os << "produce_val @" << in.array << ", " << operand_str(in.args[0]) << ", "
         << operand_str(in.args[1]);
      break;
    case Opcode::Br:
      os << "br " << in.targets[0];
      break;
    case Opcode::CondBr:
      os << "condbr " << operand_str(in.args[0]) << ", " << in.targets[0] << ", "
         << in.targets[1];
      break;
    case Opcode::Switch: {
      os << "switch " << operand_str(in.args[0]);
      for (const auto& t : in.targets) os << ", " << t;
      break;
    }
    case Opcode::Ret:
      os << "ret";
      break;
  }
}

}  // namespace

std::string to_string(IcmpPred p) {
  switch (p) {
    case IcmpPred::Lt: return "lt";
    case IcmpPred::Gt: return "gt";
    case IcmpPred::Le: return "le";
    case IcmpPred::Ge: return "ge";
    case IcmpPred::Eq: return "eq";
    case IcmpPred::Ne: return "ne";
  }
  return "?";
}

std::string to_string(const Instruction& inst) {
  std::ostringstream os;
  print_instr(os, inst);
  return os.str();
}

Program parse_program(const std::string& text) {
  Parser p(text);
  return p.program();
}

std::string print_function(const Function& f) {
  std::ostringstream os;
  os << "func @" << f.name << "(";
  bool first = true;
  for (const auto& p : f.params) {
    if (!first) os << ", ";
    first = false;
    os << "%" << p;
  }
  os << ") {\n";
  for (const auto& b : f.blocks) {
    os << b.id << ":\n";
    for (const auto& in : b.insts) {
      os << "  ";
      print_instr(os, in);
      os << "\n";
    }
  }
  os << "}\n";
  return os.str();
}

std::string print_program(const Program& p) {
  std::ostringstream os;
  for (const auto& a : p.arrays) os << "array @" << a.name << "[" << a.size << "]\n";
  if (!p.arrays.empty()) os << "\n";
  bool first = true;
  for (const auto& f : p.functions) {
    if (!first) os << "\n";
    first = false;
    os << print_function(f);
  }
  return os.str();
}

std::string to_dot(const Function& f, const DotAnnotations* ann) {
  std::ostringstream os;
  os << "digraph \"" << f.name << "\" {\n";
  os << "  node [shape=box, fontname=\"monospace\"];\n";
  for (const auto& b : f.blocks) {
    os << "  \"" << b.id << "\" [label=\"" << b.id << ":";
    for (const auto& in : b.insts) {
      std::string s = to_string(in);
      // Escape quotes for DOT.
      std::string esc;
      for (char c : s) {
        if (c == '"') esc += "\\\"";
        else esc += c;
      }
      os << "\\l  " << esc;
    }
    if (ann) {
      auto it = ann->block_notes.find(b.id);
      if (it != ann->block_notes.end())
        for (const auto& note : it->second) os << "\\l  " << note;
    }
    os << "\\l\"];\n";
  }
  for (const auto& e : cfg_edges(f)) {
    os << "  \"" << e.src << "\" -> \"" << e.dst << "\"";
    if (e.kind == Edge::Kind::Back) os << " [style=dashed, color=gray40]";
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace daecc::ir
