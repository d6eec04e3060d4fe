#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "daecc/ir.hpp"

inline std::string corpus_path(const std::string& name) {
  return std::string(DAECC_CORPUS_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline daecc::ir::Program load_corpus(const std::string& name) {
  return daecc::ir::parse_program(read_file(corpus_path(name)));
}
