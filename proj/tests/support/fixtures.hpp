#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace uatm::testing {

inline std::string data_path(const std::string& relative) {
  return std::string(UATM_DATA_DIR) + "/" + relative;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline std::string read_data(const std::string& relative) { return read_file(data_path(relative)); }

/// Common fact base followed by one of the bundled query programs.
inline std::string bundled_program(const std::string& name) {
  return read_data("programs/common.lp") + read_data("programs/" + name + ".lp");
}

}  // namespace uatm::testing
