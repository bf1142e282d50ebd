#include "mfclab/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mfclab/types.hpp"

namespace mfclab {

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

std::string artifact_version() { return "mfclab 0.1.0"; }

}  // namespace mfclab
