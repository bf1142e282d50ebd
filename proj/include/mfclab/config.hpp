#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mfclab/model.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// Flat "key = value" sections. Lines starting with # or ; are comments.
/// Values are looked up as "section.key".
class SolverConfig {
 public:
  static SolverConfig parse_file(const std::string& path);
  static SolverConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  const std::string& text() const { return text_; }

  // typed sections with defaults
  TimeGrid grid() const;
  NoiseConfig noise() const;
  PicardConfig picard() const;
  double box() const { return get_double("box.half_width", 10.0); }
  ModelSpec model() const;
  LqParams lq_params() const;

 private:
  std::map<std::string, std::string> kv_;
  std::string text_;
};

/// FNV-1a of the canonical config text and the effective seed; embedded in
/// every report.
std::uint64_t config_hash(const SolverConfig& cfg, std::uint64_t seed);

}  // namespace mfclab
