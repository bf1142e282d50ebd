#include "mfclab/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace mfclab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

SolverConfig SolverConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

SolverConfig SolverConfig::parse_text(const std::string& text) {
  SolverConfig cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InvalidInput("config: malformed section at line " +
                           std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config: expected key = value at line " +
                         std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw InvalidInput("config: empty key at line " + std::to_string(lineno));
    cfg.kv_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

std::string SolverConfig::get_string(const std::string& key,
                                     const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double SolverConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw InvalidInput("config: field " + key + " is not a number: " + it->second);
  }
}

long SolverConfig::get_long(const std::string& key, long fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (...) {
    throw InvalidInput("config: field " + key + " is not an integer");
  }
}

bool SolverConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("config: field " + key + " is not a boolean");
}

std::vector<double> SolverConfig::get_doubles(const std::string& key) const {
  auto it = kv_.find(key);
  std::vector<double> out;
  if (it == kv_.end()) return out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw InvalidInput("config: field " + key + " has a bad entry: " + tok);
    }
  }
  return out;
}

std::vector<int> SolverConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_doubles(key)) out.push_back(static_cast<int>(v));
  return out;
}

TimeGrid SolverConfig::grid() const {
  return TimeGrid(get_double("grid.t0", 0.0), get_double("grid.T", 1.0),
                  static_cast<int>(get_long("grid.steps", 100)));
}

NoiseConfig SolverConfig::noise() const {
  NoiseConfig n;
  n.sigma = get_double("noise.sigma", 1.0);
  n.sigma0 = get_double("noise.sigma0", 0.0);
  n.paths = static_cast<int>(get_long("noise.paths", 10000));
  n.seed = static_cast<std::uint64_t>(get_long("noise.seed", 1));
  n.validate();
  return n;
}

PicardConfig SolverConfig::picard() const {
  PicardConfig p;
  p.tol = get_double("picard.tol", 1e-6);
  p.max_iter = static_cast<int>(get_long("picard.max_iter", 60));
  p.damping = get_double("picard.damping", 0.5);
  p.blowup_factor = get_double("picard.blowup_factor", 1e3);
  p.max_window_splits = static_cast<int>(get_long("picard.max_window_splits", 8));
  p.validate();
  return p;
}

LqParams SolverConfig::lq_params() const {
  LqParams prm;
  prm.q = get_double("model.q", 1.0);
  prm.qbar = get_double("model.qbar", 0.0);
  prm.lambda = get_double("model.lambda", 1.0);
  prm.u = get_double("model.u", 1.0);
  prm.ubar = get_double("model.ubar", 0.0);
  prm.box = box();
  return prm;
}

ModelSpec SolverConfig::model() const {
  const std::string name = get_string("model.name", "lq");
  if (name == "lq") return builtin_lq(lq_params());
  if (name == "lq-broken") return detail::make_lq_unchecked(lq_params());
  if (name == "centralized")
    return builtin_centralized_default(
        get_double("model.cx2", 1.0), get_double("model.cxm", 0.0),
        get_double("model.lambda", 1.0), get_double("model.u", 1.0),
        get_double("model.ubar", 0.0), box());
  throw InvalidInput("config: unknown model.name " + name);
}

std::uint64_t config_hash(const SolverConfig& cfg, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 1099511628211ull;
    }
  };
  mix(cfg.text().data(), cfg.text().size());
  mix(reinterpret_cast<const char*>(&seed), sizeof(seed));
  return h;
}

}  // namespace mfclab
