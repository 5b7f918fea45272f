#include "crossreid/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "crossreid/error.hpp"

namespace crossreid {

const std::vector<Config::KeySpec>& Config::registry() {
  static const std::vector<KeySpec> keys = {
      {"data.root", "", "dataset root directory (cam_a/, cam_b/, optional single_shot/)"},
      {"data.resolution", "32", "square input resolution after bilinear resize"},
      {"data.trials", "1", "number of repeated train/test split trials"},
      {"data.seed", "7", "master seed; CROSSREID_SEED env and --set override it"},
      {"data.max_identities", "0", "keep only the first N identities (0 = all)"},
      {"synth.k", "8", "synthetic dataset: number of identities"},
      {"synth.frames", "6", "synthetic dataset: frames per camera-B tracklet"},
      {"synth.noise", "0.05", "synthetic dataset: Gaussian pixel noise sigma"},
      {"model.d", "32", "embedding dimension shared by both branches"},
      {"model.conv1", "8", "channels of the first conv layer"},
      {"model.conv2", "16", "channels of the second conv layer"},
      {"model.kernel", "3", "conv kernel size"},
      {"model.pool", "2", "average pooling window after the first conv"},
      {"train.epochs", "200", "training epochs"},
      {"train.lr", "0.001", "SGD learning rate"},
      {"train.precision", "f32", "f32 or f64"},
      {"train.checkpoint_every", "50", "checkpoint cadence in epochs (0 = final only)"},
      {"fmr.enabled", "true", "graft the frozen cross-modal branches"},
      {"fmr.wp_end", "", "first knockdown epoch (default: 40% of epochs)"},
      {"fmr.kd_end", "", "first post-knockdown epoch (default: 80% of epochs)"},
      {"fmr.fixed_seed", "101", "seed of the frozen embedder branches"},
      {"eval.score", "verification", "similarity: 'verification' (q1) or 'distance'"},
  };
  return keys;
}

std::string Config::help_text() {
  std::ostringstream os;
  os << "Recognized config keys (key = value per line, '#' comments):\n";
  for (const auto& k : registry()) {
    os << "  " << k.key;
    if (k.default_value[0] != '\0') os << " (default " << k.default_value << ")";
    os << "\n      " << k.help << "\n";
  }
  return os.str();
}

Config::Config() {
  for (const auto& k : registry()) values_[k.key] = k.default_value;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("malformed config line " + std::to_string(lineno) + " in " + path +
                        ": expected key = value");
    }
    cfg.set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return cfg;
}

void Config::set_pair(const std::string& pair) {
  const auto eq = pair.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("malformed --set option '" + pair + "': expected key=value");
  }
  set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end()) {
    throw ConfigError("unknown config key: " + key);
  }
  values_[key] = value;
}

void Config::apply_environment() {
  if (const char* env = std::getenv("CROSSREID_SEED")) {
    set("data.seed", env);
  }
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

bool Config::is_set(const std::string& key) const { return !get_string(key).empty(); }

std::string Config::require(const std::string& key) const {
  const auto v = get_string(key);
  if (v.empty()) throw ConfigError("missing config key: " + key);
  return v;
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto v = require(key);
  char* end = nullptr;
  const long long parsed = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + " expects an integer, got '" + v + "'");
  }
  return static_cast<std::int64_t>(parsed);
}

double Config::get_double(const std::string& key) const {
  const auto v = require(key);
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + " expects a number, got '" + v + "'");
  }
  return parsed;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = require(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + " expects a boolean, got '" + v + "'");
}

}  // namespace crossreid
