#include "eat/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace eat {

namespace {

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

float parse_float(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const float v = std::stof(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error("config: bad float for " + key + ": '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error("config: bad integer for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw Error("config: bad boolean for " + key + ": '" + value + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string eat_config_to_text(const EatConfig& cfg) {
  std::ostringstream out;
  out << "n_classes=" << cfg.n_classes << "\n";
  out << "n_attributes=" << cfg.n_attributes << "\n";
  out << "d_e=" << cfg.d_e << "\n";
  out << "lambda=" << fmt_float(cfg.lambda) << "\n";
  out << "eta=" << fmt_float(cfg.eta) << "\n";
  out << "image_size=" << cfg.image_size << "\n";
  out << "trunk_channels=";
  for (std::size_t i = 0; i < cfg.trunk_channels.size(); ++i) out << (i ? "," : "") << cfg.trunk_channels[i];
  out << "\n";
  out << "head_channels=" << cfg.head_channels << "\n";
  out << "gi_channels=" << cfg.gi_channels << "\n";
  out << "lr=" << fmt_float(cfg.lr) << "\n";
  out << "momentum=" << fmt_float(cfg.momentum) << "\n";
  out << "epochs=" << cfg.epochs << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "mode=" << (cfg.mode == Mode::Baseline ? "baseline" : "eat") << "\n";
  out << "loss_target=" << (cfg.loss_target == LossTarget::Integrated ? "integrated" : "fused") << "\n";
  out << "detach_cp=" << (cfg.detach_cp ? 1 : 0) << "\n";
  return out.str();
}

bool set_config_key(EatConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "n_classes") {
    cfg.n_classes = parse_int(key, value);
  } else if (key == "n_attributes") {
    cfg.n_attributes = parse_int(key, value);
  } else if (key == "d_e") {
    cfg.d_e = parse_int(key, value);
  } else if (key == "lambda") {
    cfg.lambda = parse_float(key, value);
  } else if (key == "eta") {
    cfg.eta = parse_float(key, value);
  } else if (key == "image_size") {
    cfg.image_size = parse_int(key, value);
  } else if (key == "trunk_channels") {
    std::vector<int> channels;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) channels.push_back(parse_int(key, trim(item)));
    if (channels.empty()) throw Error("config: trunk_channels must list at least one channel count");
    cfg.trunk_channels = std::move(channels);
  } else if (key == "head_channels") {
    cfg.head_channels = parse_int(key, value);
  } else if (key == "gi_channels") {
    cfg.gi_channels = parse_int(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_float(key, value);
  } else if (key == "momentum") {
    cfg.momentum = parse_float(key, value);
  } else if (key == "epochs") {
    cfg.epochs = parse_int(key, value);
  } else if (key == "seed") {
    try {
      cfg.seed = std::stoull(value);
    } catch (const std::exception&) {
      throw Error("config: bad seed: '" + value + "'");
    }
  } else if (key == "mode") {
    if (value == "baseline")
      cfg.mode = Mode::Baseline;
    else if (value == "eat")
      cfg.mode = Mode::Eat;
    else
      throw Error("config: mode must be baseline or eat, got '" + value + "'");
  } else if (key == "loss_target") {
    if (value == "fused")
      cfg.loss_target = LossTarget::Fused;
    else if (value == "integrated")
      cfg.loss_target = LossTarget::Integrated;
    else
      throw Error("config: loss_target must be fused or integrated, got '" + value + "'");
  } else if (key == "detach_cp") {
    cfg.detach_cp = parse_bool(key, value);
  } else {
    return false;
  }
  return true;
}

EatConfig eat_config_from_text(const std::string& text) {
  EatConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!set_config_key(cfg, key, value))
      throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig parse_run_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(path.filename().string() + " line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "data") {
      rc.data = value;
    } else if (key == "out_ckpt") {
      rc.out_ckpt = value;
    } else if (key == "log") {
      rc.log = value;
    } else if (!set_config_key(rc.eat, key, value)) {
      throw Error(path.filename().string() + " line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    rc.keys_set.insert(key);
  }
  return rc;
}

}  // namespace eat
