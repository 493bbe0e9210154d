#include "lsanet/config.hpp"

#include <fstream>
#include <sstream>

#include "lsanet/rng.hpp"

namespace lsanet {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' has non-integer entry '" +
                        tok + "'");
    }
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      value + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" +
                    value + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  backbone.validate();
  if (epochs > 100000) throw ConfigError("config: epochs implausibly large");
  if (head_stages.empty()) throw ConfigError("config: heads must be non-empty");
  bool has_final = false;
  for (auto s : head_stages) {
    if (s < 1 || s > 4) {
      throw ConfigError("config: head stage " + std::to_string(s) +
                        " out of range 1..4");
    }
    if (s == 4) has_final = true;
  }
  if (!has_final) {
    throw ConfigError("config: head subset must contain the final classifier 4");
  }
  if (batch.batch_size < 1) throw ConfigError("config: batch.size must be >= 1");
  if (source == DataSource::kMedmnist && data_path.empty()) {
    throw ConfigError("config: data.source medmnist requires data.path");
  }
  if (optimizer.lr <= 0) throw ConfigError("config: optimizer.lr must be > 0");
  if (alpha < 0) throw ConfigError("config: loss.alpha must be >= 0");
  if (mu < 0) throw ConfigError("config: loss.mu must be >= 0");
  if (reduction == 0) throw ConfigError("config: lsa.reduction must be >= 1");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (cfg.raw.count(key)) {
      throw ConfigError("config: duplicate key '" + key + "'");
    }
    cfg.raw[key] = value;

    if (key == "mode") {
      try {
        cfg.mode = parse_mode(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    } else if (key == "seed") {
      cfg.seed = parse_size(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_size(key, value);
    } else if (key == "output.dir") {
      cfg.out_dir = value;
    } else if (key == "backbone.channels") {
      auto v = parse_size_list(key, value);
      if (v.size() != 4) {
        throw ConfigError("config: backbone.channels needs 4 entries");
      }
      std::copy(v.begin(), v.end(), cfg.backbone.channels.begin());
    } else if (key == "backbone.shortcut") {
      cfg.backbone.shortcut = parse_bool(key, value);
    } else if (key == "heads") {
      cfg.head_stages = parse_size_list(key, value);
    } else if (key == "embed.channels") {
      cfg.embed.channels = parse_size(key, value);
    } else if (key == "embed.kernels") {
      auto v = parse_size_list(key, value);
      if (v.size() != 4) throw ConfigError("config: embed.kernels needs 4 entries");
      std::copy(v.begin(), v.end(), cfg.embed.kernels.begin());
    } else if (key == "lsa.reduction") {
      cfg.reduction = parse_size(key, value);
    } else if (key == "loss.alpha") {
      cfg.alpha = parse_double(key, value);
    } else if (key == "loss.mu") {
      cfg.mu = parse_double(key, value);
    } else if (key == "optimizer.lr") {
      cfg.optimizer.lr = parse_double(key, value);
    } else if (key == "optimizer.beta1") {
      cfg.optimizer.beta1 = parse_double(key, value);
    } else if (key == "optimizer.beta2") {
      cfg.optimizer.beta2 = parse_double(key, value);
    } else if (key == "optimizer.eps") {
      cfg.optimizer.eps = parse_double(key, value);
    } else if (key == "optimizer.weight_decay") {
      cfg.optimizer.weight_decay = parse_double(key, value);
    } else if (key == "batch.size") {
      cfg.batch.batch_size = parse_size(key, value);
    } else if (key == "batch.drop_last") {
      cfg.batch.drop_last = parse_bool(key, value);
    } else if (key == "data.source") {
      if (value == "synthetic") {
        cfg.source = DataSource::kSynthetic;
      } else if (value == "medmnist") {
        cfg.source = DataSource::kMedmnist;
      } else {
        throw ConfigError("config: data.source must be synthetic or medmnist");
      }
    } else if (key == "data.path") {
      cfg.data_path = value;
    } else if (key == "data.num_classes") {
      cfg.synthetic.num_classes = parse_size(key, value);
    } else if (key == "data.n_per_class") {
      cfg.synthetic.n_per_class = parse_size(key, value);
    } else if (key == "data.height") {
      cfg.synthetic.height = parse_size(key, value);
      cfg.backbone.input_h = cfg.synthetic.height;
    } else if (key == "data.width") {
      cfg.synthetic.width = parse_size(key, value);
      cfg.backbone.input_w = cfg.synthetic.width;
    } else if (key == "data.noise_sigma") {
      cfg.synthetic.noise_sigma = parse_double(key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  cfg.synthetic.seed = cfg.seed;
  cfg.batch.seed = mix_seed(cfg.seed, 100);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace lsanet
