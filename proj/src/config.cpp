#include "apm/config.hpp"

#include <fstream>
#include <sstream>

namespace apm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      value + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" +
                    value + "'");
}

void parse_image_size(const std::string& value, PipelineConfig& cfg) {
  const auto x = value.find('x');
  if (x == std::string::npos) {
    const long s = parse_int("image_size", value);
    cfg.train.image_h = static_cast<int>(s);
    cfg.train.image_w = static_cast<int>(s);
  } else {
    cfg.train.image_h = static_cast<int>(parse_int("image_size", value.substr(0, x)));
    cfg.train.image_w = static_cast<int>(parse_int("image_size", value.substr(x + 1)));
  }
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "in_channels") cfg.model.in_channels = static_cast<int>(parse_int(key, value));
    else if (key == "base_channels") cfg.model.base_channels = static_cast<int>(parse_int(key, value));
    else if (key == "depth") cfg.model.depth = static_cast<int>(parse_int(key, value));
    else if (key == "out_channels") cfg.model.out_channels = static_cast<int>(parse_int(key, value));
    else if (key == "model_seed") cfg.model.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "residual") cfg.model.residual = parse_bool(key, value);
    else if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "lr") cfg.train.lr = parse_double(key, value);
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "image_size") parse_image_size(value, cfg);
    else if (key == "samples_per_task") cfg.train.samples_per_task = static_cast<int>(parse_int(key, value));
    else if (key == "lambda_depth") cfg.loss.lambda_depth = parse_double(key, value);
    else if (key == "smooth_l1_beta") cfg.loss.smooth_l1_beta = parse_double(key, value);
    else if (key == "pseudo_depth_levels") cfg.loss.pseudo_depth_levels = static_cast<int>(parse_int(key, value));
    else if (key == "fraction") cfg.fraction = parse_double(key, value);
    else if (key == "mask_batches") cfg.mask_batches = static_cast<int>(parse_int(key, value));
    else if (key == "intensity") cfg.intensity = parse_double(key, value);
    else
      throw ConfigError("config: unknown key '" + key + "' (line " +
                        std::to_string(lineno) + ")");
  }
  return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

}  // namespace apm
