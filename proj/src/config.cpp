#include "seglm/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "seglm/common.hpp"

namespace seglm {

namespace {

// every accepted key; "path"-flagged entries are existence-checked
struct KeySpec {
  const char* key;
  bool is_path;
};
const std::map<std::string, std::vector<KeySpec>>& known_keys() {
  static const std::map<std::string, std::vector<KeySpec>> k = {
      {"data",
       {{"train", true},
        {"val", true},
        {"test", true},
        {"vocab", true},
        {"embeddings", true},
        {"checkpoint", true}}},
      {"model",
       {{"layers", false},
        {"d_model", false},
        {"d_ff", false},
        {"heads", false},
        {"max_seg_len", false},
        {"max_len", false}}},
      {"train",
       {{"steps", false},
        {"warmup_steps", false},
        {"peak_lr", false},
        {"encoder_dropout", false},
        {"other_dropout", false},
        {"batch_size", false},
        {"checkpoint_every", false},
        {"seed", false},
        {"mode", false}}},
      {"sweep", {{"learning_rates", false}, {"encoder_dropouts", false}}},
      {"output", {{"dir", false}}},
  };
  return k;
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' has non-integer value '" + v +
                    "'");
  }
}

double to_real(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' has non-numeric value '" + v +
                    "'");
  }
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = strip(item);
    if (item.empty()) continue;
    out.push_back(to_real(key, item));
  }
  if (out.empty())
    throw DataError("config: key '" + key + "' lists no values");
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                         const std::string& base_dir) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (!known_keys().count(section))
        throw DataError("config: unknown section [" + section + "] at line " +
                        std::to_string(lineno));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config: line " + std::to_string(lineno) +
                      " is not key=value");
    if (section.empty())
      throw DataError("config: key before any [section] at line " +
                      std::to_string(lineno));
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    const auto& specs = known_keys().at(section);
    const KeySpec* spec = nullptr;
    for (const auto& s : specs)
      if (key == s.key) spec = &s;
    if (!spec)
      throw DataError("config: unknown key '" + key + "' in section [" +
                      section + "]");
    const std::string full = section + "." + key;
    if (cfg.values.count(full))
      throw DataError("config: duplicate key '" + full + "'");
    std::string stored = val;
    if (spec->is_path) {
      std::filesystem::path p(val);
      if (p.is_relative() && !base_dir.empty())
        p = std::filesystem::path(base_dir) / p;
      if (!std::filesystem::exists(p))
        throw DataError("config: path for '" + full + "' does not exist: " +
                        p.string());
      stored = p.string();
    }
    cfg.values[full] = stored;
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(),
               std::filesystem::path(path).parent_path().string());
}

bool ExperimentConfig::has(const std::string& key) const {
  return values.count(key) != 0;
}

std::string ExperimentConfig::get(const std::string& key,
                                  const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

void ExperimentConfig::apply_model(ModelConfig* cfg) const {
  for (const auto& [full, val] : values) {
    if (full.rfind("model.", 0) != 0) continue;
    const std::string key = full.substr(6);
    if (key == "layers") cfg->layers = to_int(full, val);
    else if (key == "d_model") cfg->d_model = to_int(full, val);
    else if (key == "d_ff") cfg->d_ff = to_int(full, val);
    else if (key == "heads") cfg->heads = to_int(full, val);
    else if (key == "max_seg_len") cfg->max_seg_len = to_int(full, val);
    else if (key == "max_len") cfg->max_len = to_int(full, val);
  }
}

void ExperimentConfig::apply_train(TrainConfig* cfg) const {
  for (const auto& [full, val] : values) {
    if (full.rfind("train.", 0) != 0) continue;
    const std::string key = full.substr(6);
    if (key == "steps") cfg->steps = to_int(full, val);
    else if (key == "warmup_steps") cfg->warmup_steps = to_int(full, val);
    else if (key == "peak_lr") cfg->peak_lr = to_real(full, val);
    else if (key == "encoder_dropout")
      cfg->encoder_dropout = static_cast<float>(to_real(full, val));
    else if (key == "other_dropout")
      cfg->other_dropout = static_cast<float>(to_real(full, val));
    else if (key == "batch_size") cfg->batch_size = to_int(full, val);
    else if (key == "checkpoint_every")
      cfg->checkpoint_every = to_int(full, val);
    else if (key == "seed")
      cfg->seed = static_cast<uint64_t>(std::stoull(val));
    else if (key == "mode") {
      if (val == "pretrain") cfg->mode = TrainConfig::Mode::kPretrain;
      else if (val == "finetune") cfg->mode = TrainConfig::Mode::kFinetune;
      else throw DataError("config: train.mode must be pretrain or finetune");
    }
  }
}

train::SweepGrid ExperimentConfig::sweep_grid() const {
  if (!has("sweep.learning_rates") || !has("sweep.encoder_dropouts"))
    throw DataError("config: [sweep] needs learning_rates and "
                    "encoder_dropouts");
  train::SweepGrid g;
  g.learning_rates =
      to_list("sweep.learning_rates", values.at("sweep.learning_rates"));
  for (double d :
       to_list("sweep.encoder_dropouts", values.at("sweep.encoder_dropouts")))
    g.encoder_dropouts.push_back(static_cast<float>(d));
  return g;
}

std::string ExperimentConfig::summary() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out.empty() ? "(empty config)\n" : out;
}

}  // namespace seglm
