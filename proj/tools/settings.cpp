#include <algorithm>
#include <fstream>
#include <set>

#include "cli.hpp"
#include "dualran/errors.hpp"

namespace dualran::cli {

namespace {

std::set<std::string> keys_of(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::set<std::string> out;
  for (const auto& [k, v] : kv) out.insert(k);
  return out;
}

const std::set<std::string>& model_keys() {
  static const auto keys = keys_of(ModelConfig{}.to_key_values());
  return keys;
}

const std::set<std::string>& train_keys() {
  static const auto keys = keys_of(TrainConfig{}.to_key_values());
  return keys;
}

Profile make_profile(std::string name, std::string lr, std::string batch, std::string nl, std::string nh,
                     std::string ng, std::string dropout, std::string select) {
  Profile p;
  p.name = std::move(name);
  p.model = {{"local_layers", nl}, {"heads", nh}, {"global_layers", ng}, {"dropout", dropout}, {"rnn", "lstm"}};
  p.train = {{"learning_rate", lr}, {"batch_size", batch}, {"max_epochs", "100"},
             {"l2_factor", "3e-4"}, {"selection_metric", select}};
  return p;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<Profile> find_profile(const std::string& name) {
  if (name == "iemocap") return make_profile(name, "4e-5", "32", "4", "4", "5", "0.1", "weighted_f1");
  if (name == "meld") return make_profile(name, "2e-5", "64", "5", "4", "8", "0.2", "weighted_f1");
  if (name == "emorynlp") return make_profile(name, "1e-5", "128", "5", "4", "5", "0.2", "weighted_f1");
  if (name == "dailydialog")
    return make_profile(name, "2e-5", "128", "5", "4", "6", "0.2", "micro_f1_excl_neutral");
  return std::nullopt;
}

std::vector<std::string> profile_names() { return {"iemocap", "meld", "emorynlp", "dailydialog"}; }

void RunSettings::set(const std::string& key, const std::string& value) {
  static const std::set<std::string> data_keys{"corpus", "train_corpus", "val_corpus",
                                               "test_corpus", "manifest", "sentiment"};
  static const std::set<std::string> informational{"profile", "config_hash", "command", "run_dir"};
  if (key == "synthetic") {
    synthetic = value;
  } else if (data_keys.count(key)) {
    data[key] = value;
  } else if (informational.count(key)) {
    if (key == "profile") profile = value;
  } else if (model_keys().count(key)) {
    model[key] = value;
  } else if (train_keys().count(key)) {
    TrainConfig probe;
    probe.set(key, value);  // reject malformed values early
    train[key] = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ModelConfig RunSettings::model_config() const { return ModelConfig::from_key_values(model); }

TrainConfig RunSettings::train_config() const {
  TrainConfig c;
  for (const auto& [k, v] : train) c.set(k, v);
  return c;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace dualran::cli
