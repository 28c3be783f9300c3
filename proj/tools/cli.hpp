#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualran/model.hpp"
#include "dualran/training.hpp"

namespace dualran::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericFailure = 3;

/// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Named hyperparameter presets: iemocap, meld, emorynlp, dailydialog.
struct Profile {
  std::string name;
  std::map<std::string, std::string> model;  // model config keys
  std::map<std::string, std::string> train;  // train config keys
};

std::optional<Profile> find_profile(const std::string& name);
std::vector<std::string> profile_names();

/// Layered configuration: defaults < profile < config file < flags. Model
/// keys stay unresolved until the data fixes feature_dim and num_classes.
struct RunSettings {
  std::map<std::string, std::string> model;
  std::map<std::string, std::string> train;
  /// corpus, train_corpus, val_corpus, test_corpus, manifest, sentiment.
  std::map<std::string, std::string> data;
  std::string synthetic;  // inline synthetic spec, empty when unused
  std::string profile;

  /// Routes one key to its layer; unknown keys raise ConfigError. Keys a run
  /// manifest records for information only (config_hash, command, ...) are
  /// accepted and ignored.
  void set(const std::string& key, const std::string& value);
  ModelConfig model_config() const;
  TrainConfig train_config() const;
};

/// Reads a flat "key = value" file; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

struct GradCheckRow {
  std::string block;
  double deviation = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // tensor[index] of the worst coordinate
};

inline constexpr double kGradCheckTolerance = 1e-4;

/// Block names in suite order.
std::vector<std::string> gradcheck_blocks();

/// 64-bit central-difference check of every block at d=8, T=3. An empty
/// filter runs everything; an unknown name raises ConfigError.
std::vector<GradCheckRow> gradcheck_suite(const std::string& block_filter = "", bool corrupt = false);

}  // namespace dualran::cli
