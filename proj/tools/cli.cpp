#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dualran/checkpoint.hpp"
#include "dualran/data.hpp"
#include "dualran/errors.hpp"
#include "dualran/metrics.hpp"
#include "dualran/synthetic.hpp"

namespace fs = std::filesystem;

namespace dualran::cli {

namespace {

std::string format(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DUALRAN_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

// A fresh directory under root; an existing run of the same name is never
// touched.
fs::path fresh_dir(const fs::path& root, const std::string& base) {
  fs::path dir = root / base;
  for (int n = 2; fs::exists(dir); ++n) dir = root / (base + "-" + std::to_string(n));
  fs::create_directories(dir);
  return dir;
}

std::string command_line(const std::vector<std::string>& args) {
  std::string out = "dualran";
  for (const auto& a : args) {
    out += ' ';
    if (a.find_first_of(" \t\"'") == std::string::npos && !a.empty()) out += a;
    else out += '"' + a + '"';
  }
  return out;
}

void apply_profile(RunSettings& s, const std::string& name) {
  const auto p = find_profile(name);
  if (!p) throw ConfigError("unknown profile '" + name + "'");
  s.profile = name;
  for (const auto& [k, v] : p->model) s.model[k] = v;
  for (const auto& [k, v] : p->train) s.train[k] = v;
}

void apply_config_file(RunSettings& s, const std::string& path) {
  for (const auto& [k, v] : read_config_file(path)) {
    try {
      s.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
}

LabelManifest resolve_manifest(const std::string& spec) {
  const auto names = builtin_manifest_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return builtin_manifest(spec);
  if (spec.rfind("synthetic-", 0) == 0) {
    try {
      return synthetic_manifest(static_cast<std::size_t>(std::stoul(spec.substr(10))));
    } catch (const std::logic_error&) {
      throw ConfigError("bad manifest '" + spec + "'");
    }
  }
  if (!fs::exists(spec)) throw ConfigError("manifest '" + spec + "' is neither a builtin name nor a file");
  return load_manifest(spec);
}

struct LoadedData {
  DialogCorpus train, val, test;
  std::map<std::string, SyntheticCeiling> ceilings;
  std::string label;
};

LabelManifest manifest_for(const RunSettings& s) {
  if (auto it = s.data.find("manifest"); it != s.data.end()) return resolve_manifest(it->second);
  if (!s.profile.empty()) return builtin_manifest(s.profile);
  throw ConfigError("a corpus needs --manifest (or a dataset --profile)");
}

DialogCorpus split_of(const DialogCorpus& all, const std::string& split) {
  if (split == "all") return all;
  auto c = all.subset(split);
  if (c.dialogs.empty() && split == "val") c = all.subset("dev");
  return c;
}

LoadedData load_data(const RunSettings& s, bool sentiment) {
  LoadedData d;
  auto has = [&](const char* k) { return s.data.count(k) && !s.data.at(k).empty(); };
  const int sources = !s.synthetic.empty() + has("corpus") + has("train_corpus");
  if (sources == 0) throw ConfigError("no data: give --synthetic, --corpus or --train");
  if (sources > 1) throw ConfigError("give exactly one of --synthetic, --corpus, --train");
  if (!s.synthetic.empty()) {
    const auto spec = parse_synthetic_spec(s.synthetic);
    auto gen = generate_synthetic(spec);
    d.train = gen.corpus.subset("train");
    d.val = gen.corpus.subset("val");
    d.test = gen.corpus.subset("test");
    d.ceilings = gen.ceilings;
    d.label = "synthetic";
  } else {
    const auto manifest = manifest_for(s);
    if (has("corpus")) {
      const auto all = load_corpus(s.data.at("corpus"), manifest);
      d.train = split_of(all, "train");
      d.val = split_of(all, "val");
      d.test = split_of(all, "test");
    } else {
      d.train = load_corpus(s.data.at("train_corpus"), manifest);
      if (has("val_corpus")) d.val = load_corpus(s.data.at("val_corpus"), manifest);
      if (has("test_corpus")) d.test = load_corpus(s.data.at("test_corpus"), manifest);
    }
    d.label = s.profile.empty() ? manifest.name : s.profile;
  }
  if (sentiment && has("sentiment")) {
    const auto& ds = s.data.at("sentiment");
    d.train = to_sentiment(d.train, ds);
    if (!d.val.dialogs.empty()) d.val = to_sentiment(d.val, ds);
    if (!d.test.dialogs.empty()) d.test = to_sentiment(d.test, ds);
    d.label += "-sentiment";
  }
  if (d.train.dialogs.empty()) throw ConfigError("the training split is empty");
  if (d.label.empty()) d.label = "run";
  return d;
}

// Pins the data-dependent model keys, refusing explicit values that disagree.
ModelConfig resolve_model(RunSettings& s, const DialogCorpus& train) {
  auto pin = [&](const char* key, std::size_t value) {
    if (auto it = s.model.find(key); it != s.model.end() && it->second != std::to_string(value))
      throw ConfigError(std::string(key) + " = " + it->second + " conflicts with the corpus (" +
                        std::to_string(value) + ")");
    s.model[key] = std::to_string(value);
  };
  pin("feature_dim", train.feature_dim);
  pin("num_classes", train.manifest.size());
  auto mc = s.model_config();
  mc.validate();
  return mc;
}

std::string manifest_text(const RunSettings& s, const ModelConfig& mc, const TrainConfig& tc) {
  std::string out = "# dualran run manifest; reusable as --config\n";
  if (!s.profile.empty()) out += "profile = " + s.profile + "\n";
  for (const auto& [k, v] : s.data) out += k + " = " + v + "\n";
  if (!s.synthetic.empty()) out += "synthetic = " + s.synthetic + "\n";
  for (const auto& [k, v] : mc.to_key_values()) out += k + " = " + v + "\n";
  for (const auto& [k, v] : tc.to_key_values()) out += k + " = " + v + "\n";
  out += "config_hash = " + hash_hex(mc.hash()) + "\n";
  return out;
}

void print_report(std::ostream& out, const std::string& title, const MetricReport& r, double loss) {
  out << format("%s: loss %.6f  accuracy %.4f  weighted_f1 %.4f  macro_f1 %.4f  micro_f1 %.4f  "
                "micro_f1_excl_neutral %.4f  (%llu utterances)\n",
                title.c_str(), loss, r.accuracy, r.weighted_f1, r.macro_f1, r.micro_f1, r.micro_f1_excl_neutral,
                static_cast<unsigned long long>(r.total));
}

// ---------------------------------------------------------------- options

struct TrainFlags {
  std::string profile, config;
  std::map<std::string, std::string> values;  // config key -> flag value
  std::vector<std::pair<CLI::Option*, std::string>> bound;
  std::vector<std::string> ablate, sets;
  std::string out, name;
  bool dry_run = false, quiet = false;
};

void add_data_options(CLI::App* cmd, TrainFlags& f) {
  auto bind = [&](const char* flag, const char* key, const char* help) {
    f.bound.emplace_back(cmd->add_option(flag, f.values[key], help), key);
  };
  bind("--corpus", "corpus", "Corpus file with split tags (train / val / test)");
  bind("--train", "train_corpus", "Training corpus file");
  bind("--val", "val_corpus", "Validation corpus file");
  bind("--test", "test_corpus", "Test corpus file");
  bind("--synthetic", "synthetic", "Generate a synthetic corpus, e.g. \"k=2,noise=1.0\"");
  bind("--manifest", "manifest", "Label manifest: builtin name, synthetic-K, or JSON file");
  bind("--sentiment", "sentiment", "Merge labels to negative/neutral/positive for DATASET");
}

void add_train_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--profile", f.profile, "Dataset preset: iemocap, meld, emorynlp, dailydialog");
  cmd->add_option("--config", f.config, "Flat key = value config file");
  add_data_options(cmd, f);
  auto bind = [&](const char* flag, const char* key, const char* help) {
    f.bound.emplace_back(cmd->add_option(flag, f.values[key], help), key);
  };
  bind("--variant", "variant", "dual, singlev1 or singlev2");
  bind("--rnn", "rnn", "lstm or gru");
  bind("--layers-local", "local_layers", "N_L");
  bind("--layers-global", "global_layers", "N_G");
  bind("--heads", "heads", "N_H");
  bind("--dropout", "dropout", "Dropout rate");
  bind("--activation", "activation", "relu or gelu");
  bind("--lr", "learning_rate", "Learning rate");
  bind("--batch-size", "batch_size", "Dialogs per batch");
  bind("--epochs", "max_epochs", "Training epochs");
  bind("--l2", "l2_factor", "Weight penalty factor");
  bind("--seed", "seed", "Random seed");
  bind("--select", "selection_metric", "Validation metric that picks the best epoch");
  bind("--regularization", "regularization", "decoupled or literal");
  bind("--clip", "clip_norm", "Global gradient-norm clip, 0 disables");
  bind("--precision", "precision", "f32 or f64");
  cmd->add_option("--ablate", f.ablate,
                  "no-local, no-global, no-speaker, no-sc-local, no-sc-global, no-sc-both (repeatable)");
  cmd->add_option("--set", f.sets, "Raw key=value override (repeatable)");
  cmd->add_option("--out", f.out, "Output root (default $DUALRAN_OUTPUT_ROOT or ./runs)");
  cmd->add_option("--name", f.name, "Run directory name");
  cmd->add_flag("--dry-run", f.dry_run, "Print the resolved configuration and stop");
  cmd->add_flag("--quiet", f.quiet, "No per-epoch lines");
}

RunSettings settings_from(const TrainFlags& f) {
  RunSettings s;
  if (!f.profile.empty()) apply_profile(s, f.profile);
  if (!f.config.empty()) apply_config_file(s, f.config);
  for (const auto& [opt, key] : f.bound)
    if (opt->count() > 0) s.set(key, f.values.at(key));
  if (!f.ablate.empty()) {
    Ablations a;
    if (auto it = s.model.find("ablations"); it != s.model.end()) a = parse_ablations(it->second);
    for (const auto& name : f.ablate) a.apply(name);
    s.model["ablations"] = a.to_string();
  }
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    s.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return s;
}

// ---------------------------------------------------------------- train

template <typename T>
struct Trained {
  TrainResult<T> result;
  std::optional<EvalResult<T>> test;
  double seconds = 0.0;
};

template <typename T>
Trained<T> train_run(const LoadedData& d, const ModelConfig& mc, const TrainConfig& tc, const EpochCallback& cb) {
  const auto start = std::chrono::steady_clock::now();
  Trained<T> t{train<T>(d.train, d.val.dialogs.empty() ? nullptr : &d.val, mc, tc, cb), std::nullopt, 0.0};
  if (!d.test.dialogs.empty()) t.test = evaluate(t.result.params, d.test, tc.batch_size);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

template <typename T>
int finish_train(const LoadedData& d, const ModelConfig& mc, const TrainConfig& tc, const fs::path& dir,
                 bool quiet, std::ostream& out) {
  std::ofstream ndjson(dir / "metrics.ndjson");
  auto cb = [&](const EpochRecord& r) {
    ndjson << epoch_record_json(r) << '\n';
    ndjson.flush();
    if (quiet) return;
    out << format("epoch %3zu  train_loss %.6f", r.epoch, r.train_loss);
    if (r.validation) out << format("  val_%s %.4f%s", tc.selection_metric.c_str(), r.selection_value,
                                    r.improved ? "  *" : "");
    out << format("  (%.2fs)\n", r.seconds);
  };
  const auto t = train_run<T>(d, mc, tc, cb);
  save_params(t.result.params, (dir / "checkpoint.bin").string());
  if (t.result.best_epoch) out << "best epoch: " << *t.result.best_epoch << "\n";
  if (t.test) {
    const auto& names = d.test.manifest.classes;
    write_text(dir / "test_report.json", report_json(t.test->report, names) + "\n");
    write_text(dir / "confusion.csv", confusion_csv(t.test->confusion, names));
    print_report(out, "test", t.test->report, t.test->loss);
  }
  for (const auto& [split, c] : d.ceilings)
    out << format("context-free ceiling (%s): %.4f\n", split.c_str(), c.accuracy);
  out << "run directory: " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const TrainFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  RunSettings s = settings_from(f);
  if (!f.profile.empty() && s.synthetic.empty() && !s.data.count("manifest")) s.data["manifest"] = f.profile;
  TrainConfig tc = s.train_config();
  tc.validate();

  if (f.dry_run) {
    // Without data the feature and class counts stay at their defaults.
    ModelConfig mc;
    if (!s.synthetic.empty() || s.data.count("corpus") || s.data.count("train_corpus")) {
      const auto d = load_data(s, true);
      mc = resolve_model(s, d.train);
    } else {
      mc = s.model_config();
      mc.validate();
      out << "# no data given; feature_dim and num_classes are defaults\n";
    }
    out << manifest_text(s, mc, tc);
    return kOk;
  }

  const auto data = load_data(s, true);
  const ModelConfig mc = resolve_model(s, data.train);

  std::string text = manifest_text(s, mc, tc);
  const std::string base = f.name.empty() ? data.label + "-s" + std::to_string(tc.seed) + "-" +
                                                hash_hex(fnv1a(text)).substr(0, 8)
                                          : f.name;
  const fs::path dir = fresh_dir(output_root(f.out), base);
  text += "run_dir = " + dir.string() + "\n";
  text += "command = " + command_line(args) + "\n";
  write_text(dir / "manifest.cfg", text);
  out << format("model %s, %zu parameters, %zu train / %zu val / %zu test dialogs\n", to_string(mc.variant).c_str(),
                param_count(mc), data.train.dialogs.size(), data.val.dialogs.size(), data.test.dialogs.size());
  return tc.precision == "f64" ? finish_train<double>(data, mc, tc, dir, f.quiet, out)
                               : finish_train<float>(data, mc, tc, dir, f.quiet, out);
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string checkpoint, run_dir, corpus, synthetic, manifest, sentiment, split = "test", out, precision;
};

template <typename T>
int eval_with(const ModelParams<T>& params, const DialogCorpus& corpus, const EvalFlags& f, std::ostream& out) {
  const ModelConfig& mc = params.config;
  if (corpus.feature_dim != mc.feature_dim)
    throw DimensionError("corpus feature_dim " + std::to_string(corpus.feature_dim) + " but the checkpoint expects " +
                         std::to_string(mc.feature_dim));
  ConfusionMatrix cm;
  MetricReport report;
  std::vector<std::string> names;
  double loss = 0.0;

  if (!f.sentiment.empty() && mc.num_classes == 3 && corpus.manifest.name != "sentiment") {
    const auto converted = to_sentiment(corpus, f.sentiment);
    const auto r = evaluate(params, converted);
    cm = r.confusion;
    report = r.report;
    loss = r.loss;
    names = converted.manifest.classes;
  } else {
    if (corpus.manifest.size() != mc.num_classes)
      throw LabelError("corpus has " + std::to_string(corpus.manifest.size()) + " classes but the checkpoint " +
                       std::to_string(mc.num_classes));
    const auto r = evaluate(params, corpus);
    loss = r.loss;
    if (f.sentiment.empty()) {
      cm = r.confusion;
      report = r.report;
      names = corpus.manifest.classes;
    } else {
      if (f.sentiment == "meld")
        throw ConfigError("meld emotions have no fixed sentiment; train a 3-class model with --sentiment meld");
      const auto truth = to_sentiment(corpus, f.sentiment);
      names = truth.manifest.classes;
      cm = ConfusionMatrix(3);
      for (std::size_t i = 0; i < corpus.dialogs.size(); ++i) {
        const auto& turns = truth.dialogs[i].turns;
        for (std::size_t t = 0; t < turns.size(); ++t) {
          const auto& pred_name = corpus.manifest.classes.at(static_cast<std::size_t>(r.predictions[i][t]));
          const auto pred = static_cast<std::size_t>(merge_sentiment(pred_name, f.sentiment));
          ++cm.at(static_cast<std::size_t>(turns[t].label), pred);
        }
      }
      report = compute_metrics(cm, truth.manifest.neutral_index);
      loss = 0.0;
    }
  }

  print_report(out, f.split, report, loss);
  for (std::size_t c = 0; c < names.size(); ++c)
    out << format("  %-12s f1 %.4f  support %llu\n", names[c].c_str(), report.per_class_f1[c],
                  static_cast<unsigned long long>(report.support[c]));
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / "report.json", report_json(report, names) + "\n");
    write_text(fs::path(f.out) / "confusion.csv", confusion_csv(cm, names));
  }
  return kOk;
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  if (f.checkpoint.empty() == f.run_dir.empty()) throw ConfigError("give exactly one of --checkpoint or --run");
  RunSettings s;
  std::string ckpt = f.checkpoint;
  std::optional<std::string> manifest_hash;
  if (!f.run_dir.empty()) {
    const fs::path manifest = fs::path(f.run_dir) / "manifest.cfg";
    if (!fs::exists(manifest)) throw FormatError("no manifest.cfg in '" + f.run_dir + "'");
    for (const auto& [k, v] : read_config_file(manifest.string())) {
      if (k == "config_hash") manifest_hash = v;
      s.set(k, v);
    }
    ckpt = (fs::path(f.run_dir) / "checkpoint.bin").string();
  }
  if (!fs::exists(ckpt)) throw FormatError("checkpoint '" + ckpt + "' not found");
  const auto header = read_checkpoint_header(ckpt);
  if (manifest_hash && *manifest_hash != hash_hex(header.config_hash))
    throw FormatError("checkpoint config hash " + hash_hex(header.config_hash) + " does not match run manifest " +
                      *manifest_hash);

  // Flags replace the run's recorded data source.
  if (!f.corpus.empty() || !f.synthetic.empty()) {
    s.data.clear();
    s.synthetic.clear();
  }
  if (!f.corpus.empty()) s.data["corpus"] = f.corpus;
  if (!f.synthetic.empty()) s.synthetic = f.synthetic;
  if (!f.manifest.empty()) s.data["manifest"] = f.manifest;
  s.data.erase("sentiment");

  DialogCorpus corpus;
  if (!s.synthetic.empty()) {
    const auto all = generate_synthetic(parse_synthetic_spec(s.synthetic)).corpus;
    corpus = split_of(all, f.split);
  } else if (s.data.count("corpus")) {
    corpus = split_of(load_corpus(s.data.at("corpus"), manifest_for(s)), f.split);
  } else {
    const std::string key = f.split == "train" ? "train_corpus" : f.split == "val" ? "val_corpus" : "test_corpus";
    if (!s.data.count(key)) throw ConfigError("no data: give --corpus or --synthetic");
    corpus = load_corpus(s.data.at(key), manifest_for(s));
  }
  if (corpus.dialogs.empty()) throw SchemaError("split '" + f.split + "' has no dialogs");

  std::string precision = f.precision;
  if (precision.empty()) precision = s.train.count("precision") ? s.train.at("precision") : "f32";
  if (precision != "f32" && precision != "f64") throw ConfigError("precision must be f32 or f64");
  out << "checkpoint " << ckpt << " (config " << hash_hex(header.config_hash) << ")\n";
  if (precision == "f64") return eval_with(load_params<double>(ckpt, header.config), corpus, f, out);
  return eval_with(load_params<float>(ckpt, header.config), corpus, f, out);
}

// ---------------------------------------------------------------- sweep

std::vector<std::string> parse_range(const std::string& range) {
  std::vector<std::string> out;
  if (const auto dots = range.find(".."); dots != std::string::npos) {
    long lo = 0, hi = 0;
    try {
      lo = std::stol(range.substr(0, dots));
      hi = std::stol(range.substr(dots + 2));
    } catch (const std::logic_error&) {
      throw ConfigError("bad range '" + range + "'");
    }
    for (long v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
  } else {
    std::stringstream ss(range);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty sweep range '" + range + "'");
  return out;
}

struct SweepAxis {
  std::vector<std::string> rows;
  std::function<void(RunSettings&, const std::string&)> apply;
};

void add_ablation(RunSettings& s, const std::string& name) {
  Ablations a;
  if (auto it = s.model.find("ablations"); it != s.model.end()) a = parse_ablations(it->second);
  a.apply(name);
  s.model["ablations"] = a.to_string();
}

SweepAxis sweep_axis(const std::string& axis, const std::string& range) {
  SweepAxis a;
  auto fixed = [&](std::vector<std::string> all) {
    if (range.empty()) return all;
    auto picked = parse_range(range);
    for (const auto& r : picked)
      if (std::find(all.begin(), all.end(), r) == all.end())
        throw ConfigError("axis " + axis + " has no setting '" + r + "'");
    return picked;
  };
  if (axis == "layers-local" || axis == "layers-global") {
    if (range.empty()) throw ConfigError("--axis " + axis + " needs --range, e.g. 1..6");
    a.rows = parse_range(range);
    const std::string key = axis == "layers-local" ? "local_layers" : "global_layers";
    a.apply = [key](RunSettings& s, const std::string& v) { s.model[key] = v; };
  } else if (axis == "rnn-kind") {
    a.rows = fixed({"lstm", "gru"});
    a.apply = [](RunSettings& s, const std::string& v) { s.model["rnn"] = v; };
  } else if (axis == "skip") {
    a.rows = fixed({"full", "no-sc-local", "no-sc-global", "no-sc-both"});
    a.apply = [](RunSettings& s, const std::string& v) {
      if (v != "full") add_ablation(s, v);
    };
  } else if (axis == "speaker") {
    a.rows = fixed({"with", "no-speaker"});
    a.apply = [](RunSettings& s, const std::string& v) {
      if (v != "with") add_ablation(s, v);
    };
  } else if (axis == "variant") {
    a.rows = fixed({"dual", "singlev1", "singlev2"});
    a.apply = [](RunSettings& s, const std::string& v) { s.model["variant"] = v; };
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  return a;
}

struct SweepRow {
  std::string setting;
  std::size_t params = 0;
  std::size_t best_epoch = 0;
  double val = 0.0;
  MetricReport test;
  double seconds = 0.0;
};

template <typename T>
SweepRow sweep_one(const LoadedData& d, const ModelConfig& mc, const TrainConfig& tc) {
  const auto t = train_run<T>(d, mc, tc, {});
  SweepRow row;
  row.params = param_count(mc);
  row.best_epoch = t.result.best_epoch.value_or(tc.max_epochs);
  if (t.result.best_epoch) row.val = t.result.history.at(*t.result.best_epoch).selection_value;
  if (t.test) row.test = t.test->report;
  row.seconds = t.seconds;
  return row;
}

int cmd_sweep(const TrainFlags& f, const std::string& axis, const std::string& range,
              const std::vector<std::string>& args, std::ostream& out) {
  const SweepAxis a = sweep_axis(axis, range);
  RunSettings base = settings_from(f);
  if (!f.profile.empty() && base.synthetic.empty() && !base.data.count("manifest"))
    base.data["manifest"] = f.profile;
  const TrainConfig tc = base.train_config();
  tc.validate();
  const auto data = load_data(base, true);
  const ModelConfig base_mc = resolve_model(base, data.train);

  // Every setting is validated before anything runs or is written.
  std::vector<ModelConfig> configs;
  for (const auto& row : a.rows) {
    RunSettings s = base;
    a.apply(s, row);
    try {
      configs.push_back(resolve_model(s, data.train));
    } catch (const ConfigError& e) {
      throw ConfigError("sweep setting '" + row + "': " + e.what());
    }
  }

  std::string text = manifest_text(base, base_mc, tc);
  text += "sweep_axis = " + axis + "\nsweep_rows = ";
  for (std::size_t i = 0; i < a.rows.size(); ++i) text += (i ? "," : "") + a.rows[i];
  text += "\n";
  const std::string name = f.name.empty() ? "sweep-" + axis + "-s" + std::to_string(tc.seed) + "-" +
                                                hash_hex(fnv1a(text)).substr(0, 8)
                                          : f.name;
  const fs::path dir = fresh_dir(output_root(f.out), name);
  write_text(dir / "manifest.cfg", "# sweep record; not reusable as --config\n" + text +
                                       "command = " + command_line(args) + "\n");

  std::string csv = "setting,params,best_epoch,val_" + tc.selection_metric +
                    ",test_accuracy,test_weighted_f1,test_macro_f1,test_micro_f1,test_micro_f1_excl_neutral,seconds\n";
  out << format("%-14s %9s %5s %9s %9s %9s %9s %9s %8s\n", axis.c_str(), "params", "best", "val", "test_acc",
                "test_wf1", "macro_f1", "micro_xn", "seconds");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    SweepRow r = tc.precision == "f64" ? sweep_one<double>(data, configs[i], tc)
                                       : sweep_one<float>(data, configs[i], tc);
    r.setting = a.rows[i];
    out << format("%-14s %9zu %5zu %9.4f %9.4f %9.4f %9.4f %9.4f %8.2f\n", r.setting.c_str(), r.params,
                  r.best_epoch, r.val, r.test.accuracy, r.test.weighted_f1, r.test.macro_f1,
                  r.test.micro_f1_excl_neutral, r.seconds);
    out.flush();
    csv += format("%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.setting.c_str(), r.params, r.best_epoch, r.val,
                  r.test.accuracy, r.test.weighted_f1, r.test.macro_f1, r.test.micro_f1,
                  r.test.micro_f1_excl_neutral, r.seconds);
    write_text(dir / "sweep.csv", csv);
  }
  out << "sweep directory: " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- gradcheck / generate

int cmd_gradcheck(const std::string& block, bool corrupt, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto rows = gradcheck_suite(block, corrupt);
  bool ok = true;
  out << format("%-14s %8s %12s  %s\n", "block", "coords", "max_dev", "worst");
  for (const auto& r : rows) {
    const bool pass = r.deviation < kGradCheckTolerance;
    ok = ok && pass;
    out << format("%-14s %8zu %12.3e  %-28s %s\n", r.block.c_str(), r.coordinates, r.deviation, r.worst.c_str(),
                  pass ? "ok" : "FAIL");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << format("%s: %zu block(s), tolerance %.0e, %.2fs\n", ok ? "passed" : "FAILED", rows.size(),
                kGradCheckTolerance, secs);
  return ok ? kOk : kNumericFailure;
}

int cmd_generate(const std::string& spec_text, const std::string& path, std::ostream& out) {
  const auto spec = parse_synthetic_spec(spec_text);
  const auto gen = generate_synthetic(spec);
  write_corpus(gen.corpus, path);
  out << "wrote " << gen.corpus.dialogs.size() << " dialogs (" << gen.corpus.utterance_count() << " turns) to "
      << path << "\n";
  out << "manifest: synthetic-" << spec.num_classes << "\n";
  for (const auto& [split, c] : gen.ceilings)
    out << format("context-free ceiling %-5s %.6f over %zu turns\n", split.c_str(), c.accuracy, c.turns);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stream recurrence-attention network for emotion recognition in conversation", "dualran"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  add_train_options(train_cmd, train_flags);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a corpus split");
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint file");
  eval_cmd->add_option("--run", eval_flags.run_dir, "Run directory (checks its manifest hash)");
  eval_cmd->add_option("--corpus", eval_flags.corpus, "Corpus file");
  eval_cmd->add_option("--synthetic", eval_flags.synthetic, "Synthetic corpus spec");
  eval_cmd->add_option("--manifest", eval_flags.manifest, "Label manifest");
  eval_cmd->add_option("--split", eval_flags.split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--sentiment", eval_flags.sentiment, "Score as negative/neutral/positive for DATASET");
  eval_cmd->add_option("--precision", eval_flags.precision, "f32 or f64 (default: the run's)");
  eval_cmd->add_option("--out", eval_flags.out, "Directory for report.json and confusion.csv");

  TrainFlags sweep_flags;
  std::string axis, range;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one model per setting of an ablation axis");
  sweep_cmd->add_option("--axis", axis, "layers-local, layers-global, rnn-kind, skip, speaker, variant")
      ->required();
  sweep_cmd->add_option("--range", range, "a..b or a comma list");
  add_train_options(sweep_cmd, sweep_flags);

  std::string block;
  bool corrupt = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check of every block");
  grad_cmd->add_option("--block", block, "Only this block");
  grad_cmd->add_flag("--corrupt", corrupt, "Perturb one analytic gradient (negative control)")->group("");

  std::string gen_spec, gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic corpus");
  gen_cmd->add_option("--synthetic", gen_spec, "Spec overrides, e.g. \"k=2,noise=0.5,seed=3\"");
  gen_cmd->add_option("--out", gen_out, "Output corpus file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, args, out);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, axis, range, args, out);
    if (*grad_cmd) return cmd_gradcheck(block, corrupt, out);
    if (*gen_cmd) return cmd_generate(gen_spec, gen_out, out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace dualran::cli
