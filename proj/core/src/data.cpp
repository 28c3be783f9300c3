#include "dualran/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "json.hpp"

#include "dualran/errors.hpp"

namespace dualran {

using json = nlohmann::json;

std::size_t LabelManifest::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == label) return i;
  throw LabelError("label '" + label + "' is not in manifest '" + name + "'");
}

namespace {

LabelManifest make_manifest(std::string name, std::vector<std::string> classes) {
  LabelManifest m{std::move(name), std::move(classes), std::nullopt};
  for (std::size_t i = 0; i < m.classes.size(); ++i)
    if (m.classes[i] == "neutral") m.neutral_index = i;
  return m;
}

}  // namespace

LabelManifest builtin_manifest(const std::string& name) {
  if (name == "iemocap") return make_manifest(name, {"happy", "sad", "neutral", "angry", "excited", "frustrated"});
  if (name == "meld")
    return make_manifest(name, {"neutral", "surprise", "fear", "sadness", "joy", "disgust", "anger"});
  if (name == "emorynlp")
    return make_manifest(name, {"sad", "mad", "scared", "powerful", "peaceful", "joyful", "neutral"});
  if (name == "dailydialog")
    return make_manifest(name, {"neutral", "happiness", "surprise", "sadness", "anger", "disgust", "fear"});
  if (name == "sentiment") return make_manifest(name, {"negative", "neutral", "positive"});
  throw ConfigError("unknown label manifest '" + name + "'");
}

std::vector<std::string> builtin_manifest_names() {
  return {"iemocap", "meld", "emorynlp", "dailydialog", "sentiment"};
}

LabelManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open label manifest '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array() || j["classes"].empty())
    throw SchemaError(path + ": manifest needs a non-empty \"classes\" array");
  LabelManifest m;
  m.name = j.value("name", path);
  for (const auto& c : j["classes"]) {
    if (!c.is_string()) throw SchemaError(path + ": class names must be strings");
    const auto s = c.get<std::string>();
    if (std::find(m.classes.begin(), m.classes.end(), s) != m.classes.end())
      throw SchemaError(path + ": duplicate class '" + s + "'");
    m.classes.push_back(s);
  }
  if (j.contains("neutral")) {
    m.neutral_index = m.index_of(j["neutral"].get<std::string>());
  } else if (auto it = std::find(m.classes.begin(), m.classes.end(), "neutral"); it != m.classes.end()) {
    m.neutral_index = static_cast<std::size_t>(it - m.classes.begin());
  }
  return m;
}

std::size_t DialogCorpus::utterance_count() const {
  std::size_t n = 0;
  for (const auto& d : dialogs) n += d.turns.size();
  return n;
}

DialogCorpus DialogCorpus::subset(const std::string& split) const {
  DialogCorpus out{feature_dim, manifest, {}};
  for (const auto& d : dialogs)
    if (d.split == split) out.dialogs.push_back(d);
  return out;
}

std::vector<std::int64_t> normalize_speakers(const std::vector<std::string>& names) {
  std::unordered_map<std::string, std::int64_t> seen;
  std::vector<std::int64_t> ids;
  ids.reserve(names.size());
  for (const auto& n : names) {
    auto [it, inserted] = seen.try_emplace(n, static_cast<std::int64_t>(seen.size()));
    ids.push_back(it->second);
  }
  return ids;
}

std::vector<std::int64_t> normalize_speakers(const std::vector<std::int64_t>& raw) {
  std::unordered_map<std::int64_t, std::int64_t> seen;
  std::vector<std::int64_t> ids;
  ids.reserve(raw.size());
  for (auto r : raw) {
    auto [it, inserted] = seen.try_emplace(r, static_cast<std::int64_t>(seen.size()));
    ids.push_back(it->second);
  }
  return ids;
}

namespace {

std::string speaker_key(const json& s, const std::string& where) {
  if (s.is_string()) return s.get<std::string>();
  if (s.is_number_integer()) return std::to_string(s.get<std::int64_t>());
  throw SchemaError(where + ": speaker must be a string or integer");
}

Dialog parse_dialog(const json& j, const LabelManifest& manifest, std::size_t& dim, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected a JSON object");
  Dialog d;
  d.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : where;
  if (j.contains("split")) d.split = j["split"].get<std::string>();
  if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty())
    throw SchemaError("dialog '" + d.id + "': needs a non-empty \"turns\" array");
  std::vector<std::string> names;
  for (std::size_t t = 0; t < j["turns"].size(); ++t) {
    const json& jt = j["turns"][t];
    const std::string at = "dialog '" + d.id + "' turn " + std::to_string(t);
    if (!jt.is_object() || !jt.contains("features") || !jt["features"].is_array())
      throw SchemaError(at + ": missing \"features\" array");
    Turn turn;
    turn.features.reserve(jt["features"].size());
    for (const auto& v : jt["features"]) {
      if (!v.is_number()) throw SchemaError(at + ": non-numeric feature");
      turn.features.push_back(v.get<double>());
    }
    if (turn.features.empty()) throw SchemaError(at + ": empty feature vector");
    if (dim == 0) dim = turn.features.size();
    if (turn.features.size() != dim) {
      throw SchemaError("dialog '" + d.id + "': feature dim " + std::to_string(turn.features.size()) + " at turn " +
                        std::to_string(t) + ", corpus dim is " + std::to_string(dim));
    }
    if (!jt.contains("speaker")) throw SchemaError(at + ": missing \"speaker\"");
    turn.speaker_name = speaker_key(jt["speaker"], at);
    if (!jt.contains("label") || !jt["label"].is_string()) throw SchemaError(at + ": missing \"label\" string");
    const auto label = jt["label"].get<std::string>();
    try {
      turn.label = static_cast<std::int64_t>(manifest.index_of(label));
    } catch (const LabelError&) {
      throw LabelError(at + ": label '" + label + "' is not in manifest '" + manifest.name + "'");
    }
    if (jt.contains("text") && jt["text"].is_string()) turn.text = jt["text"].get<std::string>();
    if (jt.contains("sentiment") && jt["sentiment"].is_string()) turn.sentiment = jt["sentiment"].get<std::string>();
    names.push_back(turn.speaker_name);
    d.turns.push_back(std::move(turn));
  }
  const auto ids = normalize_speakers(names);
  for (std::size_t t = 0; t < ids.size(); ++t) d.turns[t].speaker = ids[t];
  return d;
}

}  // namespace

DialogCorpus load_corpus(const std::string& path, const LabelManifest& manifest, const std::string& split) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open corpus '" + path + "'");
  DialogCorpus corpus;
  corpus.manifest = manifest;
  std::string line;
  std::size_t line_no = 0, records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++records;
    const std::string where = path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    Dialog d = parse_dialog(j, manifest, corpus.feature_dim, where);
    if (split.empty() || d.split == split) corpus.dialogs.push_back(std::move(d));
  }
  if (records == 0) throw SchemaError("corpus '" + path + "' holds no dialogs");
  return corpus;
}

void write_corpus(const DialogCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SchemaError("cannot write corpus '" + path + "'");
  for (const auto& d : corpus.dialogs) {
    json jd;
    jd["id"] = d.id;
    if (!d.split.empty()) jd["split"] = d.split;
    json turns = json::array();
    for (const auto& t : d.turns) {
      json jt;
      jt["features"] = t.features;
      jt["speaker"] = t.speaker_name.empty() ? std::to_string(t.speaker) : t.speaker_name;
      jt["label"] = corpus.manifest.classes.at(static_cast<std::size_t>(t.label));
      if (!t.text.empty()) jt["text"] = t.text;
      if (!t.sentiment.empty()) jt["sentiment"] = t.sentiment;
      turns.push_back(std::move(jt));
    }
    jd["turns"] = std::move(turns);
    out << jd.dump() << '\n';
  }
  if (!out) throw SchemaError("short write to corpus '" + path + "'");
}

std::optional<SplitStats> reference_split_stats(const std::string& dataset, const std::string& split) {
  static const std::map<std::pair<std::string, std::string>, SplitStats> table = {
      {{"iemocap", "train"}, {108, 5163}},     {{"iemocap", "val"}, {12, 647}},
      {{"iemocap", "test"}, {31, 1623}},       {{"meld", "train"}, {1039, 9989}},
      {{"meld", "val"}, {114, 1109}},          {{"meld", "test"}, {280, 2610}},
      {{"emorynlp", "train"}, {659, 7551}},    {{"emorynlp", "val"}, {89, 954}},
      {{"emorynlp", "test"}, {79, 984}},       {{"dailydialog", "train"}, {11118, 87170}},
      {{"dailydialog", "val"}, {1000, 8069}},  {{"dailydialog", "test"}, {1000, 7740}},
  };
  auto it = table.find({dataset, split});
  if (it == table.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t Batch<T>::valid_count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

template <typename T>
DialogInput<T> Batch<T>::input(std::size_t b, bool trim) const {
  const std::size_t len = trim ? lengths.at(b) : max_len;
  const std::size_t row0 = b * max_len;
  DialogInput<T> in;
  std::vector<T> feats(features.begin() + static_cast<std::ptrdiff_t>(row0 * dim),
                       features.begin() + static_cast<std::ptrdiff_t>((row0 + len) * dim));
  in.features = Tensor<T>::from_data({len, dim}, std::move(feats));
  in.speakers.assign(speakers.begin() + static_cast<std::ptrdiff_t>(row0),
                     speakers.begin() + static_cast<std::ptrdiff_t>(row0 + len));
  in.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(row0),
                 mask.begin() + static_cast<std::ptrdiff_t>(row0 + len));
  return in;
}

template <typename T>
std::vector<std::int64_t> Batch<T>::labels_of(std::size_t b, bool trim) const {
  const std::size_t len = trim ? lengths.at(b) : max_len;
  const auto first = labels.begin() + static_cast<std::ptrdiff_t>(b * max_len);
  return {first, first + static_cast<std::ptrdiff_t>(len)};
}

template <typename T>
Batch<T> make_batch(const DialogCorpus& corpus, const std::vector<std::size_t>& order, std::size_t speaker_cap) {
  if (speaker_cap == 0) throw ConfigError("speaker cap must be positive");
  Batch<T> b;
  b.size = order.size();
  b.dim = corpus.feature_dim;
  for (auto i : order) b.max_len = std::max(b.max_len, corpus.dialogs.at(i).turns.size());
  const std::size_t cells = b.size * b.max_len;
  b.features.assign(cells * b.dim, T{});
  b.speakers.assign(cells, 0);
  b.labels.assign(cells, kPadLabel);
  b.mask.assign(cells, 0);
  const auto cap = static_cast<std::int64_t>(speaker_cap) - 1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Dialog& d = corpus.dialogs[order[k]];
    b.lengths.push_back(d.turns.size());
    b.ids.push_back(d.id);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const std::size_t cell = k * b.max_len + t;
      const Turn& turn = d.turns[t];
      std::transform(turn.features.begin(), turn.features.end(), b.features.begin() + cell * b.dim,
                     [](double v) { return static_cast<T>(v); });
      b.speakers[cell] = std::min(turn.speaker, cap);
      b.labels[cell] = turn.label;
      b.mask[cell] = 1;
    }
  }
  return b;
}

template <typename T>
std::vector<Batch<T>> make_batches_ordered(const DialogCorpus& corpus, std::size_t batch_size,
                                           std::size_t speaker_cap) {
  std::vector<std::size_t> order(corpus.dialogs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<Batch<T>> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(s),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
    out.push_back(make_batch<T>(corpus, chunk, speaker_cap));
  }
  return out;
}

template <typename T>
std::vector<Batch<T>> make_batches(const DialogCorpus& corpus, std::size_t batch_size, Rng& rng,
                                   std::size_t speaker_cap) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  const auto order = rng.permutation(corpus.dialogs.size());
  std::vector<Batch<T>> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(s),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
    out.push_back(make_batch<T>(corpus, chunk, speaker_cap));
  }
  return out;
}

std::string to_string(Sentiment s) {
  switch (s) {
    case Sentiment::Negative: return "negative";
    case Sentiment::Neutral: return "neutral";
    case Sentiment::Positive: return "positive";
  }
  return "neutral";
}

Sentiment merge_sentiment(const std::string& label, const std::string& dataset) {
  using S = Sentiment;
  static const std::map<std::string, std::map<std::string, S>> table = {
      {"iemocap",
       {{"happy", S::Positive}, {"excited", S::Positive}, {"neutral", S::Neutral}, {"sad", S::Negative},
        {"angry", S::Negative}, {"anger", S::Negative}, {"frustrated", S::Negative}}},
      {"meld", {{"negative", S::Negative}, {"neutral", S::Neutral}, {"positive", S::Positive}}},
      {"emorynlp",
       {{"mad", S::Negative}, {"sad", S::Negative}, {"scared", S::Negative}, {"neutral", S::Neutral},
        {"joyful", S::Positive}, {"peaceful", S::Positive}, {"powerful", S::Positive}}},
      {"dailydialog",
       {{"anger", S::Negative}, {"sad", S::Negative}, {"sadness", S::Negative}, {"fear", S::Negative},
        {"disgust", S::Negative}, {"neutral", S::Neutral}, {"happy", S::Positive}, {"happiness", S::Positive},
        {"surprise", S::Positive}}},
  };
  const auto ds = table.find(dataset);
  if (ds == table.end()) throw ConfigError("no sentiment merge scheme for dataset '" + dataset + "'");
  const auto it = ds->second.find(label);
  if (it == ds->second.end()) {
    throw LabelError("label '" + label + "' has no sentiment mapping for " + dataset +
                     (dataset == "meld" ? " (meld turns need a native sentiment tag)" : ""));
  }
  return it->second;
}

DialogCorpus to_sentiment(const DialogCorpus& corpus, const std::string& dataset) {
  DialogCorpus out{corpus.feature_dim, builtin_manifest("sentiment"), corpus.dialogs};
  for (auto& d : out.dialogs) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      Turn& turn = d.turns[t];
      const std::string& source =
          turn.sentiment.empty() ? corpus.manifest.classes.at(static_cast<std::size_t>(turn.label)) : turn.sentiment;
      try {
        turn.label = static_cast<std::int64_t>(merge_sentiment(source, dataset));
      } catch (const LabelError& e) {
        throw LabelError("dialog '" + d.id + "' turn " + std::to_string(t) + ": " + e.what());
      }
    }
  }
  return out;
}

#define DUALRAN_INSTANTIATE_DATA(T)                                                                          \
  template struct Batch<T>;                                                                                  \
  template Batch<T> make_batch<T>(const DialogCorpus&, const std::vector<std::size_t>&, std::size_t);       \
  template std::vector<Batch<T>> make_batches<T>(const DialogCorpus&, std::size_t, Rng&, std::size_t);      \
  template std::vector<Batch<T>> make_batches_ordered<T>(const DialogCorpus&, std::size_t, std::size_t);

DUALRAN_INSTANTIATE_DATA(float)
DUALRAN_INSTANTIATE_DATA(double)

}  // namespace dualran
