#include "dualran/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "dualran/errors.hpp"

namespace dualran {

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic spec: " + m); };
  if (train_dialogs + val_dialogs + test_dialogs == 0) fail("no dialogs requested");
  if (min_len == 0 || min_len > max_len) fail("length range must satisfy 1 <= min <= max");
  if (dim == 0) fail("dim must be positive");
  if (num_speakers == 0) fail("num_speakers must be positive");
  if (num_classes < 2) fail("need at least 2 classes");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (moods == 0) fail("moods must be >= 1");
  if (!(mood_strength >= 0.0)) fail("mood_strength must be >= 0");
  if (context > 6) fail("context window above 6 makes the enumeration impractical");
}

std::vector<std::pair<std::string, std::string>> SyntheticSpec::to_key_values() const {
  char nbuf[64];
  char mbuf[64];
  std::snprintf(nbuf, sizeof nbuf, "%.17g", noise);
  std::snprintf(mbuf, sizeof mbuf, "%.17g", mood_strength);
  return {
      {"train", std::to_string(train_dialogs)}, {"val", std::to_string(val_dialogs)},
      {"test", std::to_string(test_dialogs)},   {"min_len", std::to_string(min_len)},
      {"max_len", std::to_string(max_len)},     {"dim", std::to_string(dim)},
      {"speakers", std::to_string(num_speakers)}, {"classes", std::to_string(num_classes)},
      {"k", std::to_string(context)},           {"noise", nbuf},
      {"moods", std::to_string(moods)},         {"mood_strength", mbuf},
      {"seed", std::to_string(seed)},
  };
}

void SyntheticSpec::set(const std::string& key, const std::string& value) {
  auto as_size = [&]() -> std::size_t {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(value, &pos);
      if (pos != value.size() || v < 0) throw std::invalid_argument(key);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("synthetic spec: '" + key + "' expects a non-negative integer, got '" + value + "'");
    }
  };
  if (key == "train") train_dialogs = as_size();
  else if (key == "val") val_dialogs = as_size();
  else if (key == "test") test_dialogs = as_size();
  else if (key == "min_len") min_len = as_size();
  else if (key == "max_len") max_len = as_size();
  else if (key == "dim" || key == "d") dim = as_size();
  else if (key == "speakers") num_speakers = as_size();
  else if (key == "classes") num_classes = as_size();
  else if (key == "k" || key == "context") context = as_size();
  else if (key == "seed") seed = as_size();
  else if (key == "moods") moods = as_size();
  else if (key == "mood_strength") {
    try {
      mood_strength = std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError("synthetic spec: 'mood_strength' expects a number, got '" + value + "'");
    }
  }
  else if (key == "noise") {
    try {
      noise = std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError("synthetic spec: 'noise' expects a number, got '" + value + "'");
    }
  } else {
    throw ConfigError("synthetic spec: unknown key '" + key + "'");
  }
}

SyntheticSpec parse_synthetic_spec(const std::string& inline_spec) {
  SyntheticSpec spec;
  std::stringstream ss(inline_spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec: expected key=value, got '" + item + "'");
    spec.set(item.substr(0, eq), item.substr(eq + 1));
  }
  spec.validate();
  return spec;
}

std::int64_t window_label(const std::vector<std::int64_t>& window, bool odd_parity) {
  // count, first position, last position per token
  std::map<std::int64_t, std::array<std::size_t, 3>> stats;
  for (std::size_t i = 0; i < window.size(); ++i) {
    auto [it, fresh] = stats.try_emplace(window[i], std::array<std::size_t, 3>{0, i, i});
    it->second[0] += 1;
    it->second[2] = i;
  }
  std::size_t best_count = 0;
  for (const auto& [tok, s] : stats) best_count = std::max(best_count, s[0]);
  std::int64_t pick = -1;
  std::size_t pick_pos = 0;
  for (const auto& [tok, s] : stats) {
    if (s[0] != best_count) continue;
    if (pick < 0 || (odd_parity ? s[1] < pick_pos : s[2] > pick_pos)) {
      pick = tok;
      pick_pos = odd_parity ? s[1] : s[2];
    }
  }
  return pick;
}

double window_ceiling(std::size_t num_classes, std::size_t window, bool odd_parity) {
  if (window == 0 || num_classes == 0) throw ConfigError("window_ceiling needs window >= 1 and classes >= 1");
  const std::size_t K = num_classes;
  std::size_t total = 1;
  for (std::size_t i = 0; i < window; ++i) total *= K;
  // counts[last token][label]
  std::vector<std::vector<std::size_t>> counts(K, std::vector<std::size_t>(K, 0));
  std::vector<std::int64_t> w(window);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < window; ++i) {
      w[i] = static_cast<std::int64_t>(c % K);
      c /= K;
    }
    counts[static_cast<std::size_t>(w.back())][static_cast<std::size_t>(window_label(w, odd_parity))] += 1;
  }
  std::size_t best = 0;
  for (const auto& row : counts) best += *std::max_element(row.begin(), row.end());
  return static_cast<double>(best) / static_cast<double>(total);
}

SyntheticCeiling context_free_ceiling(const SyntheticSpec& spec, const DialogCorpus& corpus) {
  std::map<std::pair<std::size_t, bool>, double> cache;
  SyntheticCeiling out;
  double sum = 0.0;
  for (const auto& d : corpus.dialogs) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const std::size_t w = std::min(t, spec.context) + 1;
      const bool odd = (d.turns[t].speaker % 2) != 0;
      auto it = cache.find({w, odd});
      if (it == cache.end()) it = cache.emplace(std::make_pair(w, odd), window_ceiling(spec.num_classes, w, odd)).first;
      sum += it->second;
      ++out.turns;
    }
  }
  out.accuracy = out.turns ? sum / static_cast<double>(out.turns) : 0.0;
  return out;
}

LabelManifest synthetic_manifest(std::size_t num_classes) {
  LabelManifest m;
  m.name = "synthetic";
  for (std::size_t c = 0; c < num_classes; ++c) m.classes.push_back("c" + std::to_string(c));
  return m;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  SyntheticCorpus out;
  out.corpus.feature_dim = spec.dim;
  out.corpus.manifest = synthetic_manifest(spec.num_classes);

  Rng proto_rng = root.fork(1);
  out.prototypes.resize(spec.num_classes);
  for (auto& p : out.prototypes) {
    p.resize(spec.dim);
    for (auto& v : p) v = proto_rng.normal();
  }
  Rng mood_rng = root.fork(2);
  out.mood_vectors.resize(spec.moods);
  for (auto& m : out.mood_vectors) {
    m.resize(spec.dim);
    for (auto& v : m) v = spec.mood_strength * mood_rng.normal();
  }

  const std::pair<const char*, std::size_t> splits[] = {
      {"train", spec.train_dialogs}, {"val", spec.val_dialogs}, {"test", spec.test_dialogs}};
  std::uint64_t stream = 100;
  for (const auto& [split, count] : splits) {
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = root.fork(stream++);
      Dialog d;
      d.id = std::string(split) + "-" + std::to_string(i);
      d.split = split;
      const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
      std::vector<std::int64_t> z(len);
      std::vector<std::string> names(len);
      for (std::size_t t = 0; t < len; ++t) {
        z[t] = static_cast<std::int64_t>(rng.below(spec.num_classes));
        names[t] = "spk" + std::to_string(rng.below(spec.num_speakers));
      }
      const auto mood = static_cast<std::int64_t>(spec.moods > 1 ? rng.below(spec.moods) : 0);
      const auto& mood_vec = out.mood_vectors[static_cast<std::size_t>(mood)];
      const auto speakers = normalize_speakers(names);
      for (std::size_t t = 0; t < len; ++t) {
        Turn turn;
        turn.speaker = speakers[t];
        turn.speaker_name = names[t];
        const std::size_t first = t >= spec.context ? t - spec.context : 0;
        const std::vector<std::int64_t> window(z.begin() + static_cast<std::ptrdiff_t>(first),
                                               z.begin() + static_cast<std::ptrdiff_t>(t + 1));
        turn.label = (window_label(window, speakers[t] % 2 != 0) + mood) % static_cast<std::int64_t>(spec.num_classes);
        const auto& proto = out.prototypes[static_cast<std::size_t>(z[t])];
        turn.features.resize(spec.dim);
        for (std::size_t j = 0; j < spec.dim; ++j) turn.features[j] = proto[j] + mood_vec[j] + spec.noise * rng.normal();
        d.turns.push_back(std::move(turn));
      }
      out.tokens.push_back(std::move(z));
      out.dialog_moods.push_back(mood);
      out.corpus.dialogs.push_back(std::move(d));
    }
  }
  for (const auto& [split, count] : splits) {
    if (count) out.ceilings[split] = context_free_ceiling(spec, out.corpus.subset(split));
  }
  return out;
}

}  // namespace dualran
