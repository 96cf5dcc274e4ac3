// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "gacd/error.hpp"

namespace gacd {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep = ',') {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    out.push_back(trim(text.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  fail(ErrorCode::kInvalidArgument,
       "invalid value '" + std::string(value) + "' for " + std::string(key) + ": " + what);
}

double to_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    bad_value(key, text, "expected a number");
  }
  return v;
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    bad_value(key, text, "expected a non-negative integer");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, text, "expected true or false");
}

std::string format(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }

template <class T>
std::vector<T> parse_each(std::string_view key, std::string_view text,
                          const std::function<T(std::string_view)>& one) {
  std::vector<T> out;
  for (const std::string& item : split_list(text)) {
    if (item.empty()) bad_value(key, text, "empty list item");
    out.push_back(one(item));
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field scalar(std::string key, T& (*ref)(ExperimentConfig&)) {
  Field f;
  f.key = key;
  f.set = [key, ref](ExperimentConfig& c, std::string_view v) {
    if constexpr (std::is_same_v<T, double>) {
      ref(c) = to_double(key, v);
    } else if constexpr (std::is_same_v<T, bool>) {
      ref(c) = to_bool(key, v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      ref(c) = trim(v);
    } else {
      ref(c) = static_cast<T>(to_u64(key, v));
    }
  };
  f.get = [ref](const ExperimentConfig& c) {
    const T& v = ref(const_cast<ExperimentConfig&>(c));
    if constexpr (std::is_same_v<T, double> || std::is_same_v<T, bool>) {
      return format(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      return format(static_cast<std::uint64_t>(v));
    }
  };
  return f;
}

#define GACD_FIELD(key, type, expr) \
  scalar<type>(key, +[](ExperimentConfig& c) -> type& { return expr; })

std::string modes_text(const std::vector<DecodeMode>& modes) {
  std::vector<std::string> names;
  for (DecodeMode m : modes) names.push_back(to_string(m));
  return join(names);
}

std::string doubles_text(const std::vector<double>& values) {
  std::vector<std::string> items;
  for (double v : values) items.push_back(format(v));
  return join(items);
}

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(GACD_FIELD("seed", std::uint64_t, c.seed));
    f.push_back(GACD_FIELD("paths.out_dir", std::string, c.out_dir));
    f.push_back(GACD_FIELD("paths.corpus_dir", std::string, c.corpus_dir));
    f.push_back(GACD_FIELD("paths.model_dir", std::string, c.model_dir));

    f.push_back({"corpus.classes",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.corpus.classes = parse_each<std::string>(
                       "corpus.classes", v, [](std::string_view s) { return std::string(s); });
                 },
                 [](const ExperimentConfig& c) { return join(c.corpus.classes); }});
    f.push_back({"corpus.pairs",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.corpus.pairs = parse_each<CooccurrencePair>(
                       "corpus.pairs", v, [v](std::string_view item) {
                         const auto gt = item.find('>');
                         const auto colon = item.find(':');
                         if (gt == std::string_view::npos || colon == std::string_view::npos ||
                             colon < gt) {
                           bad_value("corpus.pairs", v, "expected source>partner:probability");
                         }
                         return CooccurrencePair{trim(item.substr(0, gt)),
                                                 trim(item.substr(gt + 1, colon - gt - 1)),
                                                 to_double("corpus.pairs", item.substr(colon + 1))};
                       });
                 },
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> items;
                   for (const auto& p : c.corpus.pairs) {
                     items.push_back(p.source + ">" + p.partner + ":" + format(p.probability));
                   }
                   return join(items);
                 }});
    f.push_back({"corpus.prompt",
                 [](ExperimentConfig& c, std::string_view v) {
                   std::vector<std::string> words;
                   std::istringstream in{std::string(v)};
                   for (std::string w; in >> w;) words.push_back(w);
                   c.corpus.prompt = std::move(words);
                 },
                 [](const ExperimentConfig& c) { return join(c.corpus.prompt, " "); }});
    f.push_back(GACD_FIELD("corpus.base_rate", double, c.corpus.base_rate));
    f.push_back(GACD_FIELD("corpus.max_objects", std::size_t, c.corpus.max_objects));
    f.push_back(GACD_FIELD("corpus.pair_rate", double, c.corpus.pair_rate));
    f.push_back(GACD_FIELD("corpus.min_distractors", std::size_t, c.corpus.min_distractors));
    f.push_back(GACD_FIELD("corpus.max_distractors", std::size_t, c.corpus.max_distractors));
    f.push_back(GACD_FIELD("corpus.train_scenes", std::size_t, c.corpus.train_scenes));
    f.push_back(GACD_FIELD("corpus.test_scenes", std::size_t, c.corpus.test_scenes));
    f.push_back(GACD_FIELD("corpus.test_single", std::size_t, c.corpus.test_single));
    f.push_back(GACD_FIELD("corpus.d_visual", std::size_t, c.corpus.d_visual));
    f.push_back(GACD_FIELD("corpus.noise", double, c.corpus.noise));
    f.push_back(GACD_FIELD("corpus.prototype_norm", double, c.corpus.prototype_norm));
    f.push_back(GACD_FIELD("corpus.occlusion", double, c.corpus.occlusion));

    f.push_back(GACD_FIELD("model.vocab_size", std::size_t, c.model.vocab_size));
    f.push_back(GACD_FIELD("model.d_model", std::size_t, c.model.d_model));
    f.push_back(GACD_FIELD("model.layers", std::size_t, c.model.layers));
    f.push_back(GACD_FIELD("model.heads", std::size_t, c.model.heads));
    f.push_back(GACD_FIELD("model.max_visual", std::size_t, c.model.max_visual));
    f.push_back(GACD_FIELD("model.context", std::size_t, c.model.context));
    f.push_back(GACD_FIELD("model.mlp_ratio", std::size_t, c.model.mlp_ratio));
    f.push_back(GACD_FIELD("model.zero_visual_positions", bool, c.model.zero_visual_positions));
    f.push_back(GACD_FIELD("model.init_scale", double, c.model.init_scale));

    f.push_back(GACD_FIELD("train.epochs", std::size_t, c.train.epochs));
    f.push_back(GACD_FIELD("train.batch", std::size_t, c.train.batch));
    f.push_back(GACD_FIELD("train.lr", double, c.train.lr));
    f.push_back(GACD_FIELD("train.final_lr_fraction", double, c.train.final_lr_fraction));
    f.push_back(GACD_FIELD("train.clip_norm", double, c.train.clip_norm));
    f.push_back(GACD_FIELD("train.text_only_fraction", double, c.train.text_only_fraction));
    f.push_back(GACD_FIELD("train.label_smoothing", double, c.train.label_smoothing));
    f.push_back(GACD_FIELD("train.plateau_window", std::size_t, c.train.plateau_window));
    f.push_back(GACD_FIELD("train.plateau_tolerance", double, c.train.plateau_tolerance));

    f.push_back(GACD_FIELD("decoder.alpha_max", double, c.decoder.alpha_max));
    f.push_back(GACD_FIELD("decoder.epsilon", double, c.decoder.epsilon));
    f.push_back({"decoder.norm",
                 [](ExperimentConfig& c, std::string_view v) { c.decoder.norm = parse_norm(trim(v)); },
                 [](const ExperimentConfig& c) { return to_string(c.decoder.norm); }});
    f.push_back(GACD_FIELD("decoder.max_len", std::size_t, c.decoder.max_len));
    f.push_back(GACD_FIELD("decoder.greedy", bool, c.decoder.greedy));
    f.push_back(GACD_FIELD("decoder.temperature", double, c.decoder.temperature));
    f.push_back(GACD_FIELD("decoder.anchor_top_k", std::size_t, c.decoder.anchor_top_k));
    f.push_back({"decoder.negative",
                 [](ExperimentConfig& c, std::string_view v) {
                   const std::string t = trim(v);
                   if (t == "drop") {
                     c.decoder.negative = NegativeBranch::kDrop;
                   } else if (t == "zero") {
                     c.decoder.negative = NegativeBranch::kZero;
                   } else {
                     bad_value("decoder.negative", v, "expected drop or zero");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.decoder.negative == NegativeBranch::kDrop ? "drop"
                                                                                  : "zero");
                 }});
    f.push_back(GACD_FIELD("decoder.exclude_special", bool, c.decoder.exclude_special));
    f.push_back({"decoder.terminals",
                 [](ExperimentConfig& c, std::string_view v) {
                   std::vector<std::string> words;
                   std::istringstream in{std::string(v)};
                   for (std::string w; in >> w;) words.push_back(w);
                   c.terminals = std::move(words);
                 },
                 [](const ExperimentConfig& c) { return join(c.terminals, " "); }});

    f.push_back({"eval.modes",
                 [](ExperimentConfig& c, std::string_view v) { c.modes = parse_modes(v); },
                 [](const ExperimentConfig& c) { return modes_text(c.modes); }});
    f.push_back(GACD_FIELD("eval.jobs", std::size_t, c.jobs));
    f.push_back(GACD_FIELD("eval.cog_threshold", double, c.cog_threshold));
    f.push_back(GACD_FIELD("eval.trace_out", std::string, c.trace_out));
    f.push_back({"eval.objects",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.eval_objects = parse_each<std::string>(
                       "eval.objects", v, [](std::string_view s) { return std::string(s); });
                 },
                 [](const ExperimentConfig& c) { return join(c.eval_objects); }});

    f.push_back({"sweep.modes",
                 [](ExperimentConfig& c, std::string_view v) { c.grid.modes = parse_modes(v); },
                 [](const ExperimentConfig& c) { return modes_text(c.grid.modes); }});
    f.push_back({"sweep.alpha_max",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.grid.alpha_max = parse_each<double>(
                       "sweep.alpha_max", v,
                       [](std::string_view s) { return to_double("sweep.alpha_max", s); });
                 },
                 [](const ExperimentConfig& c) { return doubles_text(c.grid.alpha_max); }});
    f.push_back({"sweep.epsilon",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.grid.epsilon = parse_each<double>(
                       "sweep.epsilon", v,
                       [](std::string_view s) { return to_double("sweep.epsilon", s); });
                 },
                 [](const ExperimentConfig& c) { return doubles_text(c.grid.epsilon); }});
    f.push_back({"sweep.norms",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.grid.norms = parse_each<InfluenceNorm>(
                       "sweep.norms", v, [](std::string_view s) { return parse_norm(s); });
                 },
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> names;
                   for (InfluenceNorm n : c.grid.norms) names.push_back(to_string(n));
                   return join(names);
                 }});
    return f;
  }();
  return fields;
}

#undef GACD_FIELD

const Field& find_field(std::string_view key) {
  for (const Field& f : registry()) {
    if (f.key == key) return f;
  }
  fail(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string mode_file_name(DecodeMode mode) {
  std::string name = to_string(mode);
  std::replace(name.begin(), name.end(), '+', '_');
  return name;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory " + dir + ": " + ec.message());
}

void require_file(const std::string& path, const std::string& what) {
  require(fs::exists(path), ErrorCode::kIo, what + " not found: " + path);
}

std::vector<SceneSpec> eval_scenes(const ExperimentConfig& config) {
  const std::string path = join_path(config.resolved_corpus_dir(), "test.jsonl");
  require_file(path, "test corpus");
  std::vector<SceneSpec> scenes = read_scenes(path);
  if (config.eval_objects.empty()) return scenes;
  std::vector<std::string> want = config.eval_objects;
  std::sort(want.begin(), want.end());
  std::vector<SceneSpec> kept;
  for (SceneSpec& s : scenes) {
    std::vector<std::string> have = s.objects;
    std::sort(have.begin(), have.end());
    if (have == want) kept.push_back(std::move(s));
  }
  require(!kept.empty(), ErrorCode::kInvalidArgument,
          "no test scene has exactly the objects " + join(config.eval_objects));
  return kept;
}

struct LoadedModel {
  ModelParams params;
  Vocab vocab;
  CooccurrenceStats stats;
};

LoadedModel load_model(const ExperimentConfig& config) {
  const std::string model_dir = config.resolved_model_dir();
  const std::string ckpt = join_path(model_dir, "checkpoint.bin");
  const std::string vocab = join_path(model_dir, "vocab.tsv");
  const std::string stats = join_path(config.resolved_corpus_dir(), "stats.json");
  require_file(ckpt, "checkpoint");
  require_file(vocab, "vocabulary");
  require_file(stats, "corpus statistics");
  return {ModelParams::load(ckpt), Vocab::load(vocab), stats_from_json(read_file(stats))};
}

EvalOptions eval_options(const ExperimentConfig& config, const Vocab& vocab) {
  EvalOptions opt;
  opt.decoder = config.decoder;
  opt.decoder.seed = SplitRng(config.seed).split("eval")();
  for (const std::string& t : config.terminals) opt.decoder.terminals.push_back(vocab.id(t));
  opt.jobs = config.jobs;
  opt.cog_threshold = config.cog_threshold;
  opt.pairs = config.corpus.pairs;
  return opt;
}

std::string trace_path(const std::string& base, DecodeMode mode, bool several) {
  if (!several) return base;
  const fs::path p(base);
  return (p.parent_path() / (p.stem().string() + "_" + mode_file_name(mode) +
                             p.extension().string()))
      .string();
}

void write_config(const ExperimentConfig& config) {
  ensure_dir(config.resolved_out_dir());
  write_file(join_path(config.resolved_out_dir(), "config.ini"), config.serialize());
}

}  // namespace

std::vector<DecodeMode> parse_modes(std::string_view text) {
  std::vector<DecodeMode> modes = parse_each<DecodeMode>(
      "modes", text, [](std::string_view s) { return parse_mode(s); });
  require(!modes.empty(), ErrorCode::kInvalidArgument, "mode list is empty");
  return modes;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& contents) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << contents;
  require(out.good(), ErrorCode::kIo, "write failed: " + path);
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  find_field(trim(key)).set(*this, value);
}

std::string ExperimentConfig::get(std::string_view key) const {
  return find_field(key).get(*this);
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : registry()) out.push_back(f.key);
    return out;
  }();
  return names;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (line.front() == '[') {
      require(line.back() == ']' && line.size() > 2, ErrorCode::kFormat,
              where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kFormat, where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      c.set(section.empty() ? key : section + "." + key, value);
    } catch (const Error& e) {
      fail(e.code(), where + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return parse(read_file(path));
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  std::string section;
  for (const Field& f : registry()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + f.get(*this) + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  corpus_config().validate();
  model_config().validate();
  decoder.validate();
  require(model.max_visual >= corpus.max_objects + corpus.max_distractors,
          ErrorCode::kInvalidArgument,
          "model.max_visual must cover corpus.max_objects + corpus.max_distractors");
  require(cog_threshold >= 0.0 && cog_threshold <= 1.0, ErrorCode::kInvalidArgument,
          "eval.cog_threshold must lie in [0, 1]");
  require(!modes.empty(), ErrorCode::kInvalidArgument, "eval.modes is empty");
  require(train.epochs > 0 && train.batch > 0, ErrorCode::kInvalidArgument,
          "train.epochs and train.batch must be > 0");
  require(train.label_smoothing >= 0.0 && train.label_smoothing < 1.0,
          ErrorCode::kInvalidArgument, "train.label_smoothing must lie in [0, 1)");
  require(train.text_only_fraction >= 0.0 && train.text_only_fraction <= 1.0,
          ErrorCode::kInvalidArgument, "train.text_only_fraction must lie in [0, 1]");
}

std::string ExperimentConfig::resolved_out_dir() const {
  if (!out_dir.empty()) return out_dir;
  if (const char* env = std::getenv("GACD_OUTPUT_DIR"); env && *env) return env;
  return "gacd_out";
}

std::string ExperimentConfig::resolved_corpus_dir() const {
  return corpus_dir.empty() ? join_path(resolved_out_dir(), "corpus") : corpus_dir;
}

std::string ExperimentConfig::resolved_model_dir() const {
  return model_dir.empty() ? join_path(resolved_out_dir(), "model") : model_dir;
}

CorpusConfig ExperimentConfig::corpus_config() const {
  CorpusConfig c = corpus;
  c.seed = SplitRng(seed).split("corpus")();
  return c;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = train;
  t.seed = SplitRng(seed).split("train")();
  return t;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m = model;
  m.d_visual = corpus.d_visual;
  return m;
}

GenSummary cmd_gen(const ExperimentConfig& config) {
  config.validate();
  const Corpus corpus = generate_corpus(config.corpus_config());
  const std::string dir = config.resolved_corpus_dir();
  ensure_dir(dir);
  GenSummary s;
  s.train = corpus.train.size();
  s.test = corpus.test.size();
  s.train_path = join_path(dir, "train.jsonl");
  s.test_path = join_path(dir, "test.jsonl");
  s.stats_path = join_path(dir, "stats.json");
  write_scenes(s.train_path, corpus.train);
  write_scenes(s.test_path, corpus.test);
  write_file(s.stats_path, stats_to_json(cooccurrence_stats(corpus.train, config.corpus.classes)));
  write_config(config);
  return s;
}

TrainSummary cmd_train(const ExperimentConfig& config) {
  config.validate();
  const std::string train_path = join_path(config.resolved_corpus_dir(), "train.jsonl");
  require_file(train_path, "training corpus");
  const std::vector<SceneSpec> scenes = read_scenes(train_path);
  require(!scenes.empty(), ErrorCode::kInvalidArgument, "training corpus is empty: " + train_path);

  const ModelConfig mc = config.model_config();
  const Vocab vocab = corpus_vocab(config.corpus, mc.vocab_size);
  std::vector<TrainExample> examples;
  examples.reserve(scenes.size());
  for (const SceneSpec& s : scenes) {
    examples.push_back(training_example(s, vocab, config.corpus.prompt));
  }
  TrainResult result = train(ModelParams::init(mc, SplitRng(config.seed).split("init")),
                             examples, config.train_config());
  require(!result.diverged, ErrorCode::kDiverged,
          "training diverged: " + result.message + "; last completed epoch " +
              std::to_string(result.loss_curve.size()));

  const std::string dir = config.resolved_model_dir();
  ensure_dir(dir);
  TrainSummary s;
  s.loss_curve = result.loss_curve;
  s.reached_plateau = result.reached_plateau;
  s.checkpoint_path = join_path(dir, "checkpoint.bin");
  result.params.save(s.checkpoint_path);
  vocab.save(join_path(dir, "vocab.tsv"));
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    csv += std::to_string(e + 1) + "," + format(result.loss_curve[e]) + "\n";
  }
  write_file(join_path(dir, "loss.csv"), csv);
  write_config(config);
  return s;
}

EvalSummary cmd_eval(const ExperimentConfig& config) {
  config.validate();
  const LoadedModel m = load_model(config);
  const std::vector<SceneSpec> scenes = eval_scenes(config);
  const std::vector<TokenId> prompt = m.vocab.encode(config.corpus.prompt);
  const std::string dir = join_path(config.resolved_out_dir(), "eval");
  ensure_dir(dir);
  EvalSummary s;
  for (DecodeMode mode : config.modes) {
    EvalOptions opt = eval_options(config, m.vocab);
    opt.decoder.mode = mode;
    const Evaluation ev = evaluate(m.params, m.vocab, scenes, prompt, m.stats, opt);
    const std::string path = join_path(dir, "report_" + mode_file_name(mode) + ".json");
    write_file(path, ev.report.to_json());
    if (!config.trace_out.empty()) {
      write_file(trace_path(config.trace_out, mode, config.modes.size() > 1),
                 trace_jsonl(scenes, ev.scenes, m.vocab));
    }
    s.reports.emplace_back(mode, ev.report);
    s.report_paths.push_back(path);
  }
  write_config(config);
  return s;
}

std::vector<AblationCell> cmd_sweep(const ExperimentConfig& config) {
  config.validate();
  config.grid.validate();
  const LoadedModel m = load_model(config);
  const std::vector<SceneSpec> scenes = eval_scenes(config);
  const std::vector<TokenId> prompt = m.vocab.encode(config.corpus.prompt);
  const std::vector<AblationCell> cells =
      run_ablation(m.params, m.vocab, scenes, prompt, m.stats, eval_options(config, m.vocab),
                   config.grid);
  write_file(join_path(join_path(config.resolved_out_dir(), "sweep"), "sweep.csv"),
             sweep_csv(cells));
  write_config(config);
  return cells;
}

}  // namespace gacd
