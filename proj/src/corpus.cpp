// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gacd/error.hpp"
#include "json.hpp"

namespace gacd {

using ojson = nlohmann::ordered_json;

namespace {

std::size_t class_of(const CorpusConfig& config, const std::string& name) {
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    if (config.classes[c] == name) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown object class '" + name + "'");
}

std::string scene_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05zu", prefix, n);
  return buf;
}

SceneSpec make_scene(const CorpusConfig& config, const Tensor& prototypes,
                     std::string id, std::vector<std::string> objects,
                     double occlusion, SplitRng& rng) {
  const std::size_t dv = config.d_visual;
  std::vector<std::vector<double>> rows;
  for (const std::string& obj : objects) {
    if (rng.bernoulli(occlusion)) continue;
    auto proto = prototypes.row(class_of(config, obj));
    std::vector<double> f(dv);
    for (std::size_t j = 0; j < dv; ++j) f[j] = proto[j] + config.noise * rng.normal();
    rows.push_back(std::move(f));
  }
  const std::size_t span = config.max_distractors - config.min_distractors + 1;
  const std::size_t distractors = config.min_distractors + rng.below(span);
  for (std::size_t k = 0; k < distractors; ++k) {
    std::vector<double> f(dv);
    for (double& v : f) v = config.noise * rng.normal();
    rows.push_back(std::move(f));
  }

  rng.shuffle(rows);
  Tensor features({rows.size(), dv});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), features.row(i).begin());
  }

  std::vector<std::string> order = objects;
  rng.shuffle(order);
  SceneSpec s;
  s.id = std::move(id);
  std::sort(objects.begin(), objects.end(), [&](const auto& a, const auto& b) {
    return class_of(config, a) < class_of(config, b);
  });
  s.objects = std::move(objects);
  s.features = std::move(features);
  s.caption = caption_for(order, config.pair_rate, rng);
  return s;
}

}  // namespace

void CorpusConfig::validate() const {
  require(!classes.empty(), ErrorCode::kInvalidArgument, "corpus: empty class list");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = i + 1; j < classes.size(); ++j) {
      require(classes[i] != classes[j], ErrorCode::kInvalidArgument,
              "corpus: duplicate class '" + classes[i] + "'");
    }
  }
  for (const auto& p : pairs) {
    require(p.probability >= 0.0 && p.probability <= 1.0, ErrorCode::kInvalidArgument,
            "corpus: co-occurrence probability for " + p.source + ">" + p.partner +
                " must be in [0, 1]");
    require(p.source != p.partner, ErrorCode::kInvalidArgument,
            "corpus: pair " + p.source + ">" + p.partner + " names one class twice");
    class_of(*this, p.source);
    class_of(*this, p.partner);
  }
  require(base_rate > 0.0 && base_rate <= 1.0, ErrorCode::kInvalidArgument,
          "corpus: base_rate must be in (0, 1]");
  require(pair_rate >= 0.0 && pair_rate <= 1.0, ErrorCode::kInvalidArgument,
          "corpus: pair_rate must be in [0, 1]");
  require(max_objects >= 1, ErrorCode::kInvalidArgument, "corpus: max_objects must be >= 1");
  require(min_distractors <= max_distractors, ErrorCode::kInvalidArgument,
          "corpus: min_distractors exceeds max_distractors");
  require(train_scenes > 0, ErrorCode::kInvalidArgument, "corpus: train_scenes must be > 0");
  require(test_scenes + test_single * pairs.size() > 0, ErrorCode::kInvalidArgument,
          "corpus: no test scenes requested");
  require(d_visual > 0, ErrorCode::kInvalidArgument, "corpus: d_visual must be > 0");
  require(noise >= 0.0 && prototype_norm > 0.0, ErrorCode::kInvalidArgument,
          "corpus: noise must be >= 0 and prototype_norm > 0");
  require(occlusion >= 0.0 && occlusion <= 1.0, ErrorCode::kInvalidArgument,
          "corpus: occlusion must be in [0, 1]");
}

Tensor class_prototypes(const CorpusConfig& config) {
  SplitRng rng = SplitRng(config.seed).split("prototypes");
  Tensor protos({config.classes.size(), config.d_visual});
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    auto row = protos.row(c);
    double norm = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v *= config.prototype_norm / norm;
  }
  return protos;
}

std::vector<std::string> sample_objects(const CorpusConfig& config, SplitRng& rng) {
  const std::size_t n = config.classes.size();
  for (;;) {
    std::vector<bool> present(n);
    for (std::size_t c = 0; c < n; ++c) present[c] = rng.bernoulli(config.base_rate);
    for (const auto& p : config.pairs) {
      if (present[class_of(config, p.source)]) {
        present[class_of(config, p.partner)] = rng.bernoulli(p.probability);
      }
    }
    const auto k = static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
    if (k == 0 || k > config.max_objects) continue;
    std::vector<std::string> out;
    for (std::size_t c = 0; c < n; ++c) {
      if (present[c]) out.push_back(config.classes[c]);
    }
    return out;
  }
}

std::vector<std::string> caption_for(const std::vector<std::string>& objects) {
  SplitRng unused;
  return caption_for(objects, 1.0, unused);
}

std::vector<std::string> caption_for(const std::vector<std::string>& objects, double pair_rate,
                                     SplitRng& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    out.push_back("a");
    out.push_back(objects[i]);
    if (i + 1 < objects.size() && (pair_rate >= 1.0 || rng.bernoulli(pair_rate))) {
      out.push_back("and");
      out.push_back("a");
      out.push_back(objects[++i]);
    }
    out.push_back(".");
  }
  return out;
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.validate();
  const Tensor protos = class_prototypes(config);
  const SplitRng root(config.seed);
  Corpus corpus;
  corpus.train.reserve(config.train_scenes);
  for (std::size_t i = 0; i < config.train_scenes; ++i) {
    SplitRng rng = root.split("train").split(i);
    auto objects = sample_objects(config, rng);
    corpus.train.push_back(make_scene(config, protos, scene_id("train", i),
                                      std::move(objects), config.occlusion, rng));
  }
  std::size_t next = 0;
  for (std::size_t i = 0; i < config.test_scenes; ++i) {
    SplitRng rng = root.split("test").split(i);
    auto objects = sample_objects(config, rng);
    corpus.test.push_back(
        make_scene(config, protos, scene_id("test", next++), std::move(objects), 0.0, rng));
  }
  for (std::size_t p = 0; p < config.pairs.size(); ++p) {
    for (const std::string* cls : {&config.pairs[p].source, &config.pairs[p].partner}) {
      for (std::size_t i = 0; i < config.test_single; ++i) {
        SplitRng rng = root.split("single").split(*cls).split(i);
        corpus.test.push_back(
            make_scene(config, protos, scene_id("test", next++), {*cls}, 0.0, rng));
      }
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------

double CooccurrenceStats::conditional(std::size_t a, std::size_t b) const {
  if (count[a] == 0) return 0.0;
  return static_cast<double>(joint[a][b]) / static_cast<double>(count[a]);
}

double CooccurrenceStats::conditional(const std::string& a, const std::string& b) const {
  return conditional(index(a), index(b));
}

std::size_t CooccurrenceStats::index(const std::string& name) const {
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == name) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown object class '" + name + "'");
}

CooccurrenceStats cooccurrence_stats(const std::vector<SceneSpec>& scenes,
                                     const std::vector<std::string>& classes) {
  CooccurrenceStats st;
  st.classes = classes;
  st.count.assign(classes.size(), 0);
  st.joint.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  for (const SceneSpec& s : scenes) {
    std::vector<std::size_t> idx;
    for (const auto& o : s.objects) idx.push_back(st.index(o));
    for (std::size_t a : idx) {
      ++st.count[a];
      for (std::size_t b : idx) {
        if (a != b) ++st.joint[a][b];
      }
    }
  }
  return st;
}

Vocab corpus_vocab(const CorpusConfig& config, std::size_t vocab_size) {
  return Vocab::build(config.classes, config.prompt, vocab_size);
}

TrainExample training_example(const SceneSpec& scene, const Vocab& vocab,
                              const std::vector<std::string>& prompt) {
  TrainExample ex;
  ex.features = scene.features;
  ex.prompt = vocab.encode(prompt);
  ex.tokens.push_back(vocab.bos());
  for (TokenId id : vocab.encode(scene.caption)) ex.tokens.push_back(id);
  ex.tokens.push_back(vocab.eos());
  return ex;
}

// ---------------------------------------------------------------------------
// Serialization

std::string scenes_to_jsonl(const std::vector<SceneSpec>& scenes) {
  std::string out;
  for (const SceneSpec& s : scenes) {
    ojson j;
    j["scene_id"] = s.id;
    j["objects"] = s.objects;
    ojson feats = ojson::array();
    const std::size_t rows = s.features.size() == 0 ? 0 : s.features.rows();
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = s.features.row(r);
      feats.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["features"] = std::move(feats);
    j["caption"] = s.caption;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SceneSpec> scenes_from_jsonl(const std::string& text) {
  std::vector<SceneSpec> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = ojson::parse(line);
      SceneSpec s;
      s.id = j.at("scene_id").get<std::string>();
      s.objects = j.at("objects").get<std::vector<std::string>>();
      const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
      const std::size_t cols = rows.empty() ? 0 : rows.front().size();
      std::vector<double> flat;
      for (const auto& r : rows) {
        require(r.size() == cols, ErrorCode::kFormat, "ragged feature rows");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      s.features = Tensor({rows.size(), cols}, std::move(flat));
      require(s.features.all_finite(), ErrorCode::kFormat, "non-finite feature value");
      s.caption = j.at("caption").get<std::vector<std::string>>();
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "scene line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kFormat, "scene line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_scenes(const std::string& path, const std::vector<SceneSpec>& scenes) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write '" + path + "'");
  out << scenes_to_jsonl(scenes);
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + path + "'");
}

std::vector<SceneSpec> read_scenes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return scenes_from_jsonl(ss.str());
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::string stats_to_json(const CooccurrenceStats& stats) {
  ojson j;
  j["classes"] = stats.classes;
  j["count"] = stats.count;
  j["joint"] = stats.joint;
  ojson cond = ojson::object();
  for (std::size_t a = 0; a < stats.classes.size(); ++a) {
    ojson row = ojson::object();
    for (std::size_t b = 0; b < stats.classes.size(); ++b) {
      if (a != b) row[stats.classes[b]] = stats.conditional(a, b);
    }
    cond[stats.classes[a]] = std::move(row);
  }
  j["conditional"] = std::move(cond);
  return j.dump(2) + "\n";
}

CooccurrenceStats stats_from_json(const std::string& text) {
  try {
    const auto j = ojson::parse(text);
    CooccurrenceStats st;
    st.classes = j.at("classes").get<std::vector<std::string>>();
    st.count = j.at("count").get<std::vector<std::size_t>>();
    st.joint = j.at("joint").get<std::vector<std::vector<std::size_t>>>();
    require(st.count.size() == st.classes.size() && st.joint.size() == st.classes.size(),
            ErrorCode::kFormat, "stats: inconsistent table sizes");
    return st;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("stats: ") + e.what());
  }
}

}  // namespace gacd
