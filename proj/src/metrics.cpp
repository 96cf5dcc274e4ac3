// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/metrics.hpp"

#include <algorithm>
#include <set>

#include "gacd/error.hpp"
#include "json.hpp"

namespace gacd {

namespace {

using ojson = nlohmann::ordered_json;

void check_sizes(const std::vector<Caption>& captions, const std::vector<SceneSpec>& scenes) {
  require(captions.size() == scenes.size(), ErrorCode::kInvalidArgument,
          std::to_string(captions.size()) + " captions for " + std::to_string(scenes.size()) +
              " scenes");
}

bool contains(const SceneSpec& scene, const std::string& cls) {
  return std::find(scene.objects.begin(), scene.objects.end(), cls) != scene.objects.end();
}

// Class names of the noun mentions in a caption, in order.
std::vector<std::string> mentions(const Caption& caption, const Vocab& vocab) {
  std::vector<std::string> out;
  for (TokenId id : caption) {
    if (vocab.is_noun(id)) out.push_back(vocab.object_classes()[vocab.object_class(id)]);
  }
  return out;
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> optional_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

ChairMetrics chair_metrics(const std::vector<Caption>& captions,
                           const std::vector<SceneSpec>& scenes, const Vocab& vocab) {
  require(!captions.empty(), ErrorCode::kInvalidArgument, "chair_metrics: empty caption set");
  check_sizes(captions, scenes);
  ChairMetrics m;
  m.captions = captions.size();
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    tokens += captions[i].size();
    bool hallucinated = false;
    std::set<std::string> correct;
    for (const std::string& cls : mentions(captions[i], vocab)) {
      ++m.mentions;
      if (contains(scenes[i], cls)) {
        correct.insert(cls);
      } else {
        ++m.hallucinated_mentions;
        hallucinated = true;
      }
    }
    if (hallucinated) ++m.hallucinated_captions;
    const std::set<std::string> present(scenes[i].objects.begin(), scenes[i].objects.end());
    m.present += present.size();
    m.recalled += correct.size();
  }
  m.sentence = percent(m.hallucinated_captions, m.captions);
  m.instance = percent(m.hallucinated_mentions, m.mentions);
  m.recall = percent(m.recalled, m.present);
  m.length = static_cast<double>(tokens) / static_cast<double>(m.captions);
  return m;
}

CogResult cog_metric(const std::vector<Caption>& captions, const std::vector<SceneSpec>& scenes,
                     const Vocab& vocab, const CooccurrenceStats& train_stats,
                     double threshold) {
  check_sizes(captions, scenes);
  CogResult r;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    for (const std::string& cls : mentions(captions[i], vocab)) {
      if (contains(scenes[i], cls)) continue;
      ++r.hallucinated;
      const std::size_t h = train_stats.index(cls);
      const bool biased =
          std::any_of(scenes[i].objects.begin(), scenes[i].objects.end(),
                      [&](const std::string& present) {
                        return train_stats.conditional(train_stats.index(present), h) > threshold;
                      });
      if (biased) ++r.cooccurring;
    }
  }
  if (r.hallucinated > 0) r.rate = percent(r.cooccurring, r.hallucinated);
  return r;
}

SameTopTokenResult same_top_token_diagnostic(const std::vector<std::vector<Anchor>>& anchors,
                                             const std::vector<SceneSpec>& scenes,
                                             const Vocab& vocab) {
  require(anchors.size() == scenes.size(), ErrorCode::kInvalidArgument,
          "same_top_token_diagnostic: one anchor log per scene expected");
  SameTopTokenResult r;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::set<std::size_t> real_tops;
    std::size_t last_step = 0;
    for (const Anchor& a : anchors[i]) {
      if (a.step == last_step) continue;
      last_step = a.step;
      const bool present =
          a.object_class >= 0 && contains(scenes[i], vocab.object_classes()[a.object_class]);
      if (present) {
        real_tops.insert(a.visual_index);
        continue;
      }
      ++r.hallucinated;
      if (real_tops.count(a.visual_index)) ++r.shared;
    }
  }
  if (r.hallucinated > 0) r.rate = percent(r.shared, r.hallucinated);
  return r;
}

std::optional<double> pair_hallucination_rate(const std::vector<Caption>& captions,
                                              const std::vector<SceneSpec>& scenes,
                                              const Vocab& vocab, const std::string& source,
                                              const std::string& partner) {
  check_sizes(captions, scenes);
  std::size_t eligible = 0, hit = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (!contains(scenes[i], source) || contains(scenes[i], partner)) continue;
    ++eligible;
    const auto m = mentions(captions[i], vocab);
    if (std::find(m.begin(), m.end(), partner) != m.end()) ++hit;
  }
  if (eligible == 0) return std::nullopt;
  return percent(hit, eligible);
}

const std::vector<std::string>& report_fields() {
  static const std::vector<std::string> fields = {
      "C_S",     "C_I",      "R",        "Len",      "cog",      "pair_hallucination",
      "same_top_token_rate", "es_rate",  "es_mean_delta_len",   "mean_r_v",
      "mean_gap", "mean_confidence"};
  return fields;
}

std::string MetricsReport::to_json() const {
  ojson j;
  j["C_S"] = C_S;
  j["C_I"] = C_I;
  j["R"] = R;
  j["Len"] = Len;
  j["cog"] = optional_json(cog);
  ojson pairs = ojson::object();
  for (const auto& [name, rate] : pair_hallucination) pairs[name] = optional_json(rate);
  j["pair_hallucination"] = pairs;
  j["same_top_token_rate"] = optional_json(same_top_token_rate);
  j["es_rate"] = es_rate;
  j["es_mean_delta_len"] = optional_json(es_mean_delta_len);
  j["mean_r_v"] = mean_r_v;
  j["mean_gap"] = mean_gap;
  j["mean_confidence"] = mean_confidence;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    for (const std::string& f : report_fields()) {
      require(j.contains(f), ErrorCode::kFormat, "metrics report: missing field '" + f + "'");
    }
    require(j.size() == report_fields().size(), ErrorCode::kFormat,
            "metrics report: unexpected fields");
    MetricsReport r;
    r.C_S = j.at("C_S").get<double>();
    r.C_I = j.at("C_I").get<double>();
    r.R = j.at("R").get<double>();
    r.Len = j.at("Len").get<double>();
    r.cog = optional_from(j.at("cog"));
    for (const auto& [name, rate] : j.at("pair_hallucination").items()) {
      r.pair_hallucination[name] = optional_from(rate);
    }
    r.same_top_token_rate = optional_from(j.at("same_top_token_rate"));
    r.es_rate = j.at("es_rate").get<double>();
    r.es_mean_delta_len = optional_from(j.at("es_mean_delta_len"));
    r.mean_r_v = j.at("mean_r_v").get<double>();
    r.mean_gap = j.at("mean_gap").get<double>();
    r.mean_confidence = j.at("mean_confidence").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("metrics report: ") + e.what());
  }
}

}  // namespace gacd
