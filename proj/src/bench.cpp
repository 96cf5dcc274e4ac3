// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "gacd/error.hpp"
#include "json.hpp"

namespace gacd {

namespace {

using ojson = nlohmann::ordered_json;

SceneResult decode_scene(const ModelParams& params, const Vocab& vocab, const SceneSpec& scene,
                         const std::vector<TokenId>& prompt, const DecoderConfig& config) {
  SceneResult r;
  const Tensor visual = encode_scene(params, scene.features);
  r.decode = decode_tokens(params, vocab, visual, prompt, config);
  r.caption = r.decode.caption(vocab);
  if (r.decode.stop == StopReason::kEarlyStop) {
    DecoderConfig rerun = config;
    rerun.mode = DecodeMode::kObjectAware;
    r.rerun_length = decode_tokens(params, vocab, visual, prompt, rerun).caption(vocab).size();
  }
  return r;
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

std::string csv_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

ojson summary_json(const LogitSummary& s) {
  ojson top = ojson::array();
  for (const auto& [id, z] : s.top) top.push_back({id, z});
  return {{"argmax", s.argmax}, {"top", top}};
}

ojson ratios_json(const InfluenceRatios& r) {
  if (!r.defined) return nullptr;
  return {{"visual", r.visual}, {"prompt", r.prompt}, {"history", r.history}, {"gap", r.gap}};
}

ojson step_json(const std::string& scene_id, const StepTrace& t, const Vocab& vocab) {
  ojson j;
  j["scene_id"] = scene_id;
  j["step"] = t.step;
  j["candidate"] = vocab.text(t.candidate);
  j["token"] = t.token ? ojson(vocab.text(*t.token)) : ojson(nullptr);
  j["early_stop"] = t.early_stop;
  j["noun_candidate"] = t.noun_candidate;
  j["full"] = summary_json(t.full);
  j["negative"] = t.has_negative ? summary_json(t.negative) : ojson(nullptr);
  j["influence"] = {{"visual", t.influence.visual},
                    {"prompt", t.influence.prompt},
                    {"history", t.influence.history}};
  j["object_tokens"] = t.split.object;
  j["alpha"] = {{"raw", t.alpha.raw},
                {"value", t.alpha.value},
                {"bound", to_string(t.alpha.bound)}};
  j["kl"] = t.kl;
  j["confidence"] = t.confidence;
  j["ratios"] = ratios_json(t.ratios);
  j["adjusted_ratios"] = ratios_json(t.adjusted_ratios);
  return j;
}

}  // namespace

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  return SplitRng(seed).split("decode").split(index)();
}

Evaluation evaluate(const ModelParams& params, const Vocab& vocab,
                    const std::vector<SceneSpec>& scenes, const std::vector<TokenId>& prompt,
                    const CooccurrenceStats& train_stats, const EvalOptions& options) {
  options.decoder.validate();
  require(!scenes.empty(), ErrorCode::kInvalidArgument, "evaluate: no scenes");
  Evaluation ev;
  ev.scenes.resize(scenes.size());
  parallel_for(scenes.size(), options.jobs, [&](std::size_t i) {
    DecoderConfig config = options.decoder;
    config.seed = scene_seed(options.decoder.seed, i);
    ev.scenes[i] = decode_scene(params, vocab, scenes[i], prompt, config);
  });
  ev.report = summarize(ev.scenes, scenes, vocab, train_stats, options);
  return ev;
}

MetricsReport summarize(const std::vector<SceneResult>& results,
                        const std::vector<SceneSpec>& scenes, const Vocab& vocab,
                        const CooccurrenceStats& train_stats, const EvalOptions& options) {
  std::vector<Caption> captions;
  std::vector<std::vector<Anchor>> anchors;
  for (const SceneResult& r : results) {
    captions.push_back(r.caption);
    anchors.push_back(r.decode.anchors);
  }
  const ChairMetrics chair = chair_metrics(captions, scenes, vocab);
  MetricsReport m;
  m.C_S = chair.sentence;
  m.C_I = chair.instance;
  m.R = chair.recall;
  m.Len = chair.length;
  m.cog = cog_metric(captions, scenes, vocab, train_stats, options.cog_threshold).rate;
  for (const CooccurrencePair& p : options.pairs) {
    m.pair_hallucination[p.source + "->" + p.partner] =
        pair_hallucination_rate(captions, scenes, vocab, p.source, p.partner);
    m.pair_hallucination[p.partner + "->" + p.source] =
        pair_hallucination_rate(captions, scenes, vocab, p.partner, p.source);
  }
  m.same_top_token_rate = same_top_token_diagnostic(anchors, scenes, vocab).rate;

  std::size_t stopped = 0, steps = 0, ratio_steps = 0;
  double delta = 0.0, r_v = 0.0, gap = 0.0, confidence = 0.0;
  for (const SceneResult& r : results) {
    if (r.decode.stop == StopReason::kEarlyStop) {
      ++stopped;
      if (r.rerun_length) {
        delta += static_cast<double>(*r.rerun_length) - static_cast<double>(r.caption.size());
      }
    }
    for (const StepTrace& t : r.decode.steps) {
      ++steps;
      confidence += t.confidence;
      if (t.adjusted_ratios.defined) {
        ++ratio_steps;
        r_v += t.adjusted_ratios.visual;
        gap += t.adjusted_ratios.gap;
      }
    }
  }
  m.es_rate = 100.0 * static_cast<double>(stopped) / static_cast<double>(results.size());
  if (stopped > 0) m.es_mean_delta_len = delta / static_cast<double>(stopped);
  if (ratio_steps > 0) {
    m.mean_r_v = r_v / static_cast<double>(ratio_steps);
    m.mean_gap = gap / static_cast<double>(ratio_steps);
  }
  if (steps > 0) m.mean_confidence = confidence / static_cast<double>(steps);
  return m;
}

void AblationGrid::validate() const {
  require(!modes.empty() && !alpha_max.empty() && !epsilon.empty() && !norms.empty(),
          ErrorCode::kInvalidArgument, "ablation grid: every axis needs at least one value");
  for (double a : alpha_max) {
    require(std::isfinite(a) && a >= 0.0, ErrorCode::kInvalidArgument,
            "ablation grid: alpha_max must be finite and >= 0");
  }
  for (double e : epsilon) {
    require(e >= 0.0 && e <= 1.0, ErrorCode::kInvalidArgument,
            "ablation grid: epsilon must lie in [0, 1]");
  }
}

std::size_t AblationGrid::cells() const {
  return modes.size() * alpha_max.size() * epsilon.size() * norms.size();
}

std::vector<AblationCell> run_ablation(const ModelParams& params, const Vocab& vocab,
                                       const std::vector<SceneSpec>& scenes,
                                       const std::vector<TokenId>& prompt,
                                       const CooccurrenceStats& train_stats,
                                       const EvalOptions& base, const AblationGrid& grid) {
  grid.validate();
  std::vector<AblationCell> cells;
  for (DecodeMode mode : grid.modes) {
    for (double a : grid.alpha_max) {
      for (double e : grid.epsilon) {
        for (InfluenceNorm norm : grid.norms) {
          EvalOptions opt = base;
          opt.decoder.mode = mode;
          opt.decoder.alpha_max = a;
          opt.decoder.epsilon = e;
          opt.decoder.norm = norm;
          AblationCell cell{mode, a, e, norm, {}};
          cell.report = evaluate(params, vocab, scenes, prompt, train_stats, opt).report;
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

std::string sweep_csv(const std::vector<AblationCell>& cells) {
  std::vector<std::string> pair_names;
  for (const AblationCell& c : cells) {
    for (const auto& [name, rate] : c.report.pair_hallucination) {
      if (std::find(pair_names.begin(), pair_names.end(), name) == pair_names.end()) {
        pair_names.push_back(name);
      }
    }
  }
  std::ostringstream out;
  out << "mode,alpha_max,epsilon,norm,C_S,C_I,R,Len,cog";
  for (const std::string& name : pair_names) out << ",pair_hallucination[" << name << "]";
  out << ",same_top_token_rate,es_rate,es_mean_delta_len,mean_r_v,mean_gap,mean_confidence\n";
  for (const AblationCell& c : cells) {
    const MetricsReport& m = c.report;
    out << to_string(c.mode) << ',' << csv_number(c.alpha_max) << ',' << csv_number(c.epsilon)
        << ',' << to_string(c.norm) << ',' << csv_number(m.C_S) << ',' << csv_number(m.C_I)
        << ',' << csv_number(m.R) << ',' << csv_number(m.Len) << ',' << csv_number(m.cog);
    for (const std::string& name : pair_names) {
      auto it = m.pair_hallucination.find(name);
      out << ',' << (it == m.pair_hallucination.end() ? "" : csv_number(it->second));
    }
    out << ',' << csv_number(m.same_top_token_rate) << ',' << csv_number(m.es_rate) << ','
        << csv_number(m.es_mean_delta_len) << ',' << csv_number(m.mean_r_v) << ','
        << csv_number(m.mean_gap) << ',' << csv_number(m.mean_confidence) << '\n';
  }
  return out.str();
}

std::string trace_jsonl(const std::vector<SceneSpec>& scenes,
                        const std::vector<SceneResult>& results, const Vocab& vocab) {
  require(scenes.size() == results.size(), ErrorCode::kInvalidArgument,
          "trace_jsonl: one result per scene expected");
  std::string out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const StepTrace& t : results[i].decode.steps) {
      out += step_json(scenes[i].id, t, vocab).dump() + "\n";
    }
    if (results[i].decode.stop_probe) {
      out += step_json(scenes[i].id, *results[i].decode.stop_probe, vocab).dump() + "\n";
    }
  }
  return out;
}

}  // namespace gacd
