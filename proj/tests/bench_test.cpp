// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "doctest.h"
#include "gacd/bench.hpp"
#include "gacd/error.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace gacd;
using gacd::testing::tiny_lab;

namespace {

std::vector<SceneSpec> scenes(std::size_t n) {
  const auto& t = tiny_lab().data.test;
  return {t.begin(), t.begin() + static_cast<std::ptrdiff_t>(std::min(n, t.size()))};
}

EvalOptions options(DecodeMode mode) {
  EvalOptions o;
  o.decoder.mode = mode;
  o.decoder.max_len = 24;
  o.pairs = tiny_lab().corpus.pairs;
  return o;
}

Evaluation run(const std::vector<SceneSpec>& s, const EvalOptions& o) {
  const auto& lab = tiny_lab();
  return evaluate(lab.params, lab.vocab, s, lab.prompt, lab.stats, o);
}

}  // namespace

TEST_CASE("reports do not depend on the job count") {
  const auto s = scenes(16);
  EvalOptions o = options(DecodeMode::kFull);
  o.decoder.greedy = false;
  o.decoder.temperature = 1.5;
  const Evaluation one = run(s, o);
  o.jobs = 4;
  const Evaluation four = run(s, o);
  CHECK(one.report.to_json() == four.report.to_json());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(one.scenes[i].caption == four.scenes[i].caption);
}

TEST_CASE("baseline evaluation equals plain greedy decoding") {
  const auto& lab = tiny_lab();
  const auto s = scenes(10);
  const Evaluation ev = run(s, options(DecodeMode::kBaseline));
  std::vector<Caption> caps;
  for (const SceneSpec& sc : s) {
    DecoderConfig c;
    c.mode = DecodeMode::kBaseline;
    c.max_len = 24;
    caps.push_back(decode(lab.params, lab.vocab, sc.features, lab.prompt, c).caption(lab.vocab));
  }
  const ChairMetrics m = chair_metrics(caps, s, lab.vocab);
  CHECK(ev.report.C_S == m.sentence);
  CHECK(ev.report.C_I == m.instance);
  CHECK(ev.report.R == m.recall);
  CHECK(ev.report.Len == m.length);
  CHECK(ev.report.es_rate == 0.0);
  CHECK_FALSE(ev.report.es_mean_delta_len.has_value());
  CHECK(ev.report.pair_hallucination.count("chair->table") == 1);
  CHECK(ev.report.pair_hallucination.count("table->chair") == 1);
}

TEST_CASE("early stopping: Len(full) <= Len(va+cr) and the rerun delta is consistent") {
  const auto s = scenes(20);
  EvalOptions full = options(DecodeMode::kFull);
  full.decoder.epsilon = 1.0;
  const Evaluation f = run(s, full);
  const Evaluation cr = run(s, options(DecodeMode::kObjectAware));
  CHECK(f.report.Len <= cr.report.Len);
  CHECK(f.report.C_S <= cr.report.C_S);
  REQUIRE(f.report.es_rate > 0.0);
  double delta = 0.0;
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (f.scenes[i].decode.stop != StopReason::kEarlyStop) continue;
    ++stopped;
    REQUIRE(f.scenes[i].rerun_length.has_value());
    CHECK(*f.scenes[i].rerun_length == cr.scenes[i].caption.size());
    delta += static_cast<double>(cr.scenes[i].caption.size() - f.scenes[i].caption.size());
  }
  CHECK(f.report.es_rate == doctest::Approx(100.0 * stopped / s.size()));
  CHECK(*f.report.es_mean_delta_len == doctest::Approx(delta / stopped));
}

TEST_CASE("ablation grid cardinality, order and CSV") {
  const auto& lab = tiny_lab();
  AblationGrid g{{DecodeMode::kBaseline, DecodeMode::kFull}, {1.0, 3.0}, {0.05, 0.07},
                 {InfluenceNorm::kL1}};
  CHECK(g.cells() == 8);
  const auto s = scenes(4);
  const auto cells = run_ablation(lab.params, lab.vocab, s, lab.prompt, lab.stats,
                                  options(DecodeMode::kBaseline), g);
  REQUIRE(cells.size() == 8);
  CHECK(cells[0].mode == DecodeMode::kBaseline);
  CHECK(cells[1].epsilon == 0.07);
  CHECK(cells[2].alpha_max == 3.0);
  CHECK(cells[4].mode == DecodeMode::kFull);
  // Baseline ignores alpha_max and epsilon.
  for (int i = 1; i < 4; ++i) CHECK(cells[i].report == cells[0].report);
  const std::string csv = sweep_csv(cells);
  std::istringstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 9);
  CHECK(lines[0].rfind("mode,alpha_max,epsilon,norm,C_S,C_I,R,Len,cog,", 0) == 0);
  const auto commas = [](const std::string& l) { return std::count(l.begin(), l.end(), ','); };
  for (const auto& l : lines) CHECK(commas(l) == commas(lines[0]));
  CHECK(lines[1].rfind("baseline,1,0.05,l1,", 0) == 0);

  const auto again = run_ablation(lab.params, lab.vocab, s, lab.prompt, lab.stats,
                                  options(DecodeMode::kBaseline), g);
  CHECK(sweep_csv(again) == csv);
}

TEST_CASE("invalid grids are rejected") {
  AblationGrid g{{}, {1.0}, {0.05}, {InfluenceNorm::kL1}};
  CHECK_THROWS_AS(g.validate(), Error);
  g = {{DecodeMode::kFull}, {-1.0}, {0.05}, {InfluenceNorm::kL1}};
  CHECK_THROWS_AS(g.validate(), Error);
  g = {{DecodeMode::kFull}, {1.0}, {2.0}, {InfluenceNorm::kL1}};
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("trace export has one line per step plus early-stop probes") {
  const auto& lab = tiny_lab();
  const auto s = scenes(5);
  EvalOptions o = options(DecodeMode::kFull);
  o.decoder.epsilon = 1.0;
  const Evaluation ev = run(s, o);
  const std::string text = trace_jsonl(s, ev.scenes, lab.vocab);
  std::size_t expected = 0;
  for (const auto& r : ev.scenes) expected += r.decode.steps.size() + (r.decode.stop_probe ? 1 : 0);
  std::istringstream in(text);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) {
    const auto j = nlohmann::json::parse(l);
    CHECK(j.contains("scene_id"));
    CHECK(j.contains("alpha"));
    CHECK(j["influence"]["visual"].is_array());
    ++lines;
  }
  CHECK(lines == expected);
}

TEST_CASE("evaluate rejects an empty scene set") {
  CHECK_THROWS_AS(run({}, options(DecodeMode::kBaseline)), Error);
}
