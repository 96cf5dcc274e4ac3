// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "gacd/gacd.h"

#include <exception>
#include <memory>
#include <new>
#include <string>

#include "gacd/error.hpp"
#include "gacd/experiment.hpp"

struct gacd_config {
  gacd::ExperimentConfig config;
  std::string scratch;
};

struct gacd_model {
  gacd::ModelParams params;
  gacd::Vocab vocab;
};

struct gacd_reports {
  std::vector<std::string> modes, json, paths;
};

struct gacd_caption {
  std::string text;
  std::string stop;
  std::size_t steps = 0;
};

namespace {

thread_local std::string last_error;

gacd_status to_status(gacd::ErrorCode code) {
  switch (code) {
    case gacd::ErrorCode::kInvalidArgument: return GACD_ERR_INVALID_ARGUMENT;
    case gacd::ErrorCode::kShapeMismatch: return GACD_ERR_SHAPE;
    case gacd::ErrorCode::kIo: return GACD_ERR_IO;
    case gacd::ErrorCode::kFormat: return GACD_ERR_FORMAT;
    case gacd::ErrorCode::kDiverged: return GACD_ERR_DIVERGED;
    case gacd::ErrorCode::kState: return GACD_ERR_STATE;
  }
  return GACD_ERR_INTERNAL;
}

template <class Fn>
gacd_status guarded(Fn fn) {
  try {
    last_error.clear();
    fn();
    return GACD_OK;
  } catch (const gacd::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return GACD_ERR_INTERNAL;
}

void require_arg(const void* p, const char* name) {
  gacd::require(p != nullptr, gacd::ErrorCode::kInvalidArgument,
                std::string(name) + " must not be null");
}

}  // namespace

extern "C" {

const char* gacd_status_name(gacd_status status) {
  switch (status) {
    case GACD_OK: return "ok";
    case GACD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GACD_ERR_SHAPE: return "shape_mismatch";
    case GACD_ERR_IO: return "io";
    case GACD_ERR_FORMAT: return "format";
    case GACD_ERR_DIVERGED: return "diverged";
    case GACD_ERR_STATE: return "state";
    case GACD_ERR_INTERNAL: return "internal";
  }
  return "internal";
}

const char* gacd_last_error(void) { return last_error.c_str(); }

const char* gacd_version(void) { return "0.1.0"; }

gacd_status gacd_config_new(gacd_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = new gacd_config();
  });
}

gacd_status gacd_config_load(const char* path, gacd_config** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    auto c = std::make_unique<gacd_config>();
    c->config = gacd::ExperimentConfig::load(path);
    *out = c.release();
  });
}

gacd_status gacd_config_parse(const char* text, gacd_config** out) {
  return guarded([&] {
    require_arg(text, "text");
    require_arg(out, "out");
    auto c = std::make_unique<gacd_config>();
    c->config = gacd::ExperimentConfig::parse(text);
    *out = c.release();
  });
}

void gacd_config_free(gacd_config* config) { delete config; }

gacd_status gacd_config_set(gacd_config* config, const char* key, const char* value) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(key, "key");
    require_arg(value, "value");
    config->config.set(key, value);
  });
}

gacd_status gacd_config_get(gacd_config* config, const char* key, const char** value) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(key, "key");
    require_arg(value, "value");
    config->scratch = config->config.get(key);
    *value = config->scratch.c_str();
  });
}

gacd_status gacd_config_serialize(gacd_config* config, const char** text) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(text, "text");
    config->scratch = config->config.serialize();
    *text = config->scratch.c_str();
  });
}

gacd_status gacd_config_validate(const gacd_config* config) {
  return guarded([&] {
    require_arg(config, "config");
    config->config.validate();
  });
}

gacd_status gacd_config_out_dir(gacd_config* config, const char** path) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(path, "path");
    config->scratch = config->config.resolved_out_dir();
    *path = config->scratch.c_str();
  });
}

size_t gacd_config_key_count(void) { return gacd::ExperimentConfig::keys().size(); }

const char* gacd_config_key(size_t index) {
  const auto& keys = gacd::ExperimentConfig::keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

gacd_status gacd_gen(const gacd_config* config, size_t* train_scenes, size_t* test_scenes) {
  return guarded([&] {
    require_arg(config, "config");
    const gacd::GenSummary s = gacd::cmd_gen(config->config);
    if (train_scenes) *train_scenes = s.train;
    if (test_scenes) *test_scenes = s.test;
  });
}

gacd_status gacd_train(const gacd_config* config, size_t* epochs, double* final_loss,
                       int* reached_plateau) {
  return guarded([&] {
    require_arg(config, "config");
    const gacd::TrainSummary s = gacd::cmd_train(config->config);
    if (epochs) *epochs = s.loss_curve.size();
    if (final_loss) *final_loss = s.loss_curve.empty() ? 0.0 : s.loss_curve.back();
    if (reached_plateau) *reached_plateau = s.reached_plateau ? 1 : 0;
  });
}

gacd_status gacd_eval(const gacd_config* config, gacd_reports** out) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(out, "out");
    const gacd::EvalSummary s = gacd::cmd_eval(config->config);
    auto r = std::make_unique<gacd_reports>();
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      r->modes.push_back(gacd::to_string(s.reports[i].first));
      r->json.push_back(s.reports[i].second.to_json());
      r->paths.push_back(s.report_paths[i]);
    }
    *out = r.release();
  });
}

gacd_status gacd_sweep(const gacd_config* config, size_t* rows, const char** csv_path) {
  return guarded([&] {
    require_arg(config, "config");
    const auto cells = gacd::cmd_sweep(config->config);
    if (rows) *rows = cells.size();
    if (csv_path) {
      static thread_local std::string path;
      path = config->config.resolved_out_dir() + "/sweep/sweep.csv";
      *csv_path = path.c_str();
    }
  });
}

size_t gacd_reports_count(const gacd_reports* reports) {
  return reports ? reports->modes.size() : 0;
}

const char* gacd_reports_mode(const gacd_reports* reports, size_t index) {
  return reports && index < reports->modes.size() ? reports->modes[index].c_str() : nullptr;
}

const char* gacd_reports_json(const gacd_reports* reports, size_t index) {
  return reports && index < reports->json.size() ? reports->json[index].c_str() : nullptr;
}

const char* gacd_reports_path(const gacd_reports* reports, size_t index) {
  return reports && index < reports->paths.size() ? reports->paths[index].c_str() : nullptr;
}

void gacd_reports_free(gacd_reports* reports) { delete reports; }

gacd_status gacd_model_load(const char* checkpoint_path, const char* vocab_path,
                            gacd_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(vocab_path, "vocab_path");
    require_arg(out, "out");
    auto m = std::make_unique<gacd_model>();
    m->params = gacd::ModelParams::load(checkpoint_path);
    m->vocab = gacd::Vocab::load(vocab_path);
    gacd::require(m->vocab.size() <= m->params.config.vocab_size, gacd::ErrorCode::kFormat,
                  "vocabulary is larger than the checkpoint's output layer");
    *out = m.release();
  });
}

void gacd_model_free(gacd_model* model) { delete model; }

gacd_status gacd_decode(const gacd_model* model, const gacd_config* config, const char* mode,
                        const double* features, size_t rows, size_t cols, gacd_caption** out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(config, "config");
    require_arg(mode, "mode");
    require_arg(out, "out");
    if (rows > 0) require_arg(features, "features");
    gacd::Tensor f({rows, cols});
    for (std::size_t i = 0; i < rows * cols; ++i) f[i] = features[i];
    const gacd::ExperimentConfig& c = config->config;
    gacd::DecoderConfig dc = c.decoder;
    dc.mode = gacd::parse_mode(mode);
    dc.seed = gacd::scene_seed(gacd::SplitRng(c.seed).split("eval")(), 0);
    for (const std::string& t : c.terminals) dc.terminals.push_back(model->vocab.id(t));
    const gacd::DecodeResult r = gacd::decode(model->params, model->vocab, f,
                                              model->vocab.encode(c.corpus.prompt), dc);
    auto cap = std::make_unique<gacd_caption>();
    for (const std::string& w : model->vocab.decode(r.caption(model->vocab))) {
      if (!cap->text.empty()) cap->text += ' ';
      cap->text += w;
    }
    cap->stop = gacd::to_string(r.stop);
    cap->steps = r.steps.size();
    *out = cap.release();
  });
}

const char* gacd_caption_text(const gacd_caption* caption) {
  return caption ? caption->text.c_str() : nullptr;
}

const char* gacd_caption_stop(const gacd_caption* caption) {
  return caption ? caption->stop.c_str() : nullptr;
}

size_t gacd_caption_steps(const gacd_caption* caption) { return caption ? caption->steps : 0; }

void gacd_caption_free(gacd_caption* caption) { delete caption; }

}  // extern "C"
