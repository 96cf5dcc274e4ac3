// Copyright 2026 The GACD Lab Authors
// SPDX-License-Identifier: Apache-2.0

// gacd: corpus generation, training, evaluation and sweeps.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. Failures print one
// line to stderr: "error: <code>: <message>".

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gacd/gacd.h"

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct Failure {
  int exit_code;
  std::string code;
  std::string message;
};

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> out_dir;
  std::optional<std::string> seed;
  std::optional<std::string> jobs;
  std::optional<std::string> mode;
  std::optional<std::string> alpha_max;
  std::optional<std::string> epsilon;
  std::optional<std::string> norm;
  std::optional<std::string> max_len;
  std::optional<std::string> trace_out;
};

class Config {
 public:
  Config() { check(gacd_config_new(&handle_), kUsage); }
  explicit Config(const std::string& path) { check(gacd_config_load(path.c_str(), &handle_), kUsage); }
  ~Config() { gacd_config_free(handle_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void set(const std::string& key, const std::string& value) {
    check(gacd_config_set(handle_, key.c_str(), value.c_str()), kUsage);
  }
  gacd_config* get() { return handle_; }

  static void check(gacd_status status, int exit_code) {
    if (status != GACD_OK) throw Failure{exit_code, gacd_status_name(status), gacd_last_error()};
  }

 private:
  gacd_config* handle_ = nullptr;
};

// Flags win over the config file; --set applies before the named flags.
void apply(Config& config, const Options& o, bool sweep) {
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Failure{kUsage, "usage", "--set expects key=value, got '" + kv + "'"};
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.out_dir) config.set("paths.out_dir", *o.out_dir);
  if (o.seed) config.set("seed", *o.seed);
  if (o.jobs) config.set("eval.jobs", *o.jobs);
  if (o.max_len) config.set("decoder.max_len", *o.max_len);
  if (o.trace_out) config.set("eval.trace_out", *o.trace_out);
  if (sweep) {
    if (o.mode) config.set("sweep.modes", *o.mode);
    if (o.alpha_max) config.set("sweep.alpha_max", *o.alpha_max);
    if (o.epsilon) config.set("sweep.epsilon", *o.epsilon);
    if (o.norm) config.set("sweep.norms", *o.norm);
  } else {
    if (o.mode) config.set("eval.modes", *o.mode);
    if (o.alpha_max) config.set("decoder.alpha_max", *o.alpha_max);
    if (o.epsilon) config.set("decoder.epsilon", *o.epsilon);
    if (o.norm) config.set("decoder.norm", *o.norm);
  }
  Config::check(gacd_config_validate(config.get()), kUsage);
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "Experiment config file (key = value, [sections])");
  cmd->add_option("--set", o.sets, "Override one config key, e.g. --set train.epochs=5")
      ->allow_extra_args(false);
  cmd->add_option("--out-dir", o.out_dir, "Output directory (default $GACD_OUTPUT_DIR or gacd_out)");
  cmd->add_option("--seed", o.seed, "Root seed");
}

void add_decoder(CLI::App* cmd, Options& o, bool sweep) {
  const char* list = sweep ? " (comma-separated grid)" : "";
  cmd->add_option("--mode", o.mode,
                  std::string("Decoding modes: baseline, va, va+cr, full") + list);
  cmd->add_option("--alpha-max", o.alpha_max, std::string("Upper bound on alpha") + list);
  cmd->add_option("--epsilon", o.epsilon, std::string("Early-stop threshold") + list);
  cmd->add_option("--norm", o.norm, std::string("Influence norm: l1, l2, linf") + list);
  cmd->add_option("--max-len", o.max_len, "Maximum caption length");
  cmd->add_option("--jobs", o.jobs, "Parallel decoding workers");
  if (!sweep) cmd->add_option("--trace-out", o.trace_out, "Write per-step traces (JSONL)");
}

int run(const std::string& name, const Options& o) {
  Config config = o.config_path.empty() ? Config() : Config(o.config_path);
  apply(config, o, name == "sweep");
  if (name == "gen") {
    size_t train = 0, test = 0;
    Config::check(gacd_gen(config.get(), &train, &test), kRuntime);
    const char* dir = nullptr;
    Config::check(gacd_config_out_dir(config.get(), &dir), kRuntime);
    std::printf("generated %zu train and %zu test scenes under %s\n", train, test, dir);
  } else if (name == "train") {
    size_t epochs = 0;
    double loss = 0.0;
    int plateau = 0;
    Config::check(gacd_train(config.get(), &epochs, &loss, &plateau), kRuntime);
    std::printf("trained %zu epochs, final loss %.6f, plateau %s\n", epochs, loss,
                plateau ? "yes" : "no");
  } else if (name == "eval") {
    gacd_reports* reports = nullptr;
    Config::check(gacd_eval(config.get(), &reports), kRuntime);
    for (size_t i = 0; i < gacd_reports_count(reports); ++i) {
      std::printf("%s: %s\n", gacd_reports_mode(reports, i), gacd_reports_path(reports, i));
    }
    gacd_reports_free(reports);
  } else {
    size_t rows = 0;
    const char* path = nullptr;
    Config::check(gacd_sweep(config.get(), &rows, &path), kRuntime);
    std::printf("%zu sweep rows: %s\n", rows, path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based influence-aware decoding lab"};
  app.require_subcommand(1);
  Options opts;
  CLI::App* gen = app.add_subcommand("gen", "Generate the synthetic corpus");
  CLI::App* train = app.add_subcommand("train", "Train the toy model on the corpus");
  CLI::App* eval = app.add_subcommand("eval", "Decode the test scenes and write metric reports");
  CLI::App* sweep = app.add_subcommand("sweep", "Evaluate a grid of decoder settings");
  for (CLI::App* cmd : {gen, train, eval, sweep}) add_common(cmd, opts);
  add_decoder(eval, opts, false);
  add_decoder(sweep, opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, opts);
  } catch (const Failure& f) {
    std::string msg = f.message;
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "error: %s: %s\n", f.code.c_str(), msg.c_str());
    return f.exit_code;
  }
}
