// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "infomax3d/checkpoint.hpp"
#include "infomax3d/config.hpp"
#include "infomax3d/kernels.hpp"
#include "infomax3d/molgraph.hpp"
#include "infomax3d/selftest.hpp"
#include "infomax3d/synthetic.hpp"
#include "infomax3d/training.hpp"

namespace infomax3d {

namespace {

namespace fs = std::filesystem;

//! Bad input detected before any work started.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::string              config;
  std::vector<std::string> sets;
  std::string              data;
  std::string              val_data;
  std::string              test_data;
  std::string              out;
  std::string              checkpoint;
  std::string              resume;
  std::string              target;
  std::string              loss;
  std::string              tau;
  std::string              num_conformers;
  std::string              batch_size;
  std::string              seed;
  std::string              max_epochs;
  bool                     rand_init      = false;
  bool                     classification = false;
  double                   val_fraction   = 0.1;
  std::size_t              num_molecules  = 256;
  std::string              keys_for       = "pretrain";
};

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file '" + path + "'");
}

//! Exclusive marker in the output directory, removed on scope exit.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw std::runtime_error("output directory '" + dir.string() +
                                 "' is in use by another run; pick another --out or remove " + path_.string() +
                                 " if that run is gone");
      }
      throw std::runtime_error("cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  OutputLock(const OutputLock&)            = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

Dataset load_dataset(const std::string& path, const char* flag) {
  require_file(path, flag);
  Dataset ds = parse_dataset(path);
  featurize_all(ds);
  return ds;
}

//! Resolves the configuration: defaults, then `base` keys, then the config
//! file, then --set, then dedicated flags.
ModelConfig resolve_config(ModelConfig config, const KeyValues& base, const Options& o) {
  KeyValues explicit_keys = base;
  if (!o.config.empty()) {
    require_file(o.config, "--config");
    for (const auto& [k, v] : read_key_value_file(o.config)) explicit_keys[k] = v;
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    const KeyValues kv = parse_key_value_text(s);
    for (const auto& [k, v] : kv) explicit_keys[k] = v;
  }
  const std::pair<const std::string*, const char*> flags[] = {
      {&o.target, "train.target"},   {&o.loss, "loss.kind"},         {&o.tau, "loss.tau"},
      {&o.num_conformers, "loss.c"}, {&o.batch_size, "train.batch_size"}, {&o.seed, "train.seed"},
      {&o.max_epochs, "train.max_epochs"}};
  for (const auto& [value, key] : flags) {
    if (!value->empty()) explicit_keys[key] = *value;
  }
  if (o.classification) explicit_keys["train.classification"] = "true";
  apply_key_values(config, explicit_keys);
  const bool multi2d = config.loss.kind == LossKind::kMulti2dSimAll || config.loss.kind == LossKind::kMulti2dSimMax;
  if (multi2d && !explicit_keys.contains("net2d.num_outputs")) {
    config.net2d.num_outputs = static_cast<std::size_t>(config.loss.c);
  }
  config.net2d.validate();
  config.net3d.validate();
  config.loss.validate();
  config.train.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void echo_config(const fs::path& dir, const ModelConfig& config, KeyValues run) {
  KeyValues all = to_key_values(config);
  all.merge(run);
  write_text(dir / "config.txt", format_key_values(all));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

//! Appends epoch records to metrics.jsonl and reports progress.
class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, std::ostream& err) : file_(path, std::ios::trunc), err_(err) {
    if (!file_) throw std::runtime_error("cannot write " + path.string());
  }
  void epoch(const EpochRecord& r) {
    file_ << to_json_line(r) << '\n' << std::flush;
    err_ << "epoch " << r.epoch << " step " << r.step << " train " << format_double(r.train_loss) << " val "
         << format_double(r.val_loss);
    if (r.val_metric) err_ << " metric " << format_double(*r.val_metric);
    err_ << (r.improved ? " *" : "") << '\n';
  }
  void summary(nlohmann::ordered_json j) {
    file_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream file_;
  std::ostream& err_;
};

std::pair<Dataset, Dataset> pretrain_data(const Options& o, std::uint64_t seed) {
  Dataset train = load_dataset(o.data, "--data");
  if (!o.val_data.empty()) return {std::move(train), load_dataset(o.val_data, "--val-data")};
  if (!(o.val_fraction > 0.0 && o.val_fraction < 1.0)) throw UsageError("--val-fraction must be in (0, 1)");
  const std::size_t n     = train.size();
  const auto        n_val = static_cast<std::size_t>(o.val_fraction * static_cast<double>(n) + 1e-9);
  if (n_val < 2 || n - n_val < 2) {
    throw UsageError("--data has " + std::to_string(n) + " molecules, too few to hold out a validation split; pass --val-data");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  Dataset val, rest;
  val.target_names = rest.target_names = train.target_names;
  for (std::size_t i = 0; i < n; ++i) (i < n_val ? val : rest).molecules.push_back(train.molecules[order[i]]);
  rest.target_stats = val.target_stats = compute_target_stats(rest);
  return {std::move(rest), std::move(val)};
}

int cmd_pretrain(const Options& o, bool distance, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw UsageError("--out is required");
  ModelConfig defaults;
  defaults.train = TrainConfig::pretraining();
  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) {
    require_file(o.resume, "--resume");
    resume = read_checkpoint(o.resume);
    defaults = config_from_checkpoint(*resume);
  }
  KeyValues base;
  if (distance) base["loss.kind"] = "distance_mse";
  ModelConfig config = resolve_config(defaults, base, o);
  if (distance && config.loss.kind != LossKind::kDistanceMse) {
    throw UsageError("pretrain-distance needs loss.kind = distance_mse");
  }
  if (!distance && config.loss.kind == LossKind::kDistanceMse) {
    throw UsageError("loss.kind = distance_mse belongs to the pretrain-distance command");
  }
  if (distance && resume) throw UsageError("--resume is only supported by pretrain");
  auto [train, val] = pretrain_data(o, config.train.seed);

  const fs::path dir(o.out);
  OutputLock     lock(dir);
  echo_config(dir, config,
              {{"run.command", distance ? "pretrain-distance" : "pretrain"},
               {"run.data", o.data},
               {"run.val_data", o.val_data.empty() ? "(held out from run.data)" : o.val_data},
               {"run.val_fraction", o.val_data.empty() ? format_double(o.val_fraction) : "-"},
               {"run.resume", o.resume.empty() ? "-" : o.resume}});
  MetricsWriter metrics(dir / "metrics.jsonl", err);
  RunHooks      hooks;
  hooks.on_epoch      = [&](const EpochRecord& r) { metrics.epoch(r); };
  hooks.on_checkpoint = [&](const Checkpoint& c) { write_checkpoint(dir / "last.ckpt", c); };

  const PretrainResult result =
      distance ? pretrain_distance(config, train, val, hooks) : pretrain(config, train, val, hooks, resume ? &*resume : nullptr);
  write_checkpoint(dir / "best.ckpt", result.best);
  write_checkpoint(dir / "last.ckpt", result.last);
  std::string trace;
  for (double v : result.loss_trace) trace += format_double(v) + '\n';
  write_text(dir / "loss_trace.txt", trace);

  nlohmann::ordered_json s;
  s["summary"]       = true;
  s["best_epoch"]    = result.best.state.best_epoch;
  s["best_val_loss"] = result.best.state.best_val;
  s["epochs"]        = result.last.state.epoch;
  s["steps"]         = result.last.state.step;
  metrics.summary(s);
  out << s.dump() << '\n';
  return kExitOk;
}

int cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.checkpoint.empty() && !o.rand_init) throw UsageError("finetune needs --checkpoint or --rand-init");
  std::optional<Checkpoint> pretrained;
  KeyValues                 base;
  if (!o.checkpoint.empty()) {
    require_file(o.checkpoint, "--checkpoint");
    pretrained = read_checkpoint(o.checkpoint);
    for (const auto& [k, v] : pretrained->config) {
      if (k.starts_with("net2d.")) base[k] = v;
    }
  }
  ModelConfig defaults;
  defaults.train     = TrainConfig::finetuning();
  ModelConfig config = resolve_config(defaults, base, o);
  if (config.train.target.empty()) throw UsageError("finetune needs --target");

  Dataset      all = load_dataset(o.data, "--data");
  DatasetSplit split;
  if (o.val_data.empty() != o.test_data.empty()) throw UsageError("pass both --val-data and --test-data or neither");
  if (o.val_data.empty()) {
    split = split_random(all, SplitRatios{}, config.train.seed);
  } else {
    split.train = std::move(all);
    split.val   = load_dataset(o.val_data, "--val-data");
    split.test  = load_dataset(o.test_data, "--test-data");
  }
  static_cast<void>(split.train.target_index(config.train.target));  // throws naming the known targets

  const fs::path dir(o.out);
  OutputLock     lock(dir);
  echo_config(dir, config,
              {{"run.command", "finetune"},
               {"run.data", o.data},
               {"run.val_data", o.val_data.empty() ? "(random 80/10/10 split of run.data)" : o.val_data},
               {"run.test_data", o.test_data.empty() ? "(random 80/10/10 split of run.data)" : o.test_data},
               {"run.checkpoint", o.checkpoint.empty() ? "-" : o.checkpoint},
               {"run.rand_init", o.rand_init ? "true" : "false"}});
  MetricsWriter metrics(dir / "metrics.jsonl", err);
  RunHooks      hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { metrics.epoch(r); };

  const FinetuneReport report = finetune(config, o.rand_init ? nullptr : &*pretrained, split, hooks);
  write_checkpoint(dir / "best.ckpt", report.best);

  nlohmann::ordered_json s;
  s["summary"]    = true;
  s["target"]     = config.train.target;
  s["init"]       = o.rand_init ? "rand" : "pretrained";
  s["best_epoch"] = report.best_epoch;
  s["train"]      = report.train;
  s["val"]        = report.val;
  s["test"]       = report.test;
  metrics.summary(s);
  out << s.dump() << '\n';
  return kExitOk;
}

int cmd_embed(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  require_file(o.checkpoint, "--checkpoint");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const Dataset    ds   = load_dataset(o.data, "--data");
  const fs::path   dir(o.out);
  OutputLock       lock(dir);
  write_text(dir / "embeddings.tsv", format_embeddings(ds, embeddings(ckpt, ds)));
  out << "wrote " << ds.size() << " embeddings to " << (dir / "embeddings.tsv").string() << '\n';
  return kExitOk;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  const auto    results = run_selftest(o.seed.empty() ? 0 : std::stoull(o.seed));
  std::size_t   failed  = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    failed += r.passed ? 0 : 1;
  }
  out << (results.size() - failed) << "/" << results.size() << " properties hold\n";
  return failed == 0 ? kExitOk : kExitRunError;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  SyntheticOptions opt;
  opt.num_molecules = o.num_molecules;
  opt.seed          = o.seed.empty() ? 0 : std::stoull(o.seed);
  const Dataset ds  = make_synthetic_dataset(opt);
  if (const fs::path parent = fs::path(o.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_dataset(o.out, ds);
  out << "wrote " << ds.size() << " molecules to " << o.out << '\n';
  return kExitOk;
}

int cmd_keys(const Options& o, std::ostream& out) {
  ModelConfig config;
  if (o.keys_for == "finetune") {
    config.train = TrainConfig::finetuning();
  } else {
    config.train = TrainConfig::pretraining();
  }
  out << format_key_values(to_key_values(config));
  return kExitOk;
}

void add_config_flags(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "Key-value config file (key = value per line)");
  app->add_option("--set", o.sets, "Override one config key, key=value (repeatable)");
  app->add_option("--loss", o.loss, "loss.kind: ntxent_eq1, multi3d_eq2, multi2d_simall, multi2d_simmax");
  app->add_option("--tau", o.tau, "loss.tau");
  app->add_option("--num-conformers", o.num_conformers, "loss.c");
  app->add_option("--batch-size", o.batch_size, "train.batch_size");
  app->add_option("--seed", o.seed, "train.seed");
  app->add_option("--max-epochs", o.max_epochs, "train.max_epochs");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  kernels::configure_from_env();
  Options  o;
  CLI::App app{"3D Infomax: contrastive 2D/3D pre-training of molecular graph encoders", "infomax3d"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training of Net2D against Net3D");
  add_config_flags(pre, o);
  pre->add_option("--data", o.data, "Training dataset")->required();
  pre->add_option("--val-data", o.val_data, "Validation dataset (default: hold out --val-fraction of --data)");
  pre->add_option("--val-fraction", o.val_fraction, "Held-out fraction when --val-data is absent");
  pre->add_option("--out", o.out, "Output directory")->required();
  pre->add_option("--resume", o.resume, "Continue from a last.ckpt");

  auto* dist = app.add_subcommand("pretrain-distance", "Pre-train Net2D by predicting pairwise distances");
  add_config_flags(dist, o);
  dist->add_option("--data", o.data, "Training dataset")->required();
  dist->add_option("--val-data", o.val_data, "Validation dataset (default: hold out --val-fraction of --data)");
  dist->add_option("--val-fraction", o.val_fraction, "Held-out fraction when --val-data is absent");
  dist->add_option("--out", o.out, "Output directory")->required();

  auto* fine = app.add_subcommand("finetune", "Fine-tune Net2D with a prediction head on one target");
  add_config_flags(fine, o);
  fine->add_option("--checkpoint", o.checkpoint, "Pre-trained checkpoint");
  fine->add_flag("--rand-init", o.rand_init, "Start from a random Net2D (baseline)");
  fine->add_option("--data", o.data, "Dataset (split 80/10/10 unless --val-data and --test-data are given)")->required();
  fine->add_option("--val-data", o.val_data, "Validation dataset");
  fine->add_option("--test-data", o.test_data, "Test dataset");
  fine->add_option("--target", o.target, "Target name from the dataset header");
  fine->add_flag("--classification", o.classification, "Binary target (0/1), reports ROC-AUC");
  fine->add_option("--out", o.out, "Output directory")->required();

  auto* emb = app.add_subcommand("embed", "Write Net2D embeddings, one line per molecule");
  emb->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  emb->add_option("--data", o.data, "Dataset")->required();
  emb->add_option("--out", o.out, "Output directory")->required();

  auto* self = app.add_subcommand("selftest", "Run the invariant suite and print PASS/FAIL per property");
  self->add_option("--seed", o.seed, "Seed");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with geometry-derived targets");
  synth->add_option("--out", o.out, "Output dataset file")->required();
  synth->add_option("--num-molecules", o.num_molecules, "Molecule count");
  synth->add_option("--seed", o.seed, "Seed");

  auto* keys = app.add_subcommand("keys", "Print every config key with its default");
  keys->add_option("command", o.keys_for, "pretrain or finetune")->check(CLI::IsMember({"pretrain", "finetune"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << " (see --help)\n";
    return kExitConfigError;
  }

  try {
    if (*pre) return cmd_pretrain(o, false, out, err);
    if (*dist) return cmd_pretrain(o, true, out, err);
    if (*fine) return cmd_finetune(o, out, err);
    if (*emb) return cmd_embed(o, out);
    if (*self) return cmd_selftest(o, out);
    if (*synth) return cmd_synth(o, out);
    if (*keys) return cmd_keys(o, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRunError;
  }
  return kExitConfigError;
}

}  // namespace infomax3d
