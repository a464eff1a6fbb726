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

#include "infomax3d/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "infomax3d/losses.hpp"
#include "infomax3d/metrics.hpp"
#include "infomax3d/net2d.hpp"
#include "infomax3d/net3d.hpp"
#include "json.hpp"

namespace infomax3d {

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng                rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint holds an unreadable random-number state");
  return rng;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void require_conformers(const Dataset& ds, const char* split) {
  for (const auto& m : ds.molecules) {
    if (!m.conformers || m.conformers->size() == 0) {
      throw std::invalid_argument(std::string(split) + " molecule '" + m.id +
                                  "' has no conformers; pre-training needs 3D coordinates for every molecule");
    }
  }
}

void require_size(const Dataset& ds, std::size_t min, const char* split) {
  if (ds.size() < min) {
    throw std::invalid_argument(std::string(split) + " split has " + std::to_string(ds.size()) +
                                " molecules, need at least " + std::to_string(min));
  }
}

bool is_multi2d(LossKind k) { return k == LossKind::kMulti2dSimAll || k == LossKind::kMulti2dSimMax; }

//! State of one pre-training run.
class Pretrainer {
 public:
  Pretrainer(const ModelConfig& cfg, const Dataset& train)
      : cfg_(cfg),
        distance_(cfg.loss.kind == LossKind::kDistanceMse),
        net2d_(cfg.net2d, cfg.train.seed),
        adam_(AdamOptions{.weight_decay = cfg.train.weight_decay}),
        schedule_(LrSchedule::sequential(cfg.train.lr, cfg.train.warmup_steps, cfg.train.plateau)),
        rng_(cfg.train.seed + 2) {
    net2d_.set_degree_delta(estimate_degree_delta(train));
    adam_.add(net2d_.params());
    if (distance_) {
      head_.emplace(cfg.net2d.d_h, cfg.train.seed + 1);
      adam_.add(head_->params());
    } else {
      net3d_.emplace(cfg.net3d, cfg.train.seed + 1);
      adam_.add(net3d_->params());
    }
  }

  void restore(const Checkpoint& ckpt) {
    load_store(ckpt, net2d_.params());
    if (net3d_) load_store(ckpt, net3d_->params());
    if (head_) load_store(ckpt, head_->params());
    load_optimizer(ckpt, adam_);
    schedule_.plateau().restore(ckpt.state.plateau);
    rng_ = rng_from_string(ckpt.state.rng_state);
  }

  ad::Var batch_loss(ad::Tape& tape, const Dataset& ds, std::span<const std::size_t> idx, bool train) {
    const nn::Mode mode{train, &rng_};
    const auto&    lc = cfg_.loss;

    std::vector<MolecularGraph>        dropped;
    std::vector<const MolecularGraph*> graphs;
    dropped.reserve(idx.size());
    for (std::size_t i : idx) {
      const MolecularGraph& m = ds.molecules[i];
      if (train && cfg_.train.node_drop > 0.0) {
        dropped.push_back(node_drop(m, cfg_.train.node_drop, rng_));
        graphs.push_back(&dropped.back());
      } else {
        graphs.push_back(&m);
      }
    }
    const GraphBatch gb  = make_graph_batch(graphs);
    auto             out = net2d_.forward(tape, gb, mode);

    if (distance_) {
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      std::vector<double>                              target;
      for (std::size_t g = 0; g < idx.size(); ++g) {
        const auto& m = ds.molecules[idx[g]];
        const auto  p = upper_pairs(m.num_atoms(), gb.node_offset[g]);
        pairs.insert(pairs.end(), p.begin(), p.end());
        const Tensor d = pair_distances(pairwise_distances(m.conformers->lowest_energy()));
        target.insert(target.end(), d.data().begin(), d.data().end());
      }
      if (pairs.empty()) throw std::invalid_argument("distance pre-training batch has no atom pairs");
      const std::size_t n_pairs = target.size();
      return distance_mse(head_->forward(tape, out.nodes, pairs), Tensor(n_pairs, 1, std::move(target)));
    }

    std::vector<Tensor> coords;
    const bool          multi = lc.kind != LossKind::kNtXentEq1;
    coords.reserve(idx.size() * (multi ? static_cast<std::size_t>(lc.c) : 1));
    for (std::size_t i : idx) {
      const ConformerSet& set = *ds.molecules[i].conformers;
      if (multi) {
        for (auto& c : select_conformers(set, lc.c)) coords.push_back(std::move(c.coords));
      } else if (!train || cfg_.train.conformer_mode == ConformerMode::kLowest) {
        coords.push_back(set.lowest_energy().coords);
      } else {
        const auto strategy = cfg_.train.conformer_mode == ConformerMode::kUniform ? ConformerSampling::kUniform
                                                                                   : ConformerSampling::kBoltzmann;
        coords.push_back(sample_conformer(set, strategy, rng_).coords);
      }
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& c : coords) ptrs.push_back(&c);
    const PointCloudBatch pb = make_point_cloud_batch(ptrs, cfg_.net3d.frequencies);
    const ad::Var         zb = net3d_->forward(tape, pb, mode);
    ad::Var               za = out.z;
    if (is_multi2d(lc.kind)) {
      za = ad::reshape(za, za.rows() * static_cast<std::size_t>(lc.c), cfg_.net2d.d_z);
    }
    return contrastive_loss(lc, za, zb);
  }

  double train_step(const Dataset& ds, std::span<const std::size_t> idx, std::size_t step) {
    adam_.zero_grad();
    ad::Tape      tape;
    const ad::Var loss = batch_loss(tape, ds, idx, true);
    const double  v    = loss.value().item();
    if (!std::isfinite(v)) {
      throw std::runtime_error("pre-training loss became non-finite at step " + std::to_string(step + 1));
    }
    tape.backward(loss);
    adam_.step(schedule_.lrs(step));
    return v;
  }

  double evaluate(const Dataset& ds) {
    const auto order = iota_indices(ds.size());
    double     sum   = 0.0;
    for (const auto& b : make_batches(order, cfg_.train.batch_size)) {
      ad::Tape tape;
      sum += batch_loss(tape, ds, b, false).value().item() * static_cast<double>(b.size());
    }
    return sum / static_cast<double>(ds.size());
  }

  Checkpoint snapshot(const TrainingState& state) const {
    Checkpoint ckpt;
    ckpt.kind               = distance_ ? "pretrain-distance" : "pretrain";
    ckpt.config             = to_key_values(cfg_);
    ckpt.state              = state;
    ckpt.state.plateau      = schedule_.plateau().state();
    ckpt.state.rng_state    = rng_to_string(rng_);
    save_store(net2d_.params(), ckpt);
    if (net3d_) save_store(net3d_->params(), ckpt);
    if (head_) save_store(head_->params(), ckpt);
    save_optimizer(adam_, ckpt);
    return ckpt;
  }

  LrSchedule& schedule() { return schedule_; }
  Rng&        rng() { return rng_; }

 private:
  const ModelConfig&          cfg_;
  bool                        distance_;
  Net2D                       net2d_;
  std::optional<Net3D>        net3d_;
  std::optional<DistanceHead> head_;
  Adam                        adam_;
  LrSchedule                  schedule_;
  Rng                         rng_;
};

void validate_pretrain(const ModelConfig& cfg, const Dataset& train, const Dataset& val) {
  cfg.net2d.validate();
  cfg.loss.validate();
  cfg.train.validate();
  if (cfg.train.batch_size < 2) {
    throw std::invalid_argument("train.batch_size must be at least 2: a contrastive batch needs negatives");
  }
  if (cfg.train.warmup_steps.size() != 1) {
    throw std::invalid_argument("pre-training uses one warmup group; set train.warmup_steps to a single value");
  }
  const bool distance = cfg.loss.kind == LossKind::kDistanceMse;
  if (!distance) {
    cfg.net3d.validate();
    if (cfg.net2d.d_z != cfg.net3d.d_z) {
      throw std::invalid_argument("net2d.d_z (" + std::to_string(cfg.net2d.d_z) + ") must equal net3d.d_z (" +
                                  std::to_string(cfg.net3d.d_z) + ")");
    }
  }
  const std::size_t outputs = is_multi2d(cfg.loss.kind) ? static_cast<std::size_t>(cfg.loss.c) : 1;
  if (!distance && cfg.net2d.num_outputs != outputs) {
    throw std::invalid_argument("net2d.num_outputs must be " + std::to_string(outputs) + " for loss " +
                                std::string(to_string(cfg.loss.kind)) + ", got " +
                                std::to_string(cfg.net2d.num_outputs));
  }
  if (distance && cfg.train.node_drop > 0.0) {
    throw std::invalid_argument("train.node_drop is not supported with the distance objective");
  }
  require_size(train, 2, "training");
  require_size(val, distance ? 1 : 2, "validation");
  require_conformers(train, "training");
  require_conformers(val, "validation");
}

}  // namespace

std::string to_json_line(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"]      = r.epoch;
  j["step"]       = r.step;
  j["lr"]         = r.lrs;
  j["train_loss"] = r.train_loss;
  j["val_loss"]   = r.val_loss;
  j["val_metric"] = r.val_metric ? nlohmann::json(*r.val_metric) : nlohmann::json(nullptr);
  j["improved"]   = r.improved;
  return j.dump();
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t size) {
  if (size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

PretrainResult pretrain(const ModelConfig& config, const Dataset& train, const Dataset& val, const RunHooks& hooks,
                        const Checkpoint* resume) {
  validate_pretrain(config, train, val);
  Pretrainer    run(config, train);
  TrainingState state;
  if (resume) {
    auto       diff = diff_key_values(resume->config, to_key_values(config), "net");
    const auto loss = diff_key_values(resume->config, to_key_values(config), "loss.");
    if (!diff.empty() || !loss.empty()) {
      diff.insert(diff.end(), loss.begin(), loss.end());
      throw std::invalid_argument("cannot resume: checkpoint and config disagree (checkpoint != config): " +
                                  join(diff, "; "));
    }
    run.restore(*resume);
    state = resume->state;
  }

  PretrainResult result;
  bool           stop = config.train.max_steps > 0 && state.step >= config.train.max_steps;
  for (std::size_t epoch = state.epoch + 1; epoch <= config.train.max_epochs && !stop; ++epoch) {
    auto order = iota_indices(train.size());
    std::shuffle(order.begin(), order.end(), run.rng());
    double              sum = 0.0;
    std::size_t         seen = 0;
    std::vector<double> lrs;
    for (const auto& b : make_batches(order, config.train.batch_size)) {
      lrs           = run.schedule().lrs(state.step);
      const double v = run.train_step(train, b, state.step);
      ++state.step;
      result.loss_trace.push_back(v);
      sum += v * static_cast<double>(b.size());
      seen += b.size();
      if (config.train.max_steps > 0 && state.step >= config.train.max_steps) {
        stop = true;
        break;
      }
    }
    const double val_loss = run.evaluate(val);
    EpochRecord  rec;
    rec.epoch      = epoch;
    rec.step       = state.step;
    rec.lrs        = lrs;
    rec.train_loss = sum / static_cast<double>(seen);
    rec.val_loss   = val_loss;
    rec.improved   = val_loss < state.best_val;
    run.schedule().plateau_step(state.step, val_loss);
    state.epoch = epoch;
    if (rec.improved) {
      state.best_val   = val_loss;
      state.best_epoch = epoch;
    }
    result.epochs.push_back(rec);
    result.last = run.snapshot(state);
    if (rec.improved) result.best = result.last;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint) hooks.on_checkpoint(result.last);
  }
  return result;
}

PretrainResult pretrain_distance(ModelConfig config, const Dataset& train, const Dataset& val, const RunHooks& hooks) {
  config.loss.kind = LossKind::kDistanceMse;
  return pretrain(config, train, val, hooks);
}

namespace {

//! Supervised state: encoder, head and optimiser.
class Finetuner {
 public:
  Finetuner(const ModelConfig& cfg, const Checkpoint* pretrained, const Dataset& train)
      : cfg_(cfg),
        net2d_(cfg.net2d, cfg.train.seed),
        adam_(AdamOptions{.weight_decay = cfg.train.weight_decay}),
        schedule_(LrSchedule::sequential(cfg.train.lr, cfg.train.warmup_steps, cfg.train.plateau)),
        rng_(cfg.train.seed + 2) {
    if (pretrained) {
      load_store(*pretrained, net2d_.params());
    } else {
      net2d_.set_degree_delta(estimate_degree_delta(train));
    }
    const std::size_t in     = cfg.net2d.num_outputs * cfg.net2d.d_z;
    const std::size_t hidden = cfg.train.head_hidden ? cfg.train.head_hidden : in;
    Rng               head_rng(cfg.train.seed + 3);
    nn::add_mlp(head_, "head", {in, hidden, 1}, head_rng);

    adam_.add(net2d_.params(), [](const std::string& name) { return nn::is_batch_norm_param(name) ? 0u : 2u; });
    adam_.add(head_, [](const std::string&) { return 1u; });

    const std::size_t t = train.target_index(cfg.train.target);
    target_             = t;
    if (!cfg.train.classification) stats_ = compute_target_stats(train)[t];
  }

  ad::Var predict(ad::Tape& tape, const Dataset& ds, std::span<const std::size_t> idx, bool train) {
    std::vector<const MolecularGraph*> graphs;
    for (std::size_t i : idx) graphs.push_back(&ds.molecules[i]);
    const GraphBatch gb = make_graph_batch(graphs);
    const auto       z  = net2d_.forward(tape, gb, nn::Mode{train, &rng_}).z;
    return nn::mlp(tape, head_, "head", 2, z);
  }

  //! Standardised regression labels or raw 0/1 labels.
  Tensor labels(const Dataset& ds, std::span<const std::size_t> idx) const {
    Tensor y(idx.size(), 1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& m = ds.molecules[idx[r]];
      const double v = m.targets.at(target_);
      if (!std::isfinite(v)) throw std::invalid_argument("molecule '" + m.id + "' has a non-finite target value");
      y(r, 0) = cfg_.train.classification ? v : (v - stats_.mean) / stats_.stddev;
    }
    return y;
  }

  ad::Var loss(const ad::Var& pred, const Tensor& y) {
    ad::Tape& tape = *pred.tape();
    const auto yv  = tape.constant(y);
    if (cfg_.train.classification) {
      return ad::mean_all(ad::sub(ad::softplus(pred), ad::mul(pred, yv)));
    }
    return ad::mean_all(ad::square(ad::sub(pred, yv)));
  }

  double train_step(const Dataset& ds, std::span<const std::size_t> idx, std::size_t step) {
    adam_.zero_grad();
    ad::Tape      tape;
    const ad::Var l = loss(predict(tape, ds, idx, true), labels(ds, idx));
    const double  v = l.value().item();
    if (!std::isfinite(v)) throw std::runtime_error("fine-tuning loss became non-finite at step " + std::to_string(step + 1));
    tape.backward(l);
    adam_.step(schedule_.lrs(step));
    return v;
  }

  //! Metrics in original units plus the training-objective value.
  MetricMap evaluate(const Dataset& ds) {
    const auto          order = iota_indices(ds.size());
    std::vector<double> preds;
    std::vector<double> truth;
    double              loss_sum = 0.0;
    for (const auto& b : make_batches(order, std::max<std::size_t>(cfg_.train.batch_size, 1))) {
      ad::Tape      tape;
      const ad::Var p = predict(tape, ds, b, false);
      const Tensor  y = labels(ds, b);
      loss_sum += loss(p, y).value().item() * static_cast<double>(b.size());
      for (std::size_t r = 0; r < b.size(); ++r) {
        const double v = p.value()(r, 0);
        preds.push_back(cfg_.train.classification ? v : v * stats_.stddev + stats_.mean);
        truth.push_back(ds.molecules[b[r]].targets.at(target_));
      }
    }
    MetricMap m;
    m["loss"] = loss_sum / static_cast<double>(ds.size());
    if (cfg_.train.classification) {
      m["roc_auc"] = roc_auc(preds, truth);
    } else {
      m["mae"]  = mae(preds, truth);
      m["rmse"] = rmse(preds, truth);
    }
    return m;
  }

  //! Lower is better: MAE for regression, loss for classification.
  double selection_score(const MetricMap& m) const { return cfg_.train.classification ? m.at("loss") : m.at("mae"); }
  std::optional<double> reported_metric(const MetricMap& m) const {
    return cfg_.train.classification ? m.at("roc_auc") : m.at("mae");
  }

  Checkpoint snapshot(const TrainingState& state) const {
    Checkpoint ckpt;
    ckpt.kind            = "finetune";
    ckpt.config          = to_key_values(cfg_);
    ckpt.state           = state;
    ckpt.state.plateau   = schedule_.plateau().state();
    ckpt.state.rng_state = rng_to_string(rng_);
    ckpt.info["target_mean"]   = stats_.mean;
    ckpt.info["target_stddev"] = stats_.stddev;
    save_store(net2d_.params(), ckpt);
    save_store(head_, ckpt);
    save_optimizer(adam_, ckpt);
    return ckpt;
  }

  void restore_weights(const Checkpoint& ckpt) {
    load_store(ckpt, net2d_.params());
    load_store(ckpt, head_);
  }

  LrSchedule& schedule() { return schedule_; }
  Rng&        rng() { return rng_; }

 private:
  const ModelConfig& cfg_;
  Net2D              net2d_;
  ad::ParamStore     head_;
  Adam               adam_;
  LrSchedule         schedule_;
  Rng                rng_;
  std::size_t        target_ = 0;
  TargetStats        stats_;
};

}  // namespace

FinetuneReport finetune(const ModelConfig& config, const Checkpoint* pretrained, const DatasetSplit& data,
                        const RunHooks& hooks) {
  config.net2d.validate();
  config.train.validate();
  if (config.train.warmup_steps.size() != 3) {
    throw std::invalid_argument(
        "fine-tuning needs three warmup lengths in train.warmup_steps (batch-norm, head, remaining parameters)");
  }
  if (config.train.target.empty()) throw std::invalid_argument("no fine-tuning target given (train.target)");
  if (pretrained) {
    const auto diff = diff_key_values(pretrained->config, to_key_values(config), "net2d.");
    if (!diff.empty()) {
      throw std::invalid_argument("checkpoint and config disagree on the 2D network (checkpoint != config): " +
                                  join(diff, "; "));
    }
  }
  require_size(data.train, 2, "training");
  require_size(data.val, 1, "validation");
  require_size(data.test, 1, "test");

  Finetuner      run(config, pretrained, data.train);
  FinetuneReport report;
  TrainingState  state;
  bool           stop = false;
  for (std::size_t epoch = 1; epoch <= config.train.max_epochs && !stop; ++epoch) {
    auto order = iota_indices(data.train.size());
    std::shuffle(order.begin(), order.end(), run.rng());
    double              sum  = 0.0;
    std::size_t         seen = 0;
    std::vector<double> lrs;
    for (const auto& b : make_batches(order, config.train.batch_size)) {
      lrs            = run.schedule().lrs(state.step);
      const double v = run.train_step(data.train, b, state.step);
      ++state.step;
      sum += v * static_cast<double>(b.size());
      seen += b.size();
      if (config.train.max_steps > 0 && state.step >= config.train.max_steps) {
        stop = true;
        break;
      }
    }
    const MetricMap val   = run.evaluate(data.val);
    const double    score = run.selection_score(val);
    EpochRecord     rec;
    rec.epoch      = epoch;
    rec.step       = state.step;
    rec.lrs        = lrs;
    rec.train_loss = sum / static_cast<double>(seen);
    rec.val_loss   = val.at("loss");
    rec.val_metric = run.reported_metric(val);
    rec.improved   = score < state.best_val;
    run.schedule().plateau_step(state.step, score);
    state.epoch = epoch;
    if (rec.improved) {
      state.best_val   = score;
      state.best_epoch = epoch;
      report.best      = run.snapshot(state);
    }
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint) hooks.on_checkpoint(run.snapshot(state));
  }
  run.restore_weights(report.best);
  report.best_epoch = state.best_epoch;
  report.train      = run.evaluate(data.train);
  report.val        = run.evaluate(data.val);
  report.test       = run.evaluate(data.test);
  return report;
}

Tensor embeddings(const Checkpoint& ckpt, const Dataset& dataset) {
  const ModelConfig cfg = config_from_checkpoint(ckpt);
  Net2D             net(cfg.net2d, 0);
  load_store(ckpt, net.params());
  const std::size_t width = cfg.net2d.num_outputs * cfg.net2d.d_z;
  Tensor            z(dataset.size(), width);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto&  m   = dataset.molecules[i];
    const Tensor row = m.featurized() ? net.encode(m) : net.encode(featurize(m));
    std::copy(row.data().begin(), row.data().end(), z.row_span(i).begin());
  }
  return z;
}

std::string format_embeddings(const Dataset& dataset, const Tensor& z) {
  if (z.rows() != dataset.size()) {
    throw std::invalid_argument("format_embeddings: " + std::to_string(z.rows()) + " rows for " +
                                std::to_string(dataset.size()) + " molecules");
  }
  std::string out;
  char        buf[64];
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out += dataset.molecules[i].id;
    out += '\t';
    for (std::size_t j = 0; j < z.cols(); ++j) {
      if (j) out += ',';
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), z(i, j));
      out.append(buf, end);
    }
    out += '\n';
  }
  return out;
}

}  // namespace infomax3d
