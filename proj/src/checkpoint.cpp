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

#include "infomax3d/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>
#include <vector>

#include "json.hpp"

namespace infomax3d {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'M', 'X', '3', 'D', 'C', 'K', 'P'};

using nlohmann::json;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(std::string_view bytes, std::size_t& pos, const char* what) {
  if (bytes.size() - pos < sizeof(T)) {
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  }
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void add_tensors(json& index, std::string& payload, const char* section, const std::map<std::string, Tensor>& m) {
  for (const auto& [name, t] : m) {
    index.push_back({{"section", section}, {"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    const auto& d = t.data();
    payload.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["kind"]   = ckpt.kind;
  header["config"] = ckpt.config;
  json info        = json::object();
  for (const auto& [k, v] : ckpt.info) info[k] = finite_or_null(v);
  header["info"] = info;
  const auto& s  = ckpt.state;
  header["state"] = {
      {"epoch", s.epoch},
      {"step", s.step},
      {"best_val", finite_or_null(s.best_val)},
      {"best_epoch", s.best_epoch},
      {"adam_steps", s.adam_steps},
      {"rng_state", s.rng_state},
      {"plateau",
       {{"multiplier", s.plateau.multiplier},
        {"best", finite_or_null(s.plateau.best)},
        {"num_bad", s.plateau.num_bad},
        {"cooldown_remaining", s.plateau.cooldown_remaining},
        {"reductions", s.plateau.reductions}}},
  };
  json        index = json::array();
  std::string payload;
  add_tensors(index, payload, "param", ckpt.params);
  add_tensors(index, payload, "buffer", ckpt.buffers);
  add_tensors(index, payload, "optimizer", ckpt.optimizer);
  header["tensors"] = index;

  const std::string text = header.dump();
  std::string       out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not an infomax3d checkpoint (bad magic bytes)");
  }
  std::size_t pos     = sizeof(kMagic);
  const auto  version = take<std::uint32_t>(bytes, pos, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = take<std::uint64_t>(bytes, pos, "header length");
  if (bytes.size() - pos < hlen) throw std::runtime_error("checkpoint truncated inside the header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, hlen));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  pos += hlen;

  Checkpoint ckpt;
  try {
    ckpt.kind   = header.at("kind").get<std::string>();
    ckpt.config = header.at("config").get<KeyValues>();
    for (const auto& [k, v] : header.at("info").items()) ckpt.info[k] = number_or_inf(v);
    const json& s           = header.at("state");
    ckpt.state.epoch        = s.at("epoch").get<std::size_t>();
    ckpt.state.step         = s.at("step").get<std::size_t>();
    ckpt.state.best_val     = number_or_inf(s.at("best_val"));
    ckpt.state.best_epoch   = s.at("best_epoch").get<std::size_t>();
    ckpt.state.adam_steps   = s.at("adam_steps").get<std::size_t>();
    ckpt.state.rng_state    = s.at("rng_state").get<std::string>();
    const json& p           = s.at("plateau");
    ckpt.state.plateau.multiplier         = p.at("multiplier").get<double>();
    ckpt.state.plateau.best               = number_or_inf(p.at("best"));
    ckpt.state.plateau.num_bad            = p.at("num_bad").get<std::size_t>();
    ckpt.state.plateau.cooldown_remaining = p.at("cooldown_remaining").get<std::size_t>();
    ckpt.state.plateau.reductions         = p.at("reductions").get<std::size_t>();
    for (const json& t : header.at("tensors")) {
      const auto section = t.at("section").get<std::string>();
      const auto name    = t.at("name").get<std::string>();
      const auto rows    = t.at("rows").get<std::size_t>();
      const auto cols    = t.at("cols").get<std::size_t>();
      const std::size_t nbytes = rows * cols * sizeof(double);
      if (bytes.size() - pos < nbytes) {
        throw std::runtime_error("checkpoint truncated inside tensor '" + name + "'");
      }
      std::vector<double> data(rows * cols);
      std::memcpy(data.data(), bytes.data() + pos, nbytes);
      pos += nbytes;
      Tensor value(rows, cols, std::move(data));
      if (section == "param") {
        ckpt.params.emplace(name, std::move(value));
      } else if (section == "buffer") {
        ckpt.buffers.emplace(name, std::move(value));
      } else if (section == "optimizer") {
        ckpt.optimizer.emplace(name, std::move(value));
      } else {
        throw std::runtime_error("checkpoint tensor '" + name + "' has unknown section '" + section + "'");
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint header is malformed: ") + e.what());
  }
  if (pos != bytes.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(bytes.size() - pos) + " trailing bytes");
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  auto              tmp   = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw std::runtime_error("failed while writing checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void save_store(const ad::ParamStore& store, Checkpoint& ckpt) {
  for (const auto& [name, p] : store.params()) ckpt.params[name] = p.value;
  for (const auto& [name, b] : store.buffers()) ckpt.buffers[name] = b;
}

void load_store(const Checkpoint& ckpt, ad::ParamStore& store) {
  std::vector<std::string> problems;
  auto check = [&](const std::map<std::string, Tensor>& src, const std::string& name, const Tensor& dst) -> const Tensor* {
    auto it = src.find(name);
    if (it == src.end()) {
      problems.push_back(name + " missing");
      return nullptr;
    }
    if (!it->second.same_shape(dst)) {
      problems.push_back(name + " has shape " + it->second.shape_str() + ", model expects " + dst.shape_str());
      return nullptr;
    }
    return &it->second;
  };
  for (auto& [name, p] : store.params()) {
    if (const Tensor* t = check(ckpt.params, name, p.value)) p.value = *t;
  }
  for (auto& [name, b] : store.buffers()) {
    if (const Tensor* t = check(ckpt.buffers, name, b)) b = *t;
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not fit the model: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw std::runtime_error(msg);
  }
}

void save_optimizer(const Adam& adam, Checkpoint& ckpt) {
  for (const auto& [name, mo] : adam.moments()) {
    ckpt.optimizer["m/" + name] = mo.m;
    ckpt.optimizer["v/" + name] = mo.v;
  }
  ckpt.state.adam_steps = adam.steps();
}

void load_optimizer(const Checkpoint& ckpt, Adam& adam) {
  std::map<std::string, Adam::Moments> moments;
  for (const auto& [name, _] : adam.moments()) {
    auto m = ckpt.optimizer.find("m/" + name);
    auto v = ckpt.optimizer.find("v/" + name);
    if (m == ckpt.optimizer.end() || v == ckpt.optimizer.end()) {
      throw std::runtime_error("checkpoint has no optimizer state for '" + name + "'");
    }
    moments.emplace(name, Adam::Moments{m->second, v->second});
  }
  adam.restore(ckpt.state.adam_steps, std::move(moments));
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig config;
  try {
    apply_key_values(config, ckpt.config);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint configuration is unreadable: ") + e.what());
  }
  return config;
}

}  // namespace infomax3d
