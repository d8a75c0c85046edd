// Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "mfm/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <set>

#include "mfm/errors.hpp"
#include "mfm/tensor.hpp"

namespace mfm {
namespace {

constexpr char kMagic[4] = {'M', 'F', 'M', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

void append_tensor(const NamedTensor& t, const std::string& name, std::string& payload,
                   nlohmann::json& entries, std::set<std::string>& seen) {
  if (!seen.insert(name).second) throw ArgumentError("duplicate checkpoint tensor name: " + name);
  if (t.values.size() != product(t.shape)) {
    throw ArgumentError("checkpoint tensor " + name + " has inconsistent shape");
  }
  entries.push_back({{"name", name},
                     {"shape", t.shape},
                     {"offset", payload.size()},
                     {"nbytes", 4 * t.values.size()}});
  for (float v : t.values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite value in checkpoint tensor " + name);
    put_u32(payload, std::bit_cast<std::uint32_t>(v));
  }
}

NamedTensor extract(const nlohmann::json& entry, std::string_view payload) {
  NamedTensor t;
  t.name = entry.at("name").get<std::string>();
  t.shape = entry.at("shape").get<std::vector<std::uint32_t>>();
  const auto offset = entry.at("offset").get<std::size_t>();
  const auto nbytes = entry.at("nbytes").get<std::size_t>();
  if (nbytes != 4 * product(t.shape)) throw FormatError("checkpoint tensor " + t.name + ": size/shape mismatch");
  if (offset + nbytes > payload.size()) throw FormatError("checkpoint tensor " + t.name + ": payload truncated");
  t.values.resize(nbytes / 4);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    t.values[i] = std::bit_cast<float>(get_u32(payload, offset + 4 * i));
  }
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "MFMC";
  header["version"] = 1;
  header["model_config"] = ckpt.model_config;
  header["epoch"] = ckpt.epoch;
  header["rng_state"] = ckpt.rng_state;
  header["extra"] = ckpt.extra;

  std::string payload;
  std::set<std::string> seen;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : ckpt.params) append_tensor(t, t.name, payload, params, seen);
  header["params"] = params;

  nlohmann::json opt;
  opt["present"] = ckpt.optimizer.has_value();
  if (ckpt.optimizer) {
    opt["step"] = ckpt.optimizer->step;
    nlohmann::json m = nlohmann::json::array();
    nlohmann::json v = nlohmann::json::array();
    for (const auto& t : ckpt.optimizer->first_moment) append_tensor(t, "adam.m/" + t.name, payload, m, seen);
    for (const auto& t : ckpt.optimizer->second_moment) append_tensor(t, "adam.v/" + t.name, payload, v, seen);
    opt["first_moment"] = m;
    opt["second_moment"] = v;
  }
  header["optimizer"] = opt;

  const std::string header_text = header.dump(1);
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out += payload;
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 8 || std::string_view(bytes).substr(0, 4) != std::string_view(kMagic, 4)) {
    throw FormatError(path.string() + ": bad checkpoint magic (expected MFMC)");
  }
  const std::uint32_t header_len = get_u32(bytes, 4);
  if (bytes.size() < 8ull + header_len) throw FormatError(path.string() + ": checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": checkpoint header is not valid JSON: " + e.what());
  }
  const std::string_view payload = std::string_view(bytes).substr(8 + header_len);

  Checkpoint ckpt;
  try {
    if (header.at("version").get<int>() != 1) throw FormatError(path.string() + ": unsupported checkpoint version");
    ckpt.model_config = header.at("model_config");
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.extra = header.value("extra", nlohmann::json::object());

    std::size_t covered = 0;
    for (const auto& e : header.at("params")) {
      ckpt.params.push_back(extract(e, payload));
      covered += e.at("nbytes").get<std::size_t>();
    }
    const auto& opt = header.at("optimizer");
    if (opt.at("present").get<bool>()) {
      OptimizerSnapshot snap;
      snap.step = opt.at("step").get<std::uint64_t>();
      auto strip = [](NamedTensor t, std::string_view prefix) {
        if (t.name.rfind(prefix, 0) != 0) throw FormatError("optimizer tensor without prefix: " + t.name);
        t.name = t.name.substr(prefix.size());
        return t;
      };
      for (const auto& e : opt.at("first_moment")) {
        snap.first_moment.push_back(strip(extract(e, payload), "adam.m/"));
        covered += e.at("nbytes").get<std::size_t>();
      }
      for (const auto& e : opt.at("second_moment")) {
        snap.second_moment.push_back(strip(extract(e, payload), "adam.v/"));
        covered += e.at("nbytes").get<std::size_t>();
      }
      ckpt.optimizer = std::move(snap);
    }
    if (covered != payload.size()) {
      throw FormatError(path.string() + ": checkpoint payload size does not match header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  for (const auto& t : ckpt.params) {
    for (float v : t.values) {
      if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value in " + t.name);
    }
  }
  return ckpt;
}

}  // namespace mfm
