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


#include "mfm/dataset.hpp"

#include "mfm/errors.hpp"

namespace mfm {
namespace {

constexpr int kFormatVersion = 1;

SplitData synthesize_split(const WorldConfig& cfg, const WorldPrototypes& protos, Split split, std::size_t n,
                           bool single_event) {
  const auto N = static_cast<std::uint32_t>(n);
  SplitData out{Tensor({N, static_cast<std::uint32_t>(cfg.fast_frames), static_cast<std::uint32_t>(cfg.fast_dim)}),
                Tensor({N, static_cast<std::uint32_t>(cfg.windows), static_cast<std::uint32_t>(cfg.slow_dim)}),
                Tensor({N, static_cast<std::uint32_t>(cfg.windows), static_cast<std::uint32_t>(cfg.target_dim)}),
                {}};
  out.scripts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed({cfg.seed, static_cast<std::uint64_t>(split), i}));
    EventScript script = sample_script(cfg, rng, single_event);
    out.fast.set_item(i, emit_fast_visual(script, protos, cfg, rng).data());
    out.slow.set_item(i, emit_slow_visual(script, protos, cfg, rng).data());
    out.target.set_item(i, emit_audio_target(script, protos, cfg, rng).data());
    out.scripts.push_back(std::move(script));
  }
  return out;
}

std::string file_name(Split split, std::string_view what) {
  return std::string(to_string(split)) + "_" + std::string(what);
}

std::string scripts_json(const std::vector<EventScript>& scripts) {
  nlohmann::json j = scripts;
  return j.dump(1);
}

void check_dims(const Tensor& t, std::vector<std::uint32_t> expected, const std::string& what) {
  if (t.dims != expected) throw FormatError(what + ": dims do not match manifest");
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = format_version;
  j["seed"] = world.seed;
  j["K"] = world.num_classes;
  j["dims"] = {{"D1", world.fast_dim},
               {"D2", world.slow_dim},
               {"Dc", world.target_dim},
               {"T1", world.fast_frames},
               {"W", world.windows}};
  j["noise"] = {{"eta1", world.fast_noise}, {"eta2", world.slow_noise}};
  j["split_sizes"] = {{"train", n_train}, {"test", n_test}};
  j["test_single_event"] = test_single_event;
  j["world"] = world;
  j["files"] = checksums;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.world = j.at("world").get<WorldConfig>();
    m.n_train = j.at("split_sizes").at("train").get<std::size_t>();
    m.n_test = j.at("split_sizes").at("test").get<std::size_t>();
    m.test_single_event = j.at("test_single_event").get<bool>();
    m.checksums = j.at("files").get<std::map<std::string, std::string>>();
    // Redundant summary fields must agree with the full world record.
    if (j.at("seed").get<std::uint64_t>() != m.world.seed || j.at("K").get<int>() != m.world.num_classes ||
        j.at("dims").at("D1").get<int>() != m.world.fast_dim ||
        j.at("dims").at("D2").get<int>() != m.world.slow_dim ||
        j.at("dims").at("Dc").get<int>() != m.world.target_dim ||
        j.at("dims").at("T1").get<int>() != m.world.fast_frames || j.at("dims").at("W").get<int>() != m.world.windows) {
      throw FormatError("manifest summary fields disagree with world config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (m.format_version != kFormatVersion) throw FormatError("unsupported manifest format_version");
  if (m.n_train < 1 || m.n_test < 1) throw FormatError("manifest split sizes must be >= 1");
  try {
    m.world.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("manifest world config invalid: ") + e.what());
  }
  return m;
}

Dataset synthesize_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_test, bool test_single_event) {
  cfg.validate();
  if (n_train < 1) throw ConfigError("dataset field 'n_train': must be >= 1");
  if (n_test < 1) throw ConfigError("dataset field 'n_test': must be >= 1");
  Dataset d;
  d.manifest.format_version = kFormatVersion;
  d.manifest.world = cfg;
  d.manifest.n_train = n_train;
  d.manifest.n_test = n_test;
  d.manifest.test_single_event = test_single_event;
  d.prototypes = build_prototypes(cfg);
  d.train = synthesize_split(cfg, d.prototypes, Split::kTrain, n_train, false);
  d.test = synthesize_split(cfg, d.prototypes, Split::kTest, n_test, test_single_event);
  return d;
}

void write_dataset(Dataset& dataset, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto& sums = dataset.manifest.checksums;
  sums.clear();
  auto put = [&](const std::string& name, const std::string& bytes) {
    write_file_atomic(out_dir / name, bytes);
    sums[name] = checksum_hex(bytes);
  };

  const auto& p = dataset.prototypes;
  std::string bundle;
  for (const MatrixF* m : {&p.audio, &p.baseline, &p.semantic, &p.class_leak, &p.onset}) {
    bundle += encode_tensor(Tensor::from_matrix(*m));
  }
  put("prototypes.mfmt", bundle);
  for (Split s : {Split::kTrain, Split::kTest}) {
    const SplitData& data = dataset.split(s);
    put(file_name(s, "v1.mfmt"), encode_tensor(data.fast));
    put(file_name(s, "v2.mfmt"), encode_tensor(data.slow));
    put(file_name(s, "c.mfmt"), encode_tensor(data.target));
    put(file_name(s, "events.json"), scripts_json(data.scripts));
  }
  write_file_atomic(out_dir / "manifest.json", dataset.manifest.to_json().dump(2));
}

DatasetManifest generate_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_test,
                                 const std::filesystem::path& out_dir) {
  Dataset d = synthesize_dataset(cfg, n_train, n_test);
  write_dataset(d, out_dir);
  return d.manifest;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  Dataset d;
  d.manifest = DatasetManifest::from_json(mj);
  const WorldConfig& w = d.manifest.world;

  auto load_checked = [&](const std::string& name) {
    auto it = d.manifest.checksums.find(name);
    if (it == d.manifest.checksums.end()) throw FormatError("manifest has no checksum for " + name);
    std::string bytes = read_file(dir / name);
    if (checksum_hex(bytes) != it->second) throw FormatError((dir / name).string() + ": checksum mismatch");
    return bytes;
  };

  {
    const std::string bytes = load_checked("prototypes.mfmt");
    std::vector<Tensor> parts;
    std::size_t offset = 0;
    while (offset < bytes.size()) parts.push_back(decode_tensor(bytes, offset));
    if (parts.size() != std::size(kPrototypeOrder)) throw FormatError("prototypes.mfmt: expected 5 tensors");
    auto K = static_cast<std::uint32_t>(w.num_classes);
    check_dims(parts[0], {K, static_cast<std::uint32_t>(w.target_dim)}, "prototypes.audio");
    check_dims(parts[1], {1, static_cast<std::uint32_t>(w.target_dim)}, "prototypes.baseline");
    check_dims(parts[2], {K, static_cast<std::uint32_t>(w.slow_dim)}, "prototypes.semantic");
    check_dims(parts[3], {K, static_cast<std::uint32_t>(w.fast_dim)}, "prototypes.class_leak");
    check_dims(parts[4], {1, static_cast<std::uint32_t>(w.fast_dim)}, "prototypes.onset");
    d.prototypes = {parts[2].as_matrix(), parts[3].as_matrix(), parts[4].as_matrix(), parts[0].as_matrix(),
                    parts[1].as_matrix()};
  }

  for (Split s : {Split::kTrain, Split::kTest}) {
    SplitData& data = s == Split::kTrain ? d.train : d.test;
    const auto N = static_cast<std::uint32_t>(s == Split::kTrain ? d.manifest.n_train : d.manifest.n_test);
    auto decode_one = [&](const std::string& name) {
      const std::string bytes = load_checked(name);
      std::size_t offset = 0;
      Tensor t = decode_tensor(bytes, offset);
      if (offset != bytes.size()) throw FormatError(name + ": trailing bytes");
      return t;
    };
    data.fast = decode_one(file_name(s, "v1.mfmt"));
    data.slow = decode_one(file_name(s, "v2.mfmt"));
    data.target = decode_one(file_name(s, "c.mfmt"));
    check_dims(data.fast, {N, static_cast<std::uint32_t>(w.fast_frames), static_cast<std::uint32_t>(w.fast_dim)},
               file_name(s, "v1.mfmt"));
    check_dims(data.slow, {N, static_cast<std::uint32_t>(w.windows), static_cast<std::uint32_t>(w.slow_dim)},
               file_name(s, "v2.mfmt"));
    check_dims(data.target, {N, static_cast<std::uint32_t>(w.windows), static_cast<std::uint32_t>(w.target_dim)},
               file_name(s, "c.mfmt"));
    try {
      data.scripts = nlohmann::json::parse(load_checked(file_name(s, "events.json"))).get<std::vector<EventScript>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(file_name(s, "events.json") + ": " + e.what());
    }
    if (data.scripts.size() != N) throw FormatError(file_name(s, "events.json") + ": sample count mismatch");
    for (const auto& script : data.scripts) {
      try {
        script.validate(w.num_classes);
      } catch (const ValidationError& e) {
        throw FormatError(file_name(s, "events.json") + ": " + e.what());
      }
    }
  }
  return d;
}

}  // namespace mfm
