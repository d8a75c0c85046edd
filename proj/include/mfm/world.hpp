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


#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfm/rng.hpp"
#include "mfm/tensor.hpp"

namespace mfm {

// Parameters of the synthetic audio-visual world. The fast stream stands in
// for a timing-rich visual encoder, the slow stream for a windowed semantic
// encoder, and the targets for pooled audio-condition embeddings.
struct WorldConfig {
  int num_classes = 8;
  int fast_frames = 40;
  double fast_fps = 4.0;
  int windows = 8;
  int fast_dim = 16;
  int slow_dim = 24;
  int target_dim = 32;
  double fast_noise = 0.1;
  double slow_noise = 0.1;
  double target_noise = 0.0;
  int pulse_width = 2;
  double class_leak = 0.05;
  double duration_s = 10.0;
  std::uint64_t seed = 17;

  static WorldConfig desk();
  static WorldConfig paper();

  double window_seconds() const { return duration_s / windows; }
  double slow_fps() const { return windows / duration_s; }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct SoundEvent {
  double onset_s = 0.0;
  int class_id = 0;
  double intensity = 1.0;

  bool operator==(const SoundEvent&) const = default;
};

// Latent ground truth of one clip.
struct EventScript {
  double duration_s = 10.0;
  std::vector<SoundEvent> events;

  void validate(int num_classes) const;
  bool operator==(const EventScript&) const = default;
};

void to_json(nlohmann::json& j, const EventScript& s);
void from_json(const nlohmann::json& j, EventScript& s);

struct WorldPrototypes {
  MatrixF semantic;     // K x D2, unit rows
  MatrixF class_leak;   // K x D1, unit rows
  MatrixF onset;        // 1 x D1, unit
  MatrixF audio;        // K x Dc, orthonormal rows
  MatrixF baseline;     // 1 x Dc, unit, orthogonal to every audio row
};

WorldPrototypes build_prototypes(const WorldConfig& cfg);

// Event count uniform in {1,2,3} unless `single_event`.
EventScript sample_script(const WorldConfig& cfg, Rng& rng, bool single_event = false);

// Half-cosine pulse weight at offset `j` frames from the onset frame.
double pulse_weight(int j, int width);

int onset_frame(const WorldConfig& cfg, double onset_s);
int onset_window(const WorldConfig& cfg, double onset_s);

EmbeddingSequence emit_fast_visual(const EventScript& script, const WorldPrototypes& protos,
                                   const WorldConfig& cfg, Rng& rng);
EmbeddingSequence emit_slow_visual(const EventScript& script, const WorldPrototypes& protos,
                                   const WorldConfig& cfg, Rng& rng);
// `rng` is only drawn from when cfg.target_noise > 0.
EmbeddingSequence emit_audio_target(const EventScript& script, const WorldPrototypes& protos,
                                    const WorldConfig& cfg, Rng& rng);

}  // namespace mfm
