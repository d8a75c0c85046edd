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


#include <doctest.h>

#include <set>

#include "mfm/dataset.hpp"
#include "mfm/errors.hpp"
#include "mfm/world.hpp"
#include "support.hpp"

using namespace mfm;
using mfm::testing::TempDir;

namespace {

WorldConfig noiseless() {
  WorldConfig w = WorldConfig::desk();
  w.fast_noise = 0;
  w.slow_noise = 0;
  w.class_leak = 0;
  return w;
}

EventScript one_event(double onset, int cls, double a = 1.0) { return EventScript{10.0, {{onset, cls, a}}}; }

}  // namespace

TEST_CASE("prototypes are orthonormal and deterministic") {
  WorldConfig w = WorldConfig::desk();
  w.num_classes = 2;
  w.target_dim = 4;
  w.seed = 7;
  const WorldPrototypes p = build_prototypes(w);
  CHECK(std::abs(p.audio.row(0).dot(p.audio.row(1))) < 1e-6);
  CHECK(p.audio.row(0).norm() == doctest::Approx(1.0).epsilon(1e-6));

  const WorldPrototypes d = build_prototypes(WorldConfig::desk());
  for (int i = 0; i < 8; ++i) {
    CHECK(std::abs(d.audio.row(i).dot(d.baseline.row(0))) < 1e-6);
    CHECK(d.semantic.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d.class_leak.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
    for (int j = 0; j < 8; ++j) CHECK(std::abs(d.audio.row(i).dot(d.audio.row(j)) - (i == j)) < 1e-6);
  }
  CHECK(d.onset.norm() == doctest::Approx(1.0).epsilon(1e-6));
  const WorldPrototypes again = build_prototypes(WorldConfig::desk());
  CHECK(again.audio == d.audio);
  CHECK(again.semantic == d.semantic);

  WorldConfig bad = WorldConfig::desk();
  bad.target_dim = 8;
  CHECK_THROWS_AS(build_prototypes(bad), ConfigError);
}

TEST_CASE("world config validation names the field") {
  WorldConfig w = WorldConfig::desk();
  w.fast_noise = -1;
  CHECK_THROWS_WITH_AS(w.validate(), doctest::Contains("eta1"), ConfigError);
  w = WorldConfig::desk();
  w.fast_frames = 39;
  CHECK_THROWS_WITH_AS(w.validate(), doctest::Contains("T1"), ConfigError);
  CHECK_NOTHROW(WorldConfig::paper().validate());
}

TEST_CASE("scripts respect their ranges") {
  const WorldConfig w = WorldConfig::desk();
  Rng rng(3);
  std::set<std::size_t> counts;
  for (int i = 0; i < 500; ++i) {
    const EventScript s = sample_script(w, rng);
    counts.insert(s.events.size());
    CHECK_NOTHROW(s.validate(w.num_classes));
    for (const auto& e : s.events) {
      CHECK(e.onset_s >= 0.0);
      CHECK(e.onset_s < 10.0);
      CHECK(e.intensity >= 0.5);
      CHECK(e.intensity <= 1.0);
    }
  }
  CHECK(counts == std::set<std::size_t>{1, 2, 3});
  for (int i = 0; i < 50; ++i) CHECK(sample_script(w, rng, true).events.size() == 1);
  Rng a(11), b(11);
  CHECK(sample_script(w, a) == sample_script(w, b));
}

TEST_CASE("fast stream pulse lands on the onset frames") {
  const WorldConfig w = noiseless();
  const WorldPrototypes p = build_prototypes(w);
  Rng rng(1);
  const MatrixF v = emit_fast_visual(one_event(2.5, 3), p, w, rng).data();
  for (int f = 0; f < 40; ++f) {
    if (f == 10 || f == 11) {
      CHECK(v.row(f).norm() > 0.5f);
      // Parallel to the onset direction.
      CHECK(std::abs(v.row(f).normalized().dot(p.onset.row(0))) == doctest::Approx(1.0).epsilon(1e-6));
    } else {
      CHECK(v.row(f).norm() == 0.0f);
    }
  }
  CHECK(pulse_weight(0, 2) == doctest::Approx(std::cos(M_PI / 4)));
  CHECK(pulse_weight(2, 2) == 0.0);

  Rng r1(5), r2(5);
  const WorldConfig noisy = WorldConfig::desk();
  CHECK(emit_fast_visual(one_event(1.0, 0), p, noisy, r1).data() ==
        emit_fast_visual(one_event(1.0, 0), p, noisy, r2).data());
}

TEST_CASE("slow stream carries class but no timing") {
  const WorldConfig w = noiseless();
  const WorldPrototypes p = build_prototypes(w);
  Rng rng(1);
  const EmbeddingSequence s = emit_slow_visual(one_event(4.0, 3), p, w, rng);
  CHECK(s.length() == 8);
  CHECK(s.rate_fps() == doctest::Approx(0.8));
  for (int r = 0; r < 8; ++r) CHECK(s.data().row(r) == p.semantic.row(3));
  Rng rng2(1);
  CHECK(emit_slow_visual(one_event(9.0, 3), p, w, rng2).data() == s.data());
}

TEST_CASE("audio target windows") {
  const WorldConfig w = noiseless();
  const WorldPrototypes p = build_prototypes(w);
  Rng rng(1);
  MatrixF c = emit_audio_target(one_event(2.5, 1), p, w, rng).data();
  for (int r = 0; r < 8; ++r) CHECK(c.row(r) == (r == 2 ? MatrixF(p.audio.row(1)) : MatrixF(p.baseline)));
  c = emit_audio_target(one_event(0.0, 4, 0.7), p, w, rng).data();
  CHECK(c.row(0).isApprox(0.7f * p.audio.row(4)));

  // Reference by hand: 0.1 s -> window 0, 9.9 s -> window 7.
  const EventScript two{10.0, {{0.1, 0, 0.6}, {9.9, 1, 0.9}}};
  c = emit_audio_target(two, p, w, rng).data();
  CHECK(c.row(0).isApprox(0.6f * p.audio.row(0)));
  CHECK(c.row(7).isApprox(0.9f * p.audio.row(1)));
  for (int r = 1; r < 7; ++r) CHECK(c.row(r) == p.baseline.row(0));

  const EventScript same_window{10.0, {{3.0, 0, 0.5}, {3.5, 2, 1.0}}};
  c = emit_audio_target(same_window, p, w, rng).data();
  CHECK(c.row(2).isApprox(0.5f * p.audio.row(0) + p.audio.row(2)));
}

TEST_CASE("information split between the two streams") {
  WorldConfig w = noiseless();
  const WorldPrototypes p = build_prototypes(w);
  Rng rng(21);
  int class_hits_slow = 0;
  int frame_hits_fast = 0;
  int class_hits_fast = 0;
  const int n = 400;
  for (int i = 0; i < n; ++i) {
    const EventScript s = sample_script(w, rng, true);
    const auto& e = s.events[0];
    const MatrixF v2 = emit_slow_visual(s, p, w, rng).data();
    Eigen::Index k;
    (p.semantic * v2.row(0).transpose()).maxCoeff(&k);
    class_hits_slow += k == e.class_id;

    const MatrixF v1 = emit_fast_visual(s, p, w, rng).data();
    Eigen::Index f;
    (v1 * p.onset.row(0).transpose()).maxCoeff(&f);
    // The pulse peak is split evenly over two frames; the first wins ties.
    frame_hits_fast += f == onset_frame(w, e.onset_s);
    Eigen::Index kf;
    (p.class_leak * v1.colwise().sum().transpose()).maxCoeff(&kf);
    class_hits_fast += kf == e.class_id;
  }
  CHECK(class_hits_slow == n);
  CHECK(frame_hits_fast == n);
  // lambda1 = 0: class evidence in the fast stream is only chance-level
  // correlation between random directions.
  CHECK(class_hits_fast < n / 2);

  // The slow stream is identical in every window, so window index is not
  // recoverable from it.
  const EventScript early = one_event(0.5, 2), late = one_event(9.5, 2);
  Rng a(2), b(2);
  CHECK(emit_slow_visual(early, p, w, a).data() == emit_slow_visual(late, p, w, b).data());
}

TEST_CASE("targets decode to the true window") {
  const WorldConfig w = WorldConfig::desk();
  const WorldPrototypes p = build_prototypes(w);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const EventScript s = sample_script(w, rng, true);
    const MatrixF c = emit_audio_target(s, p, w, rng).data();
    Eigen::Index best;
    (c * p.audio.row(s.events[0].class_id).transpose()).maxCoeff(&best);
    CHECK(best == onset_window(w, s.events[0].onset_s));
  }
}

TEST_CASE("dataset generation") {
  TempDir dir("data");
  const WorldConfig w = WorldConfig::desk();
  const DatasetManifest m = generate_dataset(w, 64, 16, dir / "a");
  const Dataset d = load_dataset(dir / "a");
  CHECK(d.train.fast.dims == std::vector<std::uint32_t>{64, 40, 16});
  CHECK(d.train.slow.dims == std::vector<std::uint32_t>{64, 8, 24});
  CHECK(d.train.target.dims == std::vector<std::uint32_t>{64, 8, 32});
  CHECK(d.test.target.dims == std::vector<std::uint32_t>{16, 8, 32});
  for (const auto& s : d.test.scripts) CHECK(s.events.size() == 1);
  CHECK(d.manifest.n_train == 64);
  CHECK(DatasetManifest::from_json(m.to_json()).to_json() == m.to_json());

  SUBCASE("regeneration is byte identical") {
    const DatasetManifest again = generate_dataset(w, 64, 16, dir / "b");
    CHECK(again.checksums == m.checksums);
  }
  SUBCASE("in-memory synthesis matches files") {
    const Dataset mem = synthesize_dataset(w, 64, 16);
    CHECK(mem.train.fast == d.train.fast);
    CHECK(mem.test.target == d.test.target);
    CHECK(mem.train.scripts == d.train.scripts);
  }
  SUBCASE("sample streams do not depend on split size") {
    const Dataset small = synthesize_dataset(w, 8, 4);
    CHECK(small.train.fast.item(5) == d.train.fast.item(5));
    CHECK(small.test.target.item(3) == d.test.target.item(3));
  }
  SUBCASE("corruption is caught by the checksum") {
    std::string bytes = read_file(dir / "a" / "train_c.mfmt");
    bytes[bytes.size() - 1] ^= 0x01;
    write_file_atomic(dir / "a" / "train_c.mfmt", bytes);
    CHECK_THROWS_AS(load_dataset(dir / "a"), FormatError);
  }
  CHECK_THROWS_AS(synthesize_dataset(w, 0, 4), ConfigError);
  CHECK_THROWS_AS(generate_dataset(w, 4, 0, dir / "c"), ConfigError);
  CHECK_THROWS_AS(load_dataset(dir / "nope"), Error);
}
