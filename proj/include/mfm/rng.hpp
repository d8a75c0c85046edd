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
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace mfm {

// Combines integers into a well-mixed 64-bit seed (splitmix64 chain). Used to
// derive independent streams such as hash(seed, split, index).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// Seeded random source with a serializable state. The state string captures
// both the engine and the normal distribution's cached spare value so a
// restored generator continues the exact same sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal() { return normal_(engine_); }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// Fisher-Yates permutation of [0, n) driven only by engine output, so the
// order does not depend on the standard library's distribution internals.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace mfm
