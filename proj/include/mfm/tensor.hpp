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

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfm {

// Row-major dense matrix; rows are time steps (or stacked samples).
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Mat<float>;

enum class SeqTag : std::uint8_t {
  kFastVisual,
  kSlowVisual,
  kFused,
  kAudioTarget,
  kAudioPred,
};

std::string_view to_string(SeqTag tag);

// A rate-annotated T x D sequence of embeddings. Immutable after
// construction; the constructor enforces T, D >= 1, rate > 0 and finiteness.
class EmbeddingSequence {
 public:
  EmbeddingSequence(MatrixF data, double rate_fps, SeqTag tag);

  const MatrixF& data() const { return data_; }
  int length() const { return static_cast<int>(data_.rows()); }
  int dim() const { return static_cast<int>(data_.cols()); }
  double rate_fps() const { return rate_fps_; }
  SeqTag tag() const { return tag_; }

 private:
  MatrixF data_;
  double rate_fps_;
  SeqTag tag_;
};

// Raw N-d float32 array, row-major.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  Tensor() = default;
  Tensor(std::vector<std::uint32_t> dims_in, std::vector<float> values_in);
  explicit Tensor(std::vector<std::uint32_t> dims_in);

  static Tensor from_matrix(const MatrixF& m);

  std::size_t numel() const { return values.size(); }
  // Interprets a 2-d tensor as a matrix.
  MatrixF as_matrix() const;
  // For a 3-d tensor (N x R x C), the R x C matrix of item `index`.
  MatrixF item(std::size_t index) const;
  void set_item(std::size_t index, const MatrixF& m);

  bool operator==(const Tensor& other) const = default;
};

std::size_t product(std::span<const std::uint32_t> dims);

// TensorFile layout: "MFMT" | u8 version=1 | u8 dtype=0 | u8 ndim |
// ndim x u32 LE dims | f32 LE payload.
std::string encode_tensor(const Tensor& tensor);
// Decodes one record starting at `offset`; advances offset past it.
Tensor decode_tensor(std::string_view bytes, std::size_t& offset);

void write_tensor(const Tensor& tensor, const std::filesystem::path& path);
void write_tensor(const EmbeddingSequence& seq,
                  const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

// Several TensorFile records written back to back.
void write_tensor_bundle(std::span<const Tensor> tensors,
                         const std::filesystem::path& path);
std::vector<Tensor> read_tensor_bundle(const std::filesystem::path& path);

// Whole-file helpers. Writes go through a temporary file and a rename.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);

// FNV-1a 64-bit digest, lowercase hex.
std::string checksum_hex(std::string_view bytes);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace mfm
