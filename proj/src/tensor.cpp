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


#include "mfm/tensor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mfm/errors.hpp"

namespace mfm {
namespace {

constexpr char kMagic[4] = {'M', 'F', 'M', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

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

void check_finite(std::span<const float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("non-finite tensor entry at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

std::string_view to_string(SeqTag tag) {
  switch (tag) {
    case SeqTag::kFastVisual: return "fast_visual";
    case SeqTag::kSlowVisual: return "slow_visual";
    case SeqTag::kFused: return "fused";
    case SeqTag::kAudioTarget: return "audio_target";
    case SeqTag::kAudioPred: return "audio_pred";
  }
  return "unknown";
}

EmbeddingSequence::EmbeddingSequence(MatrixF data, double rate_fps, SeqTag tag)
    : data_(std::move(data)), rate_fps_(rate_fps), tag_(tag) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw ValidationError("embedding sequence needs T >= 1 and D >= 1");
  }
  if (!(rate_fps_ > 0.0) || !std::isfinite(rate_fps_)) {
    throw ValidationError("embedding sequence rate_fps must be positive");
  }
  if (!data_.allFinite()) {
    throw ValidationError("embedding sequence contains non-finite entries");
  }
}

std::size_t product(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::uint32_t> dims_in, std::vector<float> values_in)
    : dims(std::move(dims_in)), values(std::move(values_in)) {
  if (values.size() != product(dims)) {
    throw ArgumentError("tensor value count does not match dims");
  }
}

Tensor::Tensor(std::vector<std::uint32_t> dims_in)
    : dims(std::move(dims_in)), values(product(dims), 0.0f) {}

Tensor Tensor::from_matrix(const MatrixF& m) {
  Tensor t({static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())});
  Eigen::Map<MatrixF>(t.values.data(), m.rows(), m.cols()) = m;
  return t;
}

MatrixF Tensor::as_matrix() const {
  if (dims.size() != 2) throw ArgumentError("as_matrix needs a 2-d tensor");
  return Eigen::Map<const MatrixF>(values.data(), dims[0], dims[1]);
}

MatrixF Tensor::item(std::size_t index) const {
  if (dims.size() != 3) throw ArgumentError("item() needs a 3-d tensor");
  if (index >= dims[0]) throw ArgumentError("item index out of range");
  const std::size_t stride = static_cast<std::size_t>(dims[1]) * dims[2];
  return Eigen::Map<const MatrixF>(values.data() + index * stride, dims[1], dims[2]);
}

void Tensor::set_item(std::size_t index, const MatrixF& m) {
  if (dims.size() != 3 || index >= dims[0] || m.rows() != dims[1] || m.cols() != dims[2]) {
    throw ArgumentError("set_item shape mismatch");
  }
  const std::size_t stride = static_cast<std::size_t>(dims[1]) * dims[2];
  Eigen::Map<MatrixF>(values.data() + index * stride, dims[1], dims[2]) = m;
}

std::string encode_tensor(const Tensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > 255) {
    throw ValidationError("tensor must have between 1 and 255 dims");
  }
  for (auto d : tensor.dims) {
    if (d == 0) throw ValidationError("tensor dims must be >= 1");
  }
  if (tensor.values.size() != product(tensor.dims)) {
    throw ValidationError("tensor value count does not match dims");
  }
  check_finite(tensor.values);

  std::string out;
  out.reserve(7 + 4 * tensor.dims.size() + 4 * tensor.values.size());
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(kDtypeF32));
  out.push_back(static_cast<char>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  for (float v : tensor.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::string_view bytes, std::size_t& offset) {
  if (bytes.size() < offset + 7) throw FormatError("tensor header truncated");
  if (bytes.substr(offset, 4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad tensor magic (expected MFMT)");
  }
  const auto version = static_cast<std::uint8_t>(bytes[offset + 4]);
  const auto dtype = static_cast<std::uint8_t>(bytes[offset + 5]);
  const auto ndim = static_cast<std::uint8_t>(bytes[offset + 6]);
  if (version != kVersion) throw FormatError("unsupported tensor version " + std::to_string(version));
  if (dtype != kDtypeF32) throw FormatError("unsupported tensor dtype " + std::to_string(dtype));
  if (ndim == 0) throw FormatError("tensor has zero dims");
  std::size_t at = offset + 7;
  if (bytes.size() < at + 4u * ndim) throw FormatError("tensor dims truncated");
  std::vector<std::uint32_t> dims(ndim);
  for (auto& d : dims) {
    d = get_u32(bytes, at);
    at += 4;
    if (d == 0) throw FormatError("tensor dim of size zero");
  }
  const std::size_t n = product(dims);
  if (bytes.size() - at < 4 * n) {
    throw FormatError("tensor payload truncated: need " + std::to_string(4 * n) + " bytes, have " +
                      std::to_string(bytes.size() - at));
  }
  std::vector<float> values(n);
  for (auto& v : values) {
    v = std::bit_cast<float>(get_u32(bytes, at));
    at += 4;
  }
  offset = at;
  try {
    check_finite(values);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("tensor file: ") + e.what());
  }
  return Tensor(std::move(dims), std::move(values));
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tensor(tensor));
}

void write_tensor(const EmbeddingSequence& seq, const std::filesystem::path& path) {
  write_tensor(Tensor::from_matrix(seq.data()), path);
}

Tensor read_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  Tensor t = decode_tensor(bytes, offset);
  if (offset != bytes.size()) {
    throw FormatError(path.string() + ": trailing bytes after tensor payload");
  }
  return t;
}

void write_tensor_bundle(std::span<const Tensor> tensors, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : tensors) out += encode_tensor(t);
  write_file_atomic(path, out);
}

std::vector<Tensor> read_tensor_bundle(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::vector<Tensor> out;
  std::size_t offset = 0;
  while (offset < bytes.size()) out.push_back(decode_tensor(bytes, offset));
  if (out.empty()) throw FormatError(path.string() + ": empty tensor bundle");
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

std::string checksum_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string file_checksum(const std::filesystem::path& path) { return checksum_hex(read_file(path)); }

}  // namespace mfm
