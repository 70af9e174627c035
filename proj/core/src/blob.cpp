// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/blob.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "edgeear/error.hpp"

namespace edgeear {

namespace {

constexpr std::array<char, 8> kMagic{'E', 'D', 'G', 'E', 'E', 'A', 'R', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor& Blob::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw LoadError("blob has no tensor named '" + name + "'");
}

void save_blob(const std::filesystem::path& path, std::span<const NamedTensor> tensors, const nlohmann::json& meta) {
  nlohmann::json header;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    header["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"offset", offset}});
    offset += nt.tensor.numel();
  }
  header["meta"] = meta;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw LoadError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& nt : tensors) {
    for (double v : nt.tensor.values()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw LoadError("write failed for '" + path.string() + "'");
}

Blob load_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open blob '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw LoadError("'" + path.string() + "' is not an edgeear blob");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (16 + header_len > bytes.size()) throw LoadError("truncated blob header in '" + path.string() + "'");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(16 + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("bad blob header in '" + path.string() + "': " + e.what());
  }
  const unsigned char* data = bytes.data() + 16 + header_len;
  const std::uint64_t available = (bytes.size() - 16 - header_len) / 8;

  Blob blob;
  if (header.contains("meta")) blob.meta = header["meta"];
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = shape_numel(shape);
    if (offset + n > available) throw LoadError("tensor data out of bounds in '" + path.string() + "'");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64(data + 8 * (offset + i)));
    blob.tensors.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  return blob;
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const NamedTensor nt{"tensor", tensor};
  save_blob(path, std::span<const NamedTensor>(&nt, 1));
}

Tensor load_tensor(const std::filesystem::path& path) {
  Blob b = load_blob(path);
  if (b.tensors.size() != 1) throw LoadError("expected a single tensor in '" + path.string() + "'");
  return b.tensors.front().tensor;
}

}  // namespace edgeear
