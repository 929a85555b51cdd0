#pragma once

// Flat tensor archive in the safetensors layout:
//   [u64 little-endian header length N][N bytes JSON header][payload]
// The header maps tensor name -> {dtype, shape, data_offsets=[begin, end)}
// with offsets relative to the start of the payload. Only F32 is supported.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mecheval/core/error.hpp"

namespace mecheval {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }
  std::span<const float> view() const { return data; }
};

class TensorArchive {
 public:
  void put(const std::string& name, Tensor tensor) {
    require(tensor.numel() == tensor.data.size(), ErrorKind::kInput,
            "tensor '" + name + "' data does not match its shape");
    tensors_[name] = std::move(tensor);
  }

  void put(const std::string& name, std::vector<std::size_t> shape,
           std::vector<float> data) {
    put(name, Tensor{std::move(shape), std::move(data)});
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    require(it != tensors_.end(), ErrorKind::kModelLoad, "missing tensor '" + name + "'");
    return it->second;
  }

  Tensor& mutable_at(const std::string& name) {
    auto it = tensors_.find(name);
    require(it != tensors_.end(), ErrorKind::kModelLoad, "missing tensor '" + name + "'");
    return it->second;
  }

  void erase(const std::string& name) { tensors_.erase(name); }

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  std::vector<std::uint8_t> serialize() const {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors_) {
      const std::uint64_t bytes = t.data.size() * sizeof(float);
      header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
      offset += bytes;
    }
    if (!metadata_.empty()) header["__metadata__"] = metadata_;
    std::string text = header.dump();
    while ((text.size() + 8) % 8 != 0) text.push_back(' ');

    std::vector<std::uint8_t> out(8 + text.size() + offset);
    write_u64_le(out.data(), text.size());
    std::memcpy(out.data() + 8, text.data(), text.size());
    std::uint8_t* payload = out.data() + 8 + text.size();
    for (const auto& [name, t] : tensors_) {
      for (float v : t.data) {
        write_f32_le(payload, v);
        payload += sizeof(float);
      }
    }
    return out;
  }

  static TensorArchive deserialize(std::span<const std::uint8_t> bytes) {
    auto bad = [](const std::string& msg) {
      fail(ErrorKind::kModelLoad, "corrupt tensor archive: " + msg);
    };
    if (bytes.size() < 8) bad("file shorter than header length field");
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (header_len > bytes.size() - 8) bad("header length exceeds file size");

    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
      bad(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) bad("header is not a JSON object");

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
    TensorArchive archive;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& [name, entry] : header.items()) {
      if (name == "__metadata__") {
        for (const auto& [k, v] : entry.items()) archive.metadata_[k] = v.get<std::string>();
        continue;
      }
      if (!entry.contains("dtype") || !entry.contains("shape") || !entry.contains("data_offsets"))
        bad("entry '" + name + "' lacks dtype/shape/data_offsets");
      if (entry["dtype"] != "F32") bad("tensor '" + name + "' has unsupported dtype " + entry["dtype"].dump());
      Tensor t;
      t.shape = entry["shape"].get<std::vector<std::size_t>>();
      const auto offsets = entry["data_offsets"].get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > payload.size())
        bad("tensor '" + name + "' offsets out of payload bounds");
      if (offsets[1] - offsets[0] != t.numel() * sizeof(float))
        bad("tensor '" + name + "' byte range does not match its shape");
      ranges.emplace_back(offsets[0], offsets[1]);
      t.data.resize(t.numel());
      for (std::size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = read_f32_le(payload.data() + offsets[0] + i * sizeof(float));
      archive.tensors_[name] = std::move(t);
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
      if (ranges[i].first < ranges[i - 1].second) bad("tensor byte ranges overlap");
    return archive;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::kInput, "cannot write tensor archive " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::kModelLoad, "cannot open tensor archive " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  static void write_u64_le(std::uint8_t* dst, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  static std::uint64_t read_u64_le(const std::uint8_t* src) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{src[i]} << (8 * i);
    return v;
  }
  static void write_f32_le(std::uint8_t* dst, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) dst[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  }
  static float read_f32_le(const std::uint8_t* src) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t{src[i]} << (8 * i);
    return std::bit_cast<float>(bits);
  }

  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace mecheval
