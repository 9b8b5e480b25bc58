#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "meansum/subword.hpp"
#include "meansum/tensor.hpp"

namespace meansum {

inline constexpr int kCheckpointVersion = 1;

// Versioned flat binary of named float64 arrays plus a JSON manifest:
// <stem>.json carries the header and the array table (name, shape, offset),
// <stem>.bin carries the raw little-endian doubles back to back.

inline void save_arrays(const std::string& stem,
                        nlohmann::ordered_json header,
                        const std::vector<std::pair<std::string, const Tensor*>>& arrays) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "meansum-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["header"] = std::move(header);
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw InputError("cannot write checkpoint binary: " + stem + ".bin");
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    nlohmann::ordered_json row;
    row["name"] = name;
    row["shape"] = t->shape;
    row["dtype"] = "f64";
    row["offset"] = offset;
    row["count"] = t->size();
    table.push_back(std::move(row));
    bin.write(reinterpret_cast<const char*>(t->data.data()),
              std::streamsize(t->size() * sizeof(double)));
    offset += t->size();
  }
  manifest["arrays"] = std::move(table);
  std::ofstream js(stem + ".json", std::ios::binary);
  if (!js) throw InputError("cannot write checkpoint manifest: " + stem + ".json");
  js << manifest.dump(2) << "\n";
}

struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Tensor> arrays;

  const Tensor& require(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw InputError("checkpoint missing array: " + name);
    return it->second;
  }

  // Copies a stored array into dst, which must already have the right shape.
  void restore(const std::string& name, Tensor& dst) const {
    const Tensor& src = require(name);
    if (!src.same_shape(dst)) {
      throw InputError("checkpoint array " + name + " has shape " + src.shape_str() +
                       ", expected " + dst.shape_str());
    }
    dst = src;
  }
};

inline Checkpoint load_arrays(const std::string& stem) {
  std::ifstream js(stem + ".json", std::ios::binary);
  if (!js) throw InputError("cannot read checkpoint manifest: " + stem + ".json");
  nlohmann::json manifest = nlohmann::json::parse(js, nullptr, false);
  if (manifest.is_discarded()) throw InputError("checkpoint manifest is not valid JSON");
  if (manifest.value("format", "") != "meansum-checkpoint" ||
      manifest.value("version", -1) != kCheckpointVersion) {
    throw InputError("checkpoint manifest has wrong format or version: " + stem);
  }
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw InputError("cannot read checkpoint binary: " + stem + ".bin");
  Checkpoint cp;
  cp.header = manifest.at("header");
  for (const auto& row : manifest.at("arrays")) {
    std::string name = row.at("name").get<std::string>();
    std::vector<std::size_t> shape = row.at("shape").get<std::vector<std::size_t>>();
    std::uint64_t offset = row.at("offset").get<std::uint64_t>();
    Tensor t = Tensor::zeros(shape);
    bin.seekg(std::streamoff(offset * sizeof(double)));
    bin.read(reinterpret_cast<char*>(t.data.data()),
             std::streamsize(t.size() * sizeof(double)));
    if (!bin) throw InputError("checkpoint binary truncated at array: " + name);
    cp.arrays.emplace(std::move(name), std::move(t));
  }
  return cp;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

inline std::uint64_t hash_from_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace meansum
