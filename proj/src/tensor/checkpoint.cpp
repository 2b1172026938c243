#include "sdh/tensor/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sdh::tensor {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
const char* dtype_name();
template <>
const char* dtype_name<float>() { return "f32"; }
template <>
const char* dtype_name<double>() { return "f64"; }

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& in) {
  uint64_t lo = get_u32(in);
  uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

}  // namespace

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path) {
  json index;
  index["version"] = kVersion;
  index["dtype"] = dtype_name<T>();
  index["metadata"] = ckpt.metadata;
  json entries = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(T);
  }
  index["tensors"] = std::move(entries);
  const std::string idx = index.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, idx.size());
  out.write(idx.data(), static_cast<std::streamsize>(idx.size()));
  for (const auto& [name, t] : ckpt.tensors)
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t version = get_u32(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version: " + path);
  uint64_t idx_len = get_u64(in);
  std::string idx(idx_len, '\0');
  in.read(idx.data(), static_cast<std::streamsize>(idx_len));
  if (in.gcount() != static_cast<std::streamsize>(idx_len))
    throw std::runtime_error("truncated checkpoint index: " + path);
  json index = json::parse(idx);
  if (index.at("dtype").get<std::string>() != dtype_name<T>())
    throw std::runtime_error("checkpoint dtype mismatch: " + path);

  Checkpoint<T> ckpt;
  ckpt.metadata = index.value("metadata", std::map<std::string, std::string>{});
  for (const auto& e : index.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    std::vector<T> data(static_cast<size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(T)))
      throw std::runtime_error("truncated checkpoint payload: " + path);
    ckpt.add(name, Tensor<T>::from(shape, std::move(data)));
  }
  return ckpt;
}

template void save_checkpoint<float>(const Checkpoint<float>&, const std::string&);
template void save_checkpoint<double>(const Checkpoint<double>&, const std::string&);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);

}  // namespace sdh::tensor
