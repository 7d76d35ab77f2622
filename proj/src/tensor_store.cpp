#include "steerlab/tensor_store.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace steerlab {

NamedTensor NamedTensor::from_matrix(const std::string& name, const Matf& m) {
  NamedTensor t;
  t.name = name;
  t.shape = {m.rows(), m.cols()};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

NamedTensor NamedTensor::from_vector(const std::string& name, const Vecf& v) {
  NamedTensor t;
  t.name = name;
  t.shape = {v.size()};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

int64_t NamedTensor::count() const {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return n;
}

Matf NamedTensor::to_matrix() const {
  if (shape.size() != 2) throw IntegrityError("tensor " + name + " is not 2-D");
  Matf m(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Vecf NamedTensor::to_vector() const {
  if (shape.size() != 1) throw IntegrityError("tensor " + name + " is not 1-D");
  Vecf v(shape[0]);
  std::copy(data.begin(), data.end(), v.data());
  return v;
}

void write_container(const fs::path& dir, const std::vector<NamedTensor>& tensors,
                     const json& meta) {
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["meta"] = meta;
  json list = json::array();
  int idx = 0;
  for (const auto& t : tensors) {
    char fname[32];
    std::snprintf(fname, sizeof(fname), "t%04d.bin", idx++);
    const size_t nbytes = t.data.size() * sizeof(float);
    if (static_cast<int64_t>(t.data.size()) != t.count())
      throw IntegrityError("tensor " + t.name + " shape/data mismatch");
    std::ofstream out(dir / fname, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot open " + (dir / fname).string());
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(nbytes));
    json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["file"] = fname;
    entry["offset"] = 0;
    entry["length"] = nbytes;
    entry["checksum"] = "fnv1a64:" + hex64(fnv1a64(t.data.data(), nbytes));
    list.push_back(entry);
  }
  manifest["tensors"] = list;
  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

TensorMap read_container(const fs::path& dir, json* meta_out) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw MissingArtifact("no manifest at " + dir.string());
  json manifest = json::parse(mf);
  if (meta_out) *meta_out = manifest.value("meta", json::object());
  TensorMap map;
  for (const auto& entry : manifest.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto fname = entry.at("file").get<std::string>();
    const auto length = entry.at("length").get<size_t>();
    const auto offset = entry.at("offset").get<size_t>();
    std::ifstream in(dir / fname, std::ios::binary);
    if (!in) throw IntegrityError("missing tensor file " + (dir / fname).string());
    in.seekg(static_cast<std::streamoff>(offset));
    t.data.resize(length / sizeof(float));
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(length));
    if (in.gcount() != static_cast<std::streamsize>(length))
      throw IntegrityError("short read on " + (dir / fname).string());
    const auto want = entry.at("checksum").get<std::string>();
    const auto got = "fnv1a64:" + hex64(fnv1a64(t.data.data(), length));
    if (want != got) throw IntegrityError("checksum mismatch for tensor " + t.name);
    if (static_cast<int64_t>(t.data.size()) != t.count())
      throw IntegrityError("tensor " + t.name + " length/shape mismatch");
    map.emplace(t.name, std::move(t));
  }
  return map;
}

std::string container_hash(const fs::path& dir) {
  uint64_t h = 0xcbf29ce484222325ull;
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw MissingArtifact("no manifest at " + dir.string());
  std::string bytes((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  h = fnv1a64(bytes.data(), bytes.size(), h);
  json manifest = json::parse(bytes);
  for (const auto& entry : manifest.at("tensors")) {
    std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
    std::string tb((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64(tb.data(), tb.size(), h);
  }
  return hex64(h);
}

}  // namespace steerlab
