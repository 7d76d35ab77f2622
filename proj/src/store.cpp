#include "steerlab/store.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace steerlab {

ArtifactStore ArtifactStore::open(const fs::path& root) {
  ArtifactStore store;
  store.root_ = root;
  for (const char* sub : {"checkpoints", "caches", "vectors", "saes", "reports", "figures"})
    fs::create_directories(root / sub);
  const fs::path index = root / "index.json";
  if (fs::exists(index)) {
    std::ifstream in(index);
    json j = json::parse(in);
    for (const auto& e : j.at("artifacts")) {
      Entry entry;
      entry.id = e.at("id").get<std::string>();
      entry.kind = e.at("kind").get<std::string>();
      entry.path = e.at("path").get<std::string>();
      entry.config_hash = e.at("config_hash").get<std::string>();
      entry.content_hash = e.value("content_hash", "");
      entry.upstream = e.value("upstream", std::vector<std::string>{});
      store.entries_.push_back(std::move(entry));
    }
  }
  return store;
}

const ArtifactStore::Entry& ArtifactStore::need(const std::string& id,
                                                const std::string& producing_stage) const {
  for (const auto& e : entries_)
    if (e.id == id) return e;
  throw MissingArtifact("missing artifact '" + id + "': run `steerlab " + producing_stage +
                        "` first");
}

std::optional<ArtifactStore::Entry> ArtifactStore::find(const std::string& id) const {
  for (const auto& e : entries_)
    if (e.id == id) return e;
  return std::nullopt;
}

void ArtifactStore::record(const Entry& e) {
  for (auto& existing : entries_)
    if (existing.id == e.id) {
      existing = e;
      save_index();
      return;
    }
  entries_.push_back(e);
  save_index();
}

void ArtifactStore::save_index() const {
  json j;
  json list = json::array();
  for (const auto& e : entries_) {
    list.push_back({{"id", e.id},
                    {"kind", e.kind},
                    {"path", e.path},
                    {"config_hash", e.config_hash},
                    {"content_hash", e.content_hash},
                    {"upstream", e.upstream}});
  }
  j["artifacts"] = list;
  std::ofstream out(root_ / "index.json", std::ios::trunc);
  out << j.dump(2) << "\n";
}

void write_text_file(const fs::path& file, const std::string& content) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot write " + file.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + file.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string file_hash(const fs::path& file) {
  const std::string bytes = read_text_file(file);
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace steerlab
