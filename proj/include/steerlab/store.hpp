#pragma once

#include "steerlab/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace steerlab {

// Content-addressed experiment store: fixed subdirectories per artifact kind,
// one index.json mapping artifact ids to paths, config hashes and upstream
// artifact hashes.
class ArtifactStore {
 public:
  struct Entry {
    std::string id;
    std::string kind;
    std::string path;  // relative to the store root
    std::string config_hash;
    std::string content_hash;
    std::vector<std::string> upstream;  // upstream artifact ids
  };

  static ArtifactStore open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_of(const Entry& e) const { return root_ / e.path; }

  // Resolves an artifact or throws MissingArtifact naming the producing stage.
  const Entry& need(const std::string& id, const std::string& producing_stage) const;
  std::optional<Entry> find(const std::string& id) const;

  void record(const Entry& e);
  void save_index() const;

  std::vector<Entry> all() const { return entries_; }

 private:
  std::filesystem::path root_;
  std::vector<Entry> entries_;
};

// Helpers for deterministic text artifacts.
void write_text_file(const std::filesystem::path& file, const std::string& content);
std::string read_text_file(const std::filesystem::path& file);
std::string file_hash(const std::filesystem::path& file);

}  // namespace steerlab
