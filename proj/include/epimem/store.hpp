#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "epimem/memory_store.hpp"

namespace epimem {

class UnsupportedVersion : public DataError {
 public:
  using DataError::DataError;
};
class StoreCorruption : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr int kStoreFormatVersion = 1;

// Line-delimited store file: a header record, fragments (extracted then
// reasoned, each in fragment_id order), the cluster/pool trace, and a
// trailing checksum line. Two saves of one store are byte-identical.
void save_store(const MemoryStore& store, const std::filesystem::path& path);

// Verifies version and checksum. The result is unsealed; call seal() with an
// embedding client before retrieval.
MemoryStore load_store(const std::filesystem::path& path);

// Append-only run manifest: a header line then one JSON event per line in
// occurrence order.
class Manifest {
 public:
  explicit Manifest(const std::filesystem::path& path);
  ~Manifest();

  void append(const nlohmann::json& event);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

// Replays pool_updated events into the final pool's cluster ids; the audit
// check that a manifest reconstructs the store's pool trace.
std::vector<std::string> replay_pool_from_manifest(const std::filesystem::path& path);

}  // namespace epimem
