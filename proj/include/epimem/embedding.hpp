#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "epimem/core.hpp"

namespace epimem {

using EmbeddingVector = std::vector<double>;

class EmbeddingUnavailable : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual int dimension() const = 0;
  virtual std::string id() const = 0;
};

// Deterministic stand-in: a unit vector drawn from an RNG seeded with the
// FNV-1a hash of the text (mt19937_64 + standard normals, then normalized).
class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(int dimension = 32) : dimension_(dimension) {}
  EmbeddingVector embed(const std::string& text) override;
  int dimension() const override { return dimension_; }
  std::string id() const override { return "mock-" + std::to_string(dimension_); }

 private:
  int dimension_;
};

// OpenAI-style /v1/embeddings client.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(std::string base_url, std::string model, std::string token_env_var,
                       int dimension);
  EmbeddingVector embed(const std::string& text) override;
  int dimension() const override { return dimension_; }
  std::string id() const override { return "http:" + model_; }

 private:
  std::string base_url_;
  std::string model_;
  std::string token_env_var_;
  int dimension_;
};

// Backend wrapper with a content-hash cache, persistable to disk so reruns
// avoid backend calls. Disk format: <path>.bin (header + raw doubles) plus
// <path>.idx (text index mapping hashes to offsets).
class EmbeddingClient {
 public:
  explicit EmbeddingClient(std::shared_ptr<EmbeddingBackend> backend);

  EmbeddingVector embed_text(const std::string& text);
  EmbeddingVector embed_fragment(const MemoryFragment& fragment);  // embeds "key: content"

  size_t cache_size() const;
  size_t cache_hits() const;

  void save_cache(const std::filesystem::path& path) const;
  // Ignores a missing file; rejects a header from a different backend/dim.
  void load_cache(const std::filesystem::path& path);

  const EmbeddingBackend& backend() const { return *backend_; }

 private:
  std::shared_ptr<EmbeddingBackend> backend_;
  mutable std::mutex mutex_;
  std::map<uint64_t, EmbeddingVector> cache_;
  size_t hits_ = 0;
};

}  // namespace epimem
