#include "epimem/embedding.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace epimem {

EmbeddingVector MockEmbeddingBackend::embed(const std::string& text) {
  if (dimension_ <= 0) throw ConfigError("mock embedding backend needs a positive dimension");
  std::mt19937_64 rng(fnv1a64(text));
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingVector v(dimension_);
  double norm_sq = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > 0) {
    for (auto& x : v) x /= norm;
  } else {
    v[0] = 1.0;
  }
  return v;
}

HttpEmbeddingBackend::HttpEmbeddingBackend(std::string base_url, std::string model,
                                           std::string token_env_var, int dimension)
    : base_url_(std::move(base_url)),
      model_(std::move(model)),
      token_env_var_(std::move(token_env_var)),
      dimension_(dimension) {}

EmbeddingVector HttpEmbeddingBackend::embed(const std::string& text) {
  httplib::Client client(base_url_);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(token_env_var_.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);
  nlohmann::json body = {{"model", model_}, {"input", text}};
  auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
  if (!res || res->status != 200)
    throw EmbeddingUnavailable("embedding backend " + base_url_ + " failed" +
                               (res ? " with HTTP " + std::to_string(res->status) : ""));
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("data") || parsed["data"].empty())
    throw EmbeddingUnavailable("malformed embedding response from " + base_url_);
  EmbeddingVector v = parsed["data"][0]["embedding"].get<EmbeddingVector>();
  if (dimension_ == 0) dimension_ = static_cast<int>(v.size());
  if (static_cast<int>(v.size()) != dimension_)
    throw EmbeddingUnavailable("embedding dimension changed mid-run");
  return v;
}

EmbeddingClient::EmbeddingClient(std::shared_ptr<EmbeddingBackend> backend)
    : backend_(std::move(backend)) {
  if (!backend_) throw ConfigError("embedding client has no backend");
}

EmbeddingVector EmbeddingClient::embed_text(const std::string& text) {
  const uint64_t key = fnv1a64(text);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  EmbeddingVector v = backend_->embed(text);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace(key, v);
  return v;
}

EmbeddingVector EmbeddingClient::embed_fragment(const MemoryFragment& fragment) {
  return embed_text(embedding_text(fragment));
}

size_t EmbeddingClient::cache_size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.size();
}

size_t EmbeddingClient::cache_hits() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return hits_;
}

namespace {
constexpr const char* kCacheMagic = "EPIMEM-EMBCACHE";
constexpr int kCacheVersion = 1;
}  // namespace

void EmbeddingClient::save_cache(const std::filesystem::path& path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream bin(path, std::ios::binary);
  std::ofstream idx(path.string() + ".idx");
  if (!bin || !idx) throw DataError("cannot write embedding cache at " + path.string());
  const int dim = backend_->dimension();
  bin << kCacheMagic << " v" << kCacheVersion << " backend=" << backend_->id() << " dim=" << dim
      << "\n";
  idx << kCacheMagic << "-IDX v" << kCacheVersion << "\n";
  uint64_t offset = 0;
  for (const auto& [key, vec] : cache_) {  // std::map: key order, stable bytes
    bin.write(reinterpret_cast<const char*>(vec.data()),
              static_cast<std::streamsize>(vec.size() * sizeof(double)));
    idx << hex64(key) << " " << offset << " " << vec.size() << "\n";
    offset += vec.size();
  }
}

void EmbeddingClient::load_cache(const std::filesystem::path& path) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) return;  // cold cache
  std::string header;
  std::getline(bin, header);
  std::ostringstream want;
  want << kCacheMagic << " v" << kCacheVersion << " backend=" << backend_->id()
       << " dim=" << backend_->dimension();
  if (header != want.str())
    throw DataError("embedding cache header mismatch at " + path.string() + " (found \"" + header +
                    "\")");
  const std::streampos data_start = bin.tellg();

  std::ifstream idx(path.string() + ".idx");
  if (!idx) throw DataError("embedding cache index missing: " + path.string() + ".idx");
  std::string idx_header;
  std::getline(idx, idx_header);
  std::lock_guard<std::mutex> lock(mutex_);
  std::string hex;
  uint64_t offset = 0, count = 0;
  while (idx >> hex >> offset >> count) {
    EmbeddingVector v(count);
    bin.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(double)));
    bin.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw DataError("embedding cache truncated: " + path.string());
    cache_.emplace(std::stoull(hex, nullptr, 16), std::move(v));
  }
}

}  // namespace epimem
