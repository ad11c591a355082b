#include "epimem/store.hpp"

#include <fstream>
#include <sstream>

namespace epimem {

namespace {

nlohmann::json fragment_to_json(const MemoryFragment& f, const char* which_store) {
  nlohmann::json j = {{"record", "fragment"},
                      {"store", which_store},
                      {"id", f.fragment_id},
                      {"key", f.key},
                      {"content", f.content},
                      {"category", std::string(category_name(f.category))},
                      {"temporal", render_temporal(f.temporal)},
                      {"source_message_ids", f.source_message_ids},
                      {"session_index", f.session_index},
                      {"warnings", f.warnings}};
  if (f.inference_type) j["inference_type"] = std::string(inference_type_name(*f.inference_type));
  if (f.source_pair) j["source_pair"] = {f.source_pair->first, f.source_pair->second};
  return j;
}

MemoryFragment fragment_from_json(const nlohmann::json& j, const std::string& where) {
  MemoryFragment f;
  f.fragment_id = j.at("id").get<std::string>();
  f.key = j.at("key").get<std::string>();
  f.content = j.at("content").get<std::string>();
  auto category = category_from_name(j.at("category").get<std::string>());
  if (!category) throw StoreCorruption(where + ": unknown category " + j.at("category").dump());
  f.category = *category;
  f.temporal = parse_temporal(j.at("temporal").get<std::string>(), Date{1970, 1, 1});
  f.source_message_ids = j.at("source_message_ids").get<std::vector<std::string>>();
  f.session_index = j.at("session_index").get<int>();
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (j.contains("inference_type")) {
    auto t = inference_type_from_name(j.at("inference_type").get<std::string>());
    if (!t) throw StoreCorruption(where + ": unknown inference_type");
    f.inference_type = t;
  }
  if (j.contains("source_pair")) {
    auto pair = j.at("source_pair").get<std::vector<std::string>>();
    if (pair.size() != 2) throw StoreCorruption(where + ": source_pair must have two ids");
    f.source_pair = std::make_pair(pair[0], pair[1]);
  }
  return f;
}

nlohmann::json cluster_to_json(const Cluster& c) {
  return {{"record", "cluster"},
          {"id", c.cluster_id},
          {"session", c.session_index},
          {"members", c.member_fragment_ids},
          {"centroid", c.centroid}};
}

Cluster cluster_from_json(const nlohmann::json& j) {
  Cluster c;
  c.cluster_id = j.at("id").get<std::string>();
  c.session_index = j.at("session").get<int>();
  c.member_fragment_ids = j.at("members").get<std::vector<std::string>>();
  c.centroid = j.at("centroid").get<EmbeddingVector>();
  return c;
}

nlohmann::json trace_to_json(const SessionTrace& t) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : t.pairs)
    pairs.push_back(
        {{"pool", p.pool_cluster_id}, {"new", p.new_cluster_id}, {"similarity", p.similarity}});
  return {{"record", "trace"},
          {"session", t.session_index},
          {"fragments", t.fragment_count},
          {"k", t.chosen_k},
          {"mean_silhouette", t.silhouette},
          {"fallback_singletons", t.fallback_singletons},
          {"pairs", pairs},
          {"removed", t.removed_cluster_ids},
          {"added", t.added_cluster_ids},
          {"pool_before", t.pool_before},
          {"pool_after", t.pool_after},
          {"reasoned_fragments", t.reasoned_fragments}};
}

SessionTrace trace_from_json(const nlohmann::json& j) {
  SessionTrace t;
  t.session_index = j.at("session").get<int>();
  t.fragment_count = j.at("fragments").get<int>();
  t.chosen_k = j.at("k").get<int>();
  t.silhouette = j.at("mean_silhouette").get<double>();
  t.fallback_singletons = j.at("fallback_singletons").get<bool>();
  for (const auto& p : j.at("pairs"))
    t.pairs.push_back({p.at("pool").get<std::string>(), p.at("new").get<std::string>(),
                       p.at("similarity").get<double>()});
  t.removed_cluster_ids = j.at("removed").get<std::vector<std::string>>();
  t.added_cluster_ids = j.at("added").get<std::vector<std::string>>();
  t.pool_before = j.at("pool_before").get<size_t>();
  t.pool_after = j.at("pool_after").get<size_t>();
  t.reasoned_fragments = j.at("reasoned_fragments").get<int>();
  return t;
}

}  // namespace

void save_store(const MemoryStore& store, const std::filesystem::path& path) {
  if (!store.sealed()) throw InternalError("cannot save an unsealed store");
  std::vector<std::string> lines;
  lines.push_back(nlohmann::json{{"format", "epimem-store"},
                                 {"version", kStoreFormatVersion},
                                 {"conversation_id", store.conversation_id},
                                 {"embedding_backend", store.embedding_backend_id},
                                 {"dimension", store.dimension},
                                 {"config_hash", store.config_hash}}
                      .dump());
  for (const auto& f : store.extracted) lines.push_back(fragment_to_json(f, "M").dump());
  for (const auto& f : store.reasoned) lines.push_back(fragment_to_json(f, "R").dump());
  for (const auto& c : store.final_pool.clusters) lines.push_back(cluster_to_json(c).dump());
  for (const auto& t : store.trace) lines.push_back(trace_to_json(t).dump());

  uint64_t checksum = 14695981039346656037ull;
  for (const auto& line : lines) {
    checksum = fnv1a64(line) ^ (checksum * 1099511628211ull);
  }
  lines.push_back(nlohmann::json{{"record", "checksum"}, {"fnv1a64", hex64(checksum)}}.dump());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write store file " + path.string());
  for (const auto& line : lines) out << line << "\n";
}

MemoryStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open store file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.empty()) throw StoreCorruption(path.string() + ": empty store file");

  auto parse_line = [&](size_t i) {
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded())
      throw StoreCorruption(path.string() + ": malformed line " + std::to_string(i + 1));
    return j;
  };

  const auto header = parse_line(0);
  if (header.value("format", "") != "epimem-store")
    throw StoreCorruption(path.string() + ": not a store file");
  if (!header.contains("version") || !header.at("version").is_number_integer() ||
      header.at("version").get<int>() != kStoreFormatVersion)
    throw UnsupportedVersion(path.string() + ": unsupported store version " +
                             header.value("version", nlohmann::json{}).dump());

  const auto checksum_line = parse_line(lines.size() - 1);
  if (checksum_line.value("record", "") != "checksum")
    throw StoreCorruption(path.string() + ": missing checksum line");
  uint64_t checksum = 14695981039346656037ull;
  for (size_t i = 0; i + 1 < lines.size(); ++i)
    checksum = fnv1a64(lines[i]) ^ (checksum * 1099511628211ull);
  if (checksum_line.at("fnv1a64").get<std::string>() != hex64(checksum))
    throw StoreCorruption(path.string() + ": checksum mismatch");

  MemoryStore store;
  store.conversation_id = header.value("conversation_id", "");
  store.embedding_backend_id = header.value("embedding_backend", "");
  store.dimension = header.value("dimension", 0);
  store.config_hash = header.value("config_hash", "");
  for (size_t i = 1; i + 1 < lines.size(); ++i) {
    const auto j = parse_line(i);
    const std::string where = path.string() + " line " + std::to_string(i + 1);
    const std::string record = j.value("record", "");
    if (record == "fragment") {
      auto f = fragment_from_json(j, where);
      if (j.at("store").get<std::string>() == "M")
        store.extracted.push_back(std::move(f));
      else
        store.reasoned.push_back(std::move(f));
    } else if (record == "cluster") {
      store.final_pool.clusters.push_back(cluster_from_json(j));
    } else if (record == "trace") {
      store.trace.push_back(trace_from_json(j));
    } else {
      throw StoreCorruption(where + ": unknown record type \"" + record + "\"");
    }
  }
  return store;
}

Manifest::Manifest(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary);
  if (!out_) throw DataError("cannot write manifest " + path.string());
  out_ << nlohmann::json{{"format", "epimem-manifest"}, {"version", 1}}.dump() << "\n";
}

Manifest::~Manifest() = default;

void Manifest::append(const nlohmann::json& event) {
  out_ << event.dump() << "\n";
  out_.flush();
}

std::vector<std::string> replay_pool_from_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::string> pool;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw StoreCorruption(path.string() + ": malformed manifest line");
    if (j.value("event", "") != "pool_updated") continue;
    for (const auto& removed : j.at("removed"))
      std::erase(pool, removed.get<std::string>());
    for (const auto& added : j.at("added")) pool.push_back(added.get<std::string>());
  }
  return pool;
}

}  // namespace epimem
