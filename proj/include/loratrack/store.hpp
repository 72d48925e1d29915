#pragma once

// Append-only record store. Each record is one JSON object tagged by "type"; the server
// rebuilds its whole in-memory index by replaying records in order.

#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace loratrack::server {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Store {
 public:
  virtual ~Store() = default;
  virtual void append(const nlohmann::json& record) = 0;
  virtual std::vector<nlohmann::json> load() = 0;
};

class MemoryStore : public Store {
 public:
  void append(const nlohmann::json& record) override {
    std::lock_guard lock(mu_);
    records_.push_back(record);
  }
  std::vector<nlohmann::json> load() override {
    std::lock_guard lock(mu_);
    return records_;
  }

 private:
  std::mutex mu_;
  std::vector<nlohmann::json> records_;
};

// JSON-lines file; every append is flushed before returning.
class JsonlStore : public Store {
 public:
  explicit JsonlStore(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  void append(const nlohmann::json& record) override {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw StoreError("store: cannot open " + path_.string());
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw StoreError("store: write failed on " + path_.string());
  }

  std::vector<nlohmann::json> load() override {
    std::lock_guard lock(mu_);
    std::vector<nlohmann::json> records;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      // A torn final line (crash mid-append) is skipped; anything earlier is corruption.
      if (j.is_discarded()) {
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw StoreError("store: corrupt record at line " + std::to_string(lineno));
      }
      records.push_back(std::move(j));
    }
    return records;
  }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

}  // namespace loratrack::server
