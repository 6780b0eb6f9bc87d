#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace nrf {

/// Per-component wall-time accumulator for the timing report. Row names are
/// stable across runs.
class TimingStats {
 public:
  void add(const std::string& name, double seconds) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto& e = entries_[name];
    e.total += seconds;
    ++e.count;
  }

  /// Accounts `seconds` of wall time split across `count` iterations.
  void add_n(const std::string& name, double seconds, int64_t count) {
    if (count <= 0) return;
    std::lock_guard<std::mutex> lock(mutex_);
    auto& e = entries_[name];
    e.total += seconds;
    e.count += count;
  }

  struct Row {
    std::string name;
    double mean_ms = 0.0;
    double total_s = 0.0;
    int64_t count = 0;
  };

  std::vector<Row> rows() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<Row> out;
    for (const auto& [name, e] : entries_) {
      out.push_back({name, e.count ? 1e3 * e.total / e.count : 0.0, e.total,
                     e.count});
    }
    return out;
  }

  double total_seconds(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(name);
    return it == entries_.end() ? 0.0 : it->second.total;
  }

  std::string table() const;

 private:
  struct Entry {
    double total = 0.0;
    int64_t count = 0;
  };
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

/// Scoped timer feeding a TimingStats entry.
class ScopedTimer {
 public:
  ScopedTimer(TimingStats& stats, std::string name)
      : stats_(stats), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    const auto end = std::chrono::steady_clock::now();
    stats_.add(name_, std::chrono::duration<double>(end - start_).count());
  }

 private:
  TimingStats& stats_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace nrf
