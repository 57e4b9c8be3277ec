#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "coildraw/fmt.hpp"
#include "coildraw/geometry.hpp"
#include "coildraw/io.hpp"
#include "coildraw/simulate_types.hpp"

namespace coildraw {

/// Deterministic identity of a design: mode, wire width, layer, and the
/// ordered node list of the (unmirrored) half. Action encodings don't enter,
/// so geometrically identical designs share one entry.
inline std::string canonical_key(const Layout& layout) {
  std::string key = mode_name(layout.mode);
  key += "|w";
  key += format_double(layout.canvas.wire_width);
  key += "|l";
  key += std::to_string(layout.layer);
  key += '|';
  key += format_double(layout.canvas.input_port.x);
  key += ',';
  key += format_double(layout.canvas.input_port.y);
  for (const Segment& s : layout.segments) {
    key += ';';
    key += format_double(s.end.x);
    key += ',';
    key += format_double(s.end.y);
  }
  return key;
}

/// Memoizes evaluator results so each distinct design is simulated once per
/// process, including designs the evaluator rejected. Safe for concurrent
/// use; concurrent misses on one key run the evaluator exactly once.
class SimulationCache {
 public:
  struct Record {
    std::string key;
    Mode mode = Mode::kSymmetric;
    std::vector<int> actions;
    bool valid = false;
    std::optional<Metrics> metrics;
    std::optional<double> reward_at_reference;  // in-memory only, set by the harness
  };

  struct Result {
    std::optional<Metrics> metrics;
    bool was_simulated = false;
  };

  using SimulateFn = std::function<std::optional<Metrics>(const Layout&)>;

  Result get_or_simulate(const Layout& layout, const SimulateFn& simulate_fn) {
    const std::string key = canonical_key(layout);
    std::unique_lock lock(mutex_);
    for (;;) {
      if (const auto it = index_.find(key); it != index_.end())
        return {records_[it->second].metrics, false};
      if (!in_flight_.contains(key)) break;
      ready_.wait(lock);
    }
    in_flight_.insert(key);
    lock.unlock();

    std::optional<Metrics> metrics;
    try {
      metrics = simulate_fn(layout);
    } catch (...) {
      lock.lock();
      in_flight_.erase(key);
      ready_.notify_all();
      throw;
    }

    lock.lock();
    in_flight_.erase(key);
    Record rec;
    rec.key = key;
    rec.mode = layout.mode;
    rec.actions = layout.actions;
    rec.valid = metrics.has_value();
    rec.metrics = metrics;
    index_.emplace(key, records_.size());
    records_.push_back(std::move(rec));
    ++simulations_;
    ready_.notify_all();
    return {metrics, true};
  }

  std::optional<Record> find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second];
  }

  void set_reference_reward(const std::string& key, double reward) {
    std::lock_guard lock(mutex_);
    if (const auto it = index_.find(key); it != index_.end())
      records_[it->second].reward_at_reference = reward;
  }

  /// Evaluator invocations so far in this process (misses, valid or not).
  std::int64_t simulation_count() const {
    std::lock_guard lock(mutex_);
    return simulations_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

  std::vector<Record> snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  /// Writes every record as one JSONL line, in insertion order.
  void persist(const std::string& path) const {
    std::string out;
    {
      std::lock_guard lock(mutex_);
      for (const Record& r : records_) out += record_to_line(r);
    }
    write_text_file(path, out);
  }

  struct LoadStats {
    std::size_t loaded = 0;
    std::size_t corrupt = 0;
  };

  /// Merges records from a JSONL file; malformed lines are counted, not fatal.
  LoadStats load(const std::string& path) {
    const std::string text = read_text_file(path);
    LoadStats stats;
    std::lock_guard lock(mutex_);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      const std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      Record rec;
      if (!parse_line(line, rec)) {
        ++stats.corrupt;
        continue;
      }
      if (const auto it = index_.find(rec.key); it != index_.end()) {
        records_[it->second] = std::move(rec);
      } else {
        index_.emplace(rec.key, records_.size());
        records_.push_back(std::move(rec));
      }
      ++stats.loaded;
    }
    return stats;
  }

 private:
  static std::string record_to_line(const Record& r) {
    nlohmann::ordered_json j;
    j["key"] = r.key;
    j["mode"] = mode_name(r.mode);
    j["actions"] = r.actions;
    j["valid"] = r.valid;
    if (r.metrics.has_value()) {
      j["metrics"] = {{"L_h", r.metrics->inductance},
                      {"R_ohm", r.metrics->resistance},
                      {"SRF_hz", r.metrics->srf},
                      {"Q", r.metrics->q_factor},
                      {"area_um2", r.metrics->area}};
    } else {
      j["metrics"] = nullptr;
    }
    return j.dump() + "\n";
  }

  static bool parse_line(std::string_view line, Record& rec) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) return false;
    try {
      rec.key = j.at("key").get<std::string>();
      rec.mode = mode_from_name(j.at("mode").get<std::string>());
      rec.actions = j.at("actions").get<std::vector<int>>();
      rec.valid = j.at("valid").get<bool>();
      const auto& m = j.at("metrics");
      if (m.is_null()) {
        if (rec.valid) return false;  // metrics present <=> valid
        rec.metrics.reset();
      } else {
        if (!rec.valid) return false;
        Metrics mm;
        mm.inductance = m.at("L_h").get<double>();
        mm.resistance = m.at("R_ohm").get<double>();
        mm.srf = m.at("SRF_hz").get<double>();
        mm.q_factor = m.at("Q").get<double>();
        mm.area = m.at("area_um2").get<double>();
        rec.metrics = mm;
      }
    } catch (const nlohmann::json::exception&) {
      return false;
    }
    return rec.key.size() > 0;
  }

  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Record> records_;
  std::set<std::string> in_flight_;
  std::int64_t simulations_ = 0;
};

}  // namespace coildraw
