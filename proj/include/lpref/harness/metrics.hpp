#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpref/core/errors.hpp"

namespace lpref {

// Line-delimited metrics log: one JSON object per line with fields
// (run, phase, step, metrics, time). Append-only; readers skip a truncated
// final line, so earlier records survive interrupted writers. The wall-clock
// field is the only non-reproducible part of a record.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, std::string run_id)
      : out_(path, std::ios::app), run_id_(std::move(run_id)) {
    if (!out_) throw IoError("cannot open metrics file: " + path);
  }

  void write(const std::string& phase, int step, const std::map<std::string, double>& metrics) {
    auto it = last_step_.find(phase);
    if (it != last_step_.end() && step < it->second) {
      throw InvalidArgument("metrics: step must be monotone within phase " + phase);
    }
    last_step_[phase] = step;
    nlohmann::json rec;
    rec["run"] = run_id_;
    rec["phase"] = phase;
    rec["step"] = step;
    rec["metrics"] = metrics;
    rec["time"] = iso8601_now();
    out_ << rec.dump() << "\n";
    out_.flush();
    if (!out_) throw IoError("metrics write failed");
  }

  static std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

 private:
  std::ofstream out_;
  std::string run_id_;
  std::map<std::string, int> last_step_;
};

struct MetricsRecord {
  std::string run;
  std::string phase;
  int step = 0;
  std::map<std::string, double> metrics;
  std::string time;
};

// Reads every complete record; an incomplete or malformed trailing line is
// ignored rather than corrupting the earlier ones.
inline std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("run") || !rec.contains("phase") || !rec.contains("step")) {
      continue;
    }
    MetricsRecord m;
    m.run = rec["run"].get<std::string>();
    m.phase = rec["phase"].get<std::string>();
    m.step = rec["step"].get<int>();
    if (rec.contains("metrics")) {
      for (auto& [k, v] : rec["metrics"].items()) m.metrics[k] = v.get<double>();
    }
    if (rec.contains("time")) m.time = rec["time"].get<std::string>();
    out.push_back(std::move(m));
  }
  return out;
}

// Equality of two metrics logs with wall-clock fields excluded; the
// reproducibility contract for same-seed reruns.
inline bool metrics_equal_ignoring_time(const std::vector<MetricsRecord>& a,
                                        const std::vector<MetricsRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].run != b[i].run || a[i].phase != b[i].phase || a[i].step != b[i].step ||
        a[i].metrics != b[i].metrics) {
      return false;
    }
  }
  return true;
}

}  // namespace lpref
