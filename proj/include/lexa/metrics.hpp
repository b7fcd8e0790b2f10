#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace lexa {

// Appends JSON-lines records to metrics.jsonl. Keys are sorted, values must
// be finite (non-finite values are dropped with a warning), so two identical
// runs produce byte-identical files.
class MetricsWriter {
  public:
    MetricsWriter() = default;
    explicit MetricsWriter(const std::string& path);

    void open(const std::string& path);
    // Truncates the file to the first `lines` lines (used when resuming).
    void open_truncated(const std::string& path, int64_t lines);

    void write(int64_t env_step, const std::map<std::string, double>& scalars);
    int64_t lines_written() const { return lines_; }

  private:
    std::string path_;
    int64_t lines_ = 0;
};

}  // namespace lexa
