#include "lexa/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lexa {

MetricsWriter::MetricsWriter(const std::string& path) { open(path); }

void MetricsWriter::open(const std::string& path) {
    path_ = path;
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw std::runtime_error("metrics: cannot open " + path_);
    lines_ = 0;
}

void MetricsWriter::open_truncated(const std::string& path, int64_t lines) {
    path_ = path;
    std::ifstream is(path_);
    std::string kept;
    std::string line;
    int64_t n = 0;
    while (n < lines && std::getline(is, line)) {
        kept += line;
        kept += '\n';
        ++n;
    }
    is.close();
    if (n < lines) throw std::runtime_error("metrics: file has fewer lines than the checkpoint recorded");
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw std::runtime_error("metrics: cannot reopen " + path_);
    os << kept;
    lines_ = lines;
}

void MetricsWriter::write(int64_t env_step, const std::map<std::string, double>& scalars) {
    nlohmann::json j;
    j["env_step"] = env_step;
    for (const auto& [k, v] : scalars) {
        if (!std::isfinite(v)) {
            std::fprintf(stderr, "[lexa] metrics: dropping non-finite value for %s\n", k.c_str());
            continue;
        }
        j[k] = v;
    }
    std::ofstream os(path_, std::ios::app);
    os << j.dump() << "\n";
    lines_ += 1;
}

}  // namespace lexa
