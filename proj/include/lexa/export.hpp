#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lexa {

// Minimal PNG writer (8-bit RGB, stored deflate blocks); no external deps.
void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb);

struct ExportResult {
    std::vector<std::string> files;
};

// curves: env_step vs eval/mean_success CSV.
// heatmap: goals x evals success matrix CSV plus a rendered PNG grid.
// coincidental: cumulative per-goal exploration-phase success counts CSV.
ExportResult export_curves(const std::string& run_dir, const std::string& out_dir);
ExportResult export_heatmap(const std::string& run_dir, const std::string& out_dir);
ExportResult export_coincidental(const std::string& run_dir, const std::string& out_dir);

}  // namespace lexa
