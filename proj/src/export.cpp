#include "lexa/export.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace lexa {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1u) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) table[i] = crc32_table_entry(i);
        init = true;
    }
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, crc32(body.data(), body.size()) ^ 0xffffffffu);
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb) {
    if (static_cast<size_t>(width) * height * 3 != rgb.size())
        throw std::invalid_argument("write_png_rgb: buffer does not match dimensions");

    // Raw scanlines with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * 3 + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const uint8_t* row = rgb.data() + static_cast<size_t>(y) * width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
    }

    // zlib stream with stored (uncompressed) deflate blocks.
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xff));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xff));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<long>(off), raw.begin() + static_cast<long>(off + n));
        off += n;
    }
    put_be32(z, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> png{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(width));
    put_be32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", z);
    put_chunk(png, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_png_rgb: cannot open " + path);
    os.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

namespace {

struct EvalRecords {
    std::vector<int64_t> steps;
    std::vector<std::map<std::string, double>> rows;  // eval records only
};

EvalRecords read_eval_records(const std::string& run_dir, const std::string& key_prefix) {
    std::ifstream is(run_dir + "/metrics.jsonl");
    if (!is) throw std::runtime_error("export: cannot open " + run_dir + "/metrics.jsonl");
    EvalRecords out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        std::map<std::string, double> row;
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key().rfind(key_prefix, 0) == 0) row[it.key()] = it.value().get<double>();
        if (!row.empty()) {
            out.steps.push_back(j.at("env_step").get<int64_t>());
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace

ExportResult export_curves(const std::string& run_dir, const std::string& out_dir) {
    auto recs = read_eval_records(run_dir, "eval/");
    fs::create_directories(out_dir);
    const std::string path = out_dir + "/curves.csv";
    std::ofstream os(path, std::ios::trunc);
    os << "env_step,mean_success\n";
    for (size_t i = 0; i < recs.steps.size(); ++i)
        os << recs.steps[i] << "," << recs.rows[i].at("eval/mean_success") << "\n";
    return {{path}};
}

ExportResult export_heatmap(const std::string& run_dir, const std::string& out_dir) {
    auto recs = read_eval_records(run_dir, "eval/");
    fs::create_directories(out_dir);

    std::vector<std::string> goal_keys;
    if (!recs.rows.empty())
        for (const auto& [k, v] : recs.rows.front())
            if (k != "eval/mean_success") goal_keys.push_back(k);

    const std::string csv_path = out_dir + "/heatmap.csv";
    std::ofstream os(csv_path, std::ios::trunc);
    os << "goal";
    for (int64_t s : recs.steps) os << "," << s;
    os << "\n";
    for (const auto& key : goal_keys) {
        std::string id = key.substr(5);
        if (id.size() > 8 && id.substr(id.size() - 8) == "_success") id = id.substr(0, id.size() - 8);
        os << id;
        for (const auto& row : recs.rows) os << "," << row.at(key);
        os << "\n";
    }

    // PNG grid: one cell per (goal, eval), dark blue = 1, light green = 0.
    const int cell = 16;
    const int w = std::max(1, static_cast<int>(recs.steps.size())) * cell;
    const int h = std::max(1, static_cast<int>(goal_keys.size())) * cell;
    std::vector<uint8_t> img(static_cast<size_t>(w) * h * 3, 255);
    for (size_t gi = 0; gi < goal_keys.size(); ++gi)
        for (size_t si = 0; si < recs.steps.size(); ++si) {
            const double v = recs.rows[si].at(goal_keys[gi]);
            const uint8_t r = static_cast<uint8_t>(std::lround(200 - 170 * v));
            const uint8_t g = static_cast<uint8_t>(std::lround(230 - 160 * v));
            const uint8_t b = static_cast<uint8_t>(std::lround(180 + 40 * v));
            for (int y = 0; y < cell; ++y)
                for (int x = 0; x < cell; ++x) {
                    const size_t px = ((gi * cell + static_cast<size_t>(y)) * static_cast<size_t>(w) + si * cell +
                                       static_cast<size_t>(x)) * 3;
                    img[px] = r;
                    img[px + 1] = g;
                    img[px + 2] = b;
                }
        }
    const std::string png_path = out_dir + "/heatmap.png";
    write_png_rgb(png_path, w, h, img);
    return {{csv_path, png_path}};
}

ExportResult export_coincidental(const std::string& run_dir, const std::string& out_dir) {
    auto recs = read_eval_records(run_dir, "explore/coincidental_");
    fs::create_directories(out_dir);
    std::vector<std::string> keys;
    if (!recs.rows.empty())
        for (const auto& [k, v] : recs.rows.front()) keys.push_back(k);

    const std::string path = out_dir + "/coincidental.csv";
    std::ofstream os(path, std::ios::trunc);
    os << "env_step";
    for (const auto& k : keys) {
        std::string id = k.substr(std::string("explore/coincidental_").size());
        if (id.size() > 6 && id.substr(id.size() - 6) == "_count") id = id.substr(0, id.size() - 6);
        os << "," << id;
    }
    os << "\n";
    for (size_t i = 0; i < recs.steps.size(); ++i) {
        os << recs.steps[i];
        for (const auto& k : keys) os << "," << recs.rows[i].at(k);
        os << "\n";
    }
    return {{path}};
}

}  // namespace lexa
