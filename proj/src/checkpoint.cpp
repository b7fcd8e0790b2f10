#include "lexa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lexa {

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_record(std::ostream& os, const std::string& name, const Shape& shape, std::span<const float> data) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

struct Record {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

Record get_record(std::istream& is) {
    Record r;
    const uint32_t name_len = get_u32(is);
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    const uint32_t rank = get_u32(is);
    r.shape.resize(rank);
    for (uint32_t i = 0; i < rank; ++i) r.shape[i] = static_cast<int>(get_u32(is));
    r.data.resize(static_cast<size_t>(shape_numel(r.shape)));
    is.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated record " + r.name);
    return r;
}

}  // namespace

void save_checkpoint(const std::string& path, std::span<const ParamPtr> params, const std::string& meta_json) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write("LEXA", 4);
    put_u32(os, kCheckpointVersion);

    put_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) put_record(os, p->name, p->value.shape(), p->value.data());

    put_u32(os, static_cast<uint32_t>(params.size() * 3));
    for (const auto& p : params) {
        put_record(os, p->name + ".m", p->value.shape(), p->adam_m);
        put_record(os, p->name + ".v", p->value.shape(), p->adam_v);
        const float t = static_cast<float>(p->step_count);
        put_record(os, p->name + ".t", Shape{}, std::span<const float>(&t, 1));
    }

    put_u32(os, static_cast<uint32_t>(meta_json.size()));
    os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::string load_checkpoint(const std::string& path, const ParamSet& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LEXA", 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    const uint32_t n_values = get_u32(is);
    for (uint32_t i = 0; i < n_values; ++i) {
        Record r = get_record(is);
        ParamPtr p = params.find(r.name);
        if (p == nullptr) throw std::runtime_error("checkpoint: unknown parameter " + r.name);
        if (p->value.shape() != r.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + r.name + ": file " + shape_str(r.shape) +
                                     " vs registry " + shape_str(p->value.shape()));
        std::copy(r.data.begin(), r.data.end(), p->value.mutable_data().begin());
    }

    const uint32_t n_state = get_u32(is);
    for (uint32_t i = 0; i < n_state; ++i) {
        Record r = get_record(is);
        if (r.name.size() < 2 || r.name[r.name.size() - 2] != '.')
            throw std::runtime_error("checkpoint: malformed state record " + r.name);
        const char tag = r.name.back();
        const std::string base = r.name.substr(0, r.name.size() - 2);
        ParamPtr p = params.find(base);
        if (p == nullptr) throw std::runtime_error("checkpoint: unknown parameter " + base);
        if (tag == 'm') {
            p->adam_m = std::move(r.data);
        } else if (tag == 'v') {
            p->adam_v = std::move(r.data);
        } else if (tag == 't') {
            p->step_count = static_cast<int64_t>(r.data.at(0));
        } else {
            throw std::runtime_error("checkpoint: unknown state tag in " + r.name);
        }
    }

    const uint32_t meta_len = get_u32(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    if (!is) throw std::runtime_error("checkpoint: truncated meta in " + path);
    return meta;
}

std::string read_checkpoint_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LEXA", 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    for (int section = 0; section < 2; ++section) {
        const uint32_t count = get_u32(is);
        for (uint32_t i = 0; i < count; ++i) (void)get_record(is);
    }
    const uint32_t meta_len = get_u32(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    if (!is) throw std::runtime_error("checkpoint: truncated meta in " + path);
    return meta;
}

}  // namespace lexa
