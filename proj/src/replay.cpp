#include "lexa/replay.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lexa {

std::string episode_kind_name(EpisodeKind k) {
    switch (k) {
        case EpisodeKind::Random: return "random";
        case EpisodeKind::Explorer: return "explorer";
        case EpisodeKind::AchieverPractice: return "achiever-practice";
    }
    return "unknown";
}

std::vector<float> EpisodeRecord::frame(int t) const {
    const int d = image_dim();
    std::vector<float> out(static_cast<size_t>(d));
    const uint8_t* src = images.data() + static_cast<size_t>(t) * d;
    for (int i = 0; i < d; ++i) out[static_cast<size_t>(i)] = static_cast<float>(src[i]) / 255.0f;
    return out;
}

void EpisodeRecord::append_frame(const std::vector<float>& image, const float* action) {
    const int d = image_dim();
    if (static_cast<int>(image.size()) != d) throw std::invalid_argument("append_frame: wrong image size");
    for (float v : image) images.push_back(static_cast<uint8_t>(std::lround(v * 255.0f)));
    for (int i = 0; i < action_dim; ++i) actions.push_back(action == nullptr ? 0.0f : action[i]);
    steps += 1;
}

void ReplayBuffer::append(EpisodeRecord ep) {
    total_env_steps_ += ep.env_steps();
    episodes_.push_back(std::move(ep));
}

SequenceBatch ReplayBuffer::sample_sequences(int batch, int steps, RandomSource& rng) const {
    if (episodes_.empty()) throw std::runtime_error("replay: cannot sample from an empty buffer");
    SequenceBatch sb;
    sb.batch = batch;
    sb.steps = steps;
    sb.image_dim = episodes_.front().image_dim();
    sb.action_dim = episodes_.front().action_dim;
    sb.images.assign(static_cast<size_t>(batch) * steps * sb.image_dim, 0.0f);
    sb.actions.assign(static_cast<size_t>(batch) * steps * sb.action_dim, 0.0f);

    for (int b = 0; b < batch; ++b) {
        const auto& ep = episodes_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(episodes_.size()) - 1))];
        if (ep.steps < steps)
            throw std::runtime_error("replay: episode shorter than requested window (" + std::to_string(ep.steps) +
                                     " < " + std::to_string(steps) + ")");
        const int start = rng.uniform_int(0, ep.steps - steps);
        for (int t = 0; t < steps; ++t) {
            const uint8_t* src = ep.images.data() + static_cast<size_t>(start + t) * sb.image_dim;
            float* dst = sb.images.data() + (static_cast<size_t>(t) * batch + b) * sb.image_dim;
            for (int i = 0; i < sb.image_dim; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
            if (t > 0) {
                const float* asrc = ep.actions.data() + static_cast<size_t>(start + t) * sb.action_dim;
                float* adst = sb.actions.data() + (static_cast<size_t>(t) * batch + b) * sb.action_dim;
                std::memcpy(adst, asrc, sizeof(float) * static_cast<size_t>(sb.action_dim));
            }
        }
    }
    return sb;
}

std::pair<int, int> ReplayBuffer::sample_frame(RandomSource& rng) const {
    if (episodes_.empty()) throw std::runtime_error("replay: cannot sample from an empty buffer");
    int64_t total = 0;
    for (const auto& ep : episodes_) total += ep.steps;
    int64_t pick = static_cast<int64_t>(rng.uniform() * static_cast<double>(total));
    if (pick >= total) pick = total - 1;
    for (size_t i = 0; i < episodes_.size(); ++i) {
        if (pick < episodes_[i].steps) return {static_cast<int>(i), static_cast<int>(pick)};
        pick -= episodes_[i].steps;
    }
    return {static_cast<int>(episodes_.size()) - 1, episodes_.back().steps - 1};
}

namespace {
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("episode file: truncated");
    return v;
}
}  // namespace

void save_episode(const std::string& path, const EpisodeRecord& ep) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("episode file: cannot open for writing: " + path);
    os.write("LEXE", 4);
    put_u32(os, kEpisodeVersion);
    put_u32(os, static_cast<uint32_t>(ep.steps));
    put_u32(os, static_cast<uint32_t>(ep.image_h));
    put_u32(os, static_cast<uint32_t>(ep.image_w));
    put_u32(os, static_cast<uint32_t>(ep.image_c));
    put_u32(os, static_cast<uint32_t>(ep.action_dim));
    const uint8_t kind = static_cast<uint8_t>(ep.kind);
    os.write(reinterpret_cast<const char*>(&kind), 1);
    std::vector<float> img_f(ep.images.size());
    for (size_t i = 0; i < ep.images.size(); ++i) img_f[i] = static_cast<float>(ep.images[i]) / 255.0f;
    os.write(reinterpret_cast<const char*>(img_f.data()), static_cast<std::streamsize>(img_f.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(ep.actions.data()),
             static_cast<std::streamsize>(ep.actions.size() * sizeof(float)));
    if (!os) throw std::runtime_error("episode file: write failed: " + path);
}

EpisodeRecord load_episode(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("episode file: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LEXE", 4) != 0) throw std::runtime_error("episode file: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kEpisodeVersion) throw std::runtime_error("episode file: unsupported version");
    EpisodeRecord ep;
    ep.steps = static_cast<int>(get_u32(is));
    ep.image_h = static_cast<int>(get_u32(is));
    ep.image_w = static_cast<int>(get_u32(is));
    ep.image_c = static_cast<int>(get_u32(is));
    ep.action_dim = static_cast<int>(get_u32(is));
    uint8_t kind = 0;
    is.read(reinterpret_cast<char*>(&kind), 1);
    ep.kind = static_cast<EpisodeKind>(kind);
    const size_t n_img = static_cast<size_t>(ep.steps) * ep.image_dim();
    std::vector<float> img_f(n_img);
    is.read(reinterpret_cast<char*>(img_f.data()), static_cast<std::streamsize>(n_img * sizeof(float)));
    ep.images.resize(n_img);
    for (size_t i = 0; i < n_img; ++i) ep.images[i] = static_cast<uint8_t>(std::lround(img_f[i] * 255.0f));
    ep.actions.resize(static_cast<size_t>(ep.steps) * ep.action_dim);
    is.read(reinterpret_cast<char*>(ep.actions.data()),
            static_cast<std::streamsize>(ep.actions.size() * sizeof(float)));
    if (!is) throw std::runtime_error("episode file: truncated payload in " + path);
    return ep;
}

}  // namespace lexa
