#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lexa/world_model.hpp"

namespace lexa {

enum class EpisodeKind : uint8_t { Random = 0, Explorer = 1, AchieverPractice = 2 };

std::string episode_kind_name(EpisodeKind k);

// One environment trajectory. images[t] is the frame observed at step t;
// actions[t] is the action executed between frames t-1 and t (slot 0 is
// zero). Frames are stored at 8-bit depth, which is lossless for the
// quantized renderer output.
struct EpisodeRecord {
    int steps = 0;  // frame count (env steps + 1)
    int image_h = 16, image_w = 16, image_c = 3;
    int action_dim = 2;
    EpisodeKind kind = EpisodeKind::Random;
    uint64_t seed = 0;
    int index = 0;
    std::vector<uint8_t> images;  // steps * h * w * c
    std::vector<float> actions;   // steps * action_dim

    int image_dim() const { return image_h * image_w * image_c; }
    int env_steps() const { return steps - 1; }
    std::vector<float> frame(int t) const;
    void append_frame(const std::vector<float>& image, const float* action);
};

// Append-only store of full episodes. Sampling draws contiguous fixed-length
// windows; episodes are immutable once appended.
class ReplayBuffer {
  public:
    void append(EpisodeRecord ep);
    size_t size() const { return episodes_.size(); }
    int64_t total_env_steps() const { return total_env_steps_; }
    const EpisodeRecord& episode(size_t i) const { return episodes_.at(i); }

    // B uniformly sampled episodes x uniformly placed windows of length T.
    // The first action slot of every window is zeroed to match the zero
    // initial latent state.
    SequenceBatch sample_sequences(int batch, int steps, RandomSource& rng) const;

    // Uniform over every stored frame.
    std::pair<int, int> sample_frame(RandomSource& rng) const;
    std::vector<float> frame(int episode, int t) const { return episodes_.at(static_cast<size_t>(episode)).frame(t); }

  private:
    std::vector<EpisodeRecord> episodes_;
    int64_t total_env_steps_ = 0;
};

// Episode file: magic "LEXE" | u32 version | u32 T | u32 H | u32 W | u32 C |
// u32 A | u8 kind | f32 images | f32 actions (little-endian).
inline constexpr uint32_t kEpisodeVersion = 1;

void save_episode(const std::string& path, const EpisodeRecord& ep);
EpisodeRecord load_episode(const std::string& path);

}  // namespace lexa
