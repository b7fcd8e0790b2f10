#include "lexa/random.hpp"

#include <sstream>
#include <stdexcept>

namespace lexa {

std::string RandomSource::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void RandomSource::deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (is.fail()) throw std::invalid_argument("RandomSource::deserialize: malformed state string");
}

uint64_t RandomSource::mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace lexa
