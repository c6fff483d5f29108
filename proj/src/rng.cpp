#include "psmt/rng.hpp"

#include <sstream>
#include <vector>

#include "psmt/error.hpp"

namespace psmt {

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * tags.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto t : tags) push(t);
    std::seed_seq seq(words.begin(), words.end());
    Rng rng;
    rng.engine_.seed(seq);
    return rng;
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw DataError("corrupt RNG state");
}

}  // namespace psmt
