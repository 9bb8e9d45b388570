#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace survrec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IntVec = Eigen::VectorXi;
using Index = Eigen::Index;

// Error taxonomy: callers distinguish bad user input from internal failures.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

// splitmix64; used to derive independent RNG streams from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stage seed = f(master, label); sub-streams (per tree, per row, per
// resample) chain a further index through the same mix.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return splitmix64(master ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t stream, std::uint64_t index) {
    return splitmix64(stream ^ splitmix64(index + 0x51ed270b8a03ef13ULL));
}

}  // namespace survrec
