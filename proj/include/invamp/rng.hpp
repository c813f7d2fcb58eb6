#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace invamp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream keyed by (seed, a, b). Draw order inside one stream is
// fixed, so results do not depend on which thread handles which key.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
        : eng_(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd1342543de82ef95ULL))) {}

    double normal() { return nd_(eng_); }
    double uniform() { return ud_(eng_); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> nd_{0.0, 1.0};
    std::uniform_real_distribution<double> ud_{0.0, 1.0};
};

// Static block partition of [0, n) over worker threads. Bodies must only
// write to index-private state.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nt);
    for (std::size_t w = 0; w < nt; ++w) {
        pool.emplace_back([&, w] {
            try {
                std::size_t lo = n * w / nt, hi = n * (w + 1) / nt;
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace invamp
