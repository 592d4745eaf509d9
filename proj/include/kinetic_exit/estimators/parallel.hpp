#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kinetic_exit/core.hpp"

// Deterministic block-parallel map/reduce. Work is cut into fixed-size blocks
// of path indices; each block is reduced sequentially, and block results are
// combined by a pairwise tree in index order. The result therefore depends
// only on the block size, never on how many workers ran or in which order.

namespace kinetic_exit::estimators {

inline constexpr std::uint64_t kDefaultBlock = 4096;

namespace detail {
inline std::atomic<int>& worker_override() {
    static std::atomic<int> value{0};
    return value;
}
}  // namespace detail

/// Pin the worker count (0 restores the default).
inline void set_worker_count(int n) { detail::worker_override().store(std::max(0, n)); }

/// KINETIC_EXIT_WORKERS, else the hardware concurrency. An explicit
/// set_worker_count takes precedence over both.
inline int worker_count() {
    if (const int o = detail::worker_override().load(); o > 0) return o;
    if (const char* env = std::getenv("KINETIC_EXIT_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min(v, 1024L));
        throw ConfigError("KINETIC_EXIT_WORKERS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Run body(block_index) for block_index in [0, n_blocks) on the worker pool.
template <class Body>
void for_each_block(std::uint64_t n_blocks, Body&& body) {
    const int workers = static_cast<int>(std::min<std::uint64_t>(worker_count(), n_blocks));
    if (workers <= 1) {
        for (std::uint64_t b = 0; b < n_blocks; ++b) body(b);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        try {
            for (std::uint64_t b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) body(b);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n_blocks);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Reduce items [0, n) with block_fn(begin, end) -> Acc and Acc::merge.
template <class Acc, class BlockFn>
Acc map_reduce(std::uint64_t n, BlockFn&& block_fn, std::uint64_t block = kDefaultBlock) {
    if (n == 0) return Acc{};
    const std::uint64_t n_blocks = (n + block - 1) / block;
    std::vector<Acc> parts(n_blocks);
    for_each_block(n_blocks, [&](std::uint64_t b) {
        const std::uint64_t begin = b * block;
        parts[b] = block_fn(begin, std::min(n, begin + block));
    });
    for (std::uint64_t width = 1; width < n_blocks; width *= 2)
        for (std::uint64_t i = 0; i + width < n_blocks; i += 2 * width) parts[i].merge(parts[i + width]);
    return parts[0];
}

/// Evaluate fn(i) for i in [0, n) into a vector, in parallel.
template <class T, class Fn>
std::vector<T> parallel_map(std::uint64_t n, Fn&& fn, std::uint64_t block = 1) {
    std::vector<T> out(n);
    const std::uint64_t n_blocks = (n + block - 1) / block;
    for_each_block(n_blocks, [&](std::uint64_t b) {
        for (std::uint64_t i = b * block; i < std::min(n, (b + 1) * block); ++i) out[i] = fn(i);
    });
    return out;
}

}  // namespace kinetic_exit::estimators
