#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rotostep {

/// Worker cap from ROTOSTEP_WORKERS, else the hardware concurrency (at least 1).
inline int default_workers()
{
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("ROTOSTEP_WORKERS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) n = cap;
        } catch (...) {
            // unparsable value: keep the hardware default
        }
    }
    return n;
}

/// Run body(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend on the
/// worker count, so bodies must write disjoint outputs. The first exception (lowest chunk)
/// is rethrown after all chunks finish.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body)
{
    workers = std::max(1, workers);
    if (workers == 1 || n < 2) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::exception_ptr> errors(chunks);
    auto run = [&](std::size_t c) {
        try {
            body(n * c / chunks, n * (c + 1) / chunks);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(chunks - 1);
        for (std::size_t c = 1; c < chunks; ++c) pool.emplace_back(run, c);
        run(0);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace rotostep
