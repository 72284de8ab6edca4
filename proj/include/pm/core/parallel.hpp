#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace pm {

struct Strip {
    int index = 0;
    int begin = 0;  // first row, inclusive
    int end = 0;    // last row, exclusive
};

/// Splits [begin, end) into `count` near-equal horizontal strips.
inline std::vector<Strip> make_strips(int begin, int end, int count) {
    const int rows = std::max(0, end - begin);
    count = std::clamp(count, 1, std::max(1, rows));
    std::vector<Strip> strips;
    strips.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        const int b = begin + int((long long)rows * i / count);
        const int e = begin + int((long long)rows * (i + 1) / count);
        strips.push_back({i, b, e});
    }
    return strips;
}

/// Runs `fn(strip)` on one worker per strip and joins them all. Joining is
/// the barrier between sweeps. The first exception thrown by a worker is
/// rethrown after every worker has finished.
template <class Fn>
void run_strips(const std::vector<Strip>& strips, Fn&& fn) {
    if (strips.size() <= 1) {
        for (const Strip& s : strips) fn(s);
        return;
    }
    std::vector<std::exception_ptr> errors(strips.size());
    {
        std::vector<std::jthread> workers;
        workers.reserve(strips.size());
        for (std::size_t i = 0; i < strips.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    fn(strips[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Parallel loop over rows [begin, end) with `threads` workers.
template <class Fn>
void parallel_rows(int begin, int end, int threads, Fn&& fn) {
    run_strips(make_strips(begin, end, threads), [&](const Strip& s) {
        for (int y = s.begin; y < s.end; ++y) fn(y);
    });
}

}  // namespace pm
