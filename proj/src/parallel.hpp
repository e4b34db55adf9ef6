#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace rfk {

namespace detail {
inline int& thread_cap() {
    static int cap = 2;
    return cap;
}
}  // namespace detail

/// Process-wide worker cap. Results never depend on it: parallel loops only
/// fill disjoint slots and all reductions run serially afterwards.
inline int max_threads() { return detail::thread_cap(); }
inline void set_max_threads(int k) { detail::thread_cap() = std::max(1, k); }

/// Static block partition of [0, count) over at most max_threads() workers.
/// body(i) must write only to slots owned by index i.
template <typename Body>
void parallel_for(long count, Body&& body) {
    const int want = static_cast<int>(std::min<long>(count, max_threads()));
    if (want <= 1 || count < 2) {
        for (long i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(want);
    const long chunk = (count + want - 1) / want;
    for (int w = 0; w < want; ++w) {
        const long lo = w * chunk;
        const long hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace rfk
