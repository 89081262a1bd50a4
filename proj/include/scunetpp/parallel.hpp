#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace scunet {

// Runs fn(i) for i in [0, n). With threads <= 1 the loop is serial; otherwise
// indices are striped over workers. Each index writes its own output slot, so
// results do not depend on scheduling. The first worker exception is rethrown
// on the calling thread after all workers join.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int nw = static_cast<int>(std::min<int64_t>(threads, n));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nw));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < nw; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (int64_t i = w; i < n; i += nw) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace scunet
