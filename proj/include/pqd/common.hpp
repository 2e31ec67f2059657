#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace pqd {

/// Dense row-major matrix of doubles. Used for S-Transform amplitudes and
/// intermediate image planes.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
};

namespace detail {

// Fixed-size worker pool. Work is split into contiguous chunks by slot index,
// so results never depend on scheduling order.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    unsigned worker_count() const { return static_cast<unsigned>(workers_.size()) + 1; }

    // Runs job(slot) for slot in [0, nslots); slot 0 executes on the caller.
    // Every worker checks in once per generation whether or not it drew a
    // slot, so the caller waits for all of them and done_ never overshoots.
    void run(unsigned nslots, const std::function<void(unsigned)>& job) {
        {
            std::unique_lock lock(m_);
            job_ = &job;
            nslots_ = nslots;
            done_ = 0;
            error_ = nullptr;
            ++generation_;
        }
        cv_job_.notify_all();
        try {
            job(0);
        } catch (...) {
            std::lock_guard lock(m_);
            if (!error_) error_ = std::current_exception();
        }
        {
            std::unique_lock lock(m_);
            cv_done_.wait(lock, [&] { return done_ == workers_.size(); });
            job_ = nullptr;
            if (error_) std::rethrow_exception(error_);
        }
    }

private:
    ThreadPool() {
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        for (unsigned i = 1; i < hw; ++i)
            workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ~ThreadPool() {
        {
            std::lock_guard lock(m_);
            stop_ = true;
        }
        cv_job_.notify_all();
        for (auto& w : workers_) w.join();
    }

    void worker_loop(unsigned slot) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(unsigned)>* job = nullptr;
            {
                std::unique_lock lock(m_);
                cv_job_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                if (slot < nslots_) job = job_;
            }
            if (job) {
                try {
                    (*job)(slot);
                } catch (...) {
                    std::lock_guard lock(m_);
                    if (!error_) error_ = std::current_exception();
                }
            }
            {
                std::lock_guard lock(m_);
                ++done_;
            }
            cv_done_.notify_one();
        }
    }

    std::vector<std::thread> workers_;
    std::mutex m_;
    std::condition_variable cv_job_, cv_done_;
    const std::function<void(unsigned)>* job_ = nullptr;
    unsigned nslots_ = 0;
    std::size_t done_ = 0;
    std::uint64_t generation_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

inline unsigned& thread_cap() {
    static unsigned cap = [] {
        if (const char* env = std::getenv("PQD_THREADS")) {
            long n = std::strtol(env, nullptr, 10);
            if (n >= 1) return static_cast<unsigned>(n);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1u : hw;
    }();
    return cap;
}

inline bool& inside_worker() {
    thread_local bool flag = false;
    return flag;
}

} // namespace detail

/// Caps the number of threads parallel loops may use (0 restores the default).
inline void set_max_threads(unsigned n) {
    if (n == 0) {
        unsigned hw = std::thread::hardware_concurrency();
        n = hw == 0 ? 1u : hw;
    }
    detail::thread_cap() = n;
}

inline unsigned max_threads() { return detail::thread_cap(); }

/// Runs f(i) for i in [0, n). Iterations are distributed as contiguous chunks,
/// so any iteration's writes must be disjoint from the others'; under that
/// contract the result is identical for every thread count.
template <typename F>
void parallel_for(std::size_t n, F&& f, std::size_t grain = 1) {
    if (n == 0) return;
    auto& pool = detail::ThreadPool::instance();
    unsigned nw = std::min<unsigned>(max_threads(), pool.worker_count());
    if (grain > 0) nw = std::min<std::size_t>(nw, (n + grain - 1) / grain);
    if (nw <= 1 || detail::inside_worker()) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::function<void(unsigned)> job = [&](unsigned slot) {
        detail::inside_worker() = true;
        std::size_t begin = n * slot / nw;
        std::size_t end = n * (slot + 1) / nw;
        for (std::size_t i = begin; i < end; ++i) f(i);
        detail::inside_worker() = false;
    };
    pool.run(nw, job);
}

} // namespace pqd
