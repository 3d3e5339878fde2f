#include "icc/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <string>

#include "icc/error.hpp"

namespace icc {

std::size_t thread_count_from_env() {
    if (const char* env = std::getenv("ICC_THREADS"); env && *env) {
        std::size_t n = 0;
        const char* end = env + std::strlen(env);
        const auto [ptr, ec] = std::from_chars(env, end, n);
        if (ec != std::errc{} || ptr != end || n == 0)
            throw ValidationError(std::string("ICC_THREADS must be a positive integer, got '") + env + "'");
        return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace icc
