#include "dxtab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dxtab::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select() {
    const char* env = std::getenv("DXTAB_KERNELS");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return &scalar_table();
        if (std::strcmp(env, "avx2") == 0 && avx2_table() != nullptr && cpu_has_avx2())
            return avx2_table();
    }
    if (avx2_table() != nullptr && cpu_has_avx2()) return avx2_table();
    return &scalar_table();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable* chosen = select();
    return *chosen;
}

}  // namespace dxtab::kern
