#include <cstdlib>
#include <cstring>

#include "gradsdf/kernels.hpp"

namespace gradsdf::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Ops& active() {
    static const Ops& selected = []() -> const Ops& {
        const char* env = std::getenv("GRADSDF_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0) return scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
        if (env && std::strcmp(env, "avx2") == 0) return avx2_ops();
        if (cpu_has_avx2()) return avx2_ops();
#endif
        return scalar_ops();
    }();
    return selected;
}

}  // namespace gradsdf::kernels
