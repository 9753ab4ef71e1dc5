#include <cstdlib>

#include "ehat/errors.hpp"
#include "ehat/kernels.hpp"

namespace ehat::kernels {

// Defined in kernels_avx2.cpp; null when the build or the CPU lacks AVX2.
const Ops* avx2_ops();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const Ops* pick_default() {
    const Ops* choice = &scalar_ops();
    if (const Ops* avx2 = avx2_ops(); avx2 && cpu_has_avx2()) choice = avx2;
    if (const char* env = std::getenv("EHAT_KERNELS")) {
        std::string want = env;
        if (want == "scalar") choice = &scalar_ops();
        else if (want == "avx2" && avx2_ops() && cpu_has_avx2()) choice = avx2_ops();
    }
    return choice;
}

const Ops*& current() {
    static const Ops* ops = pick_default();
    return ops;
}

} // namespace

const Ops& active() { return *current(); }

std::vector<const Ops*> available() {
    std::vector<const Ops*> out{&scalar_ops()};
    if (const Ops* avx2 = avx2_ops(); avx2 && cpu_has_avx2()) out.push_back(avx2);
    return out;
}

void force_backend(const std::string& name) {
    for (const Ops* ops : available()) {
        if (name == ops->name) {
            current() = ops;
            return;
        }
    }
    throw ConfigError("kernel backend '" + name + "' is not available on this machine");
}

} // namespace ehat::kernels
