#include "specwin/cpuinfo.hpp"

#include <cstdio>
#include <cstring>

#include <cpuid.h>

namespace specwin {

static std::string intel_microarch(unsigned model, bool atom_core) {
    switch (model) {
    case 0x7A: return "Goldmont Plus";
    case 0x86:
    case 0x96: return "Tremont";
    case 0x8A: return atom_core ? "Tremont" : "Sunny Cove"; // Lakefield hybrid
    case 0x7D:
    case 0x7E:
    case 0x6A:
    case 0x6C: return "Sunny Cove";
    case 0x8C:
    case 0x8D: return "Willow Cove";
    case 0x97:
    case 0x9A:
    case 0xBF: return atom_core ? "Gracemont" : "Golden Cove";
    case 0x8F: return "Golden Cove";          // Sapphire Rapids cores
    case 0xCF: return "Golden Cove";          // Emerald Rapids cores
    case 0xB7:
    case 0xBA: return atom_core ? "Gracemont" : "Raptor Cove";
    default:   return {};
    }
}

static std::string amd_microarch(unsigned family, unsigned model) {
    if (family == 0x17) {
        if (model >= 0x30) return "Zen 2";
        if (model == 0x08 || model == 0x18) return "Zen+";
        return "Zen";
    }
    if (family == 0x19) {
        if (model >= 0x60) return "Zen 4";
        return "Zen 3";
    }
    if (family == 0x1A) return "Zen 5";
    return {};
}

CpuIdentity identify_current_cpu() {
    CpuIdentity id;
    unsigned a, b, c, d;

    __cpuid(0, a, b, c, d);
    unsigned max_leaf = a;
    char vendor[13] = {};
    std::memcpy(vendor + 0, &b, 4);
    std::memcpy(vendor + 4, &d, 4);
    std::memcpy(vendor + 8, &c, 4);
    id.vendor = vendor;

    __cpuid(1, a, b, c, d);
    unsigned base_family = (a >> 8) & 0xF;
    unsigned base_model = (a >> 4) & 0xF;
    id.stepping = a & 0xF;
    id.family = base_family == 0xF ? base_family + ((a >> 20) & 0xFF) : base_family;
    id.model = (base_family == 0x6 || base_family == 0xF)
                   ? base_model | (((a >> 16) & 0xF) << 4)
                   : base_model;

    unsigned max_ext = __get_cpuid_max(0x80000000, nullptr);
    if (max_ext >= 0x80000004) {
        char brand[49] = {};
        for (unsigned i = 0; i < 3; ++i) {
            __cpuid(0x80000002 + i, a, b, c, d);
            std::memcpy(brand + i * 16 + 0, &a, 4);
            std::memcpy(brand + i * 16 + 4, &b, 4);
            std::memcpy(brand + i * 16 + 8, &c, 4);
            std::memcpy(brand + i * 16 + 12, &d, 4);
        }
        id.brand = brand;
        while (!id.brand.empty() && id.brand.back() == ' ')
            id.brand.pop_back();
    }

    bool atom_core = false;
    if (id.vendor == "GenuineIntel" && max_leaf >= 7) {
        __cpuid_count(7, 0, a, b, c, d);
        id.hybrid = (d >> 15) & 1u;
        if (id.hybrid && max_leaf >= 0x1A) {
            __cpuid_count(0x1A, 0, a, b, c, d);
            atom_core = ((a >> 24) & 0xFF) == 0x20;
        }
    }

    if (id.vendor == "GenuineIntel" && id.family == 6)
        id.microarch = intel_microarch(id.model, atom_core);
    else if (id.vendor == "AuthenticAMD")
        id.microarch = amd_microarch(id.family, id.model);

    if (id.microarch.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "family 0x%X model 0x%X", id.family, id.model);
        id.microarch = buf;
    }
    return id;
}

bool running_under_hypervisor() {
    unsigned a, b, c, d;
    __cpuid(1, a, b, c, d);
    return (c >> 31) & 1u;
}

} // namespace specwin
