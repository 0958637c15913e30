#include "specwin/golden.hpp"

#include <cstdio>

namespace specwin {

namespace {
#include "golden_fixtures.inc"
} // namespace

std::span<const GoldenFixture> golden_fixtures() { return kFixtures; }

std::string check_against_golden(const GoldenFixture& fix) {
    VictimLayout layout;
    auto bytes = encode_victim(fix.options, &layout);
    char buf[160];

    auto mismatch = [&](const char* field, size_t got, size_t want) {
        std::snprintf(buf, sizeof(buf), "%s: %s = %zu, reference %zu", fix.name,
                      field, got, want);
        return std::string(buf);
    };
    if (bytes.size() != fix.bytes.size())
        return mismatch("size", bytes.size(), fix.bytes.size());
    if (layout.branch_site != fix.layout.branch_site)
        return mismatch("branch_site", layout.branch_site, fix.layout.branch_site);
    if (layout.gadget_entry != fix.layout.gadget_entry)
        return mismatch("gadget_entry", layout.gadget_entry, fix.layout.gadget_entry);
    if (layout.landing_pad != fix.layout.landing_pad)
        return mismatch("landing_pad", layout.landing_pad, fix.layout.landing_pad);
    if (layout.code_size != fix.layout.code_size)
        return mismatch("code_size", layout.code_size, fix.layout.code_size);

    for (size_t i = 0; i < bytes.size(); ++i) {
        if (bytes[i] != fix.bytes[i]) {
            std::snprintf(buf, sizeof(buf),
                          "%s: byte %zu = 0x%02X, reference 0x%02X", fix.name, i,
                          bytes[i], fix.bytes[i]);
            return std::string(buf);
        }
    }
    return {};
}

} // namespace specwin
