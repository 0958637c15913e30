#pragma once

#include "specwin/codegen.hpp"

#include <span>
#include <string>

namespace specwin {

// One reference victim assembled by an independent encoder (GNU as via
// tools/gen_golden_fixtures.py) and frozen at generation time. The encoder
// under test must reproduce these byte-for-byte.
struct GoldenFixture {
    const char* name;
    VictimOptions options;
    VictimLayout layout;
    std::span<const uint8_t> bytes;
};

std::span<const GoldenFixture> golden_fixtures();

// Re-encodes the fixture's configuration and compares bytes and layout.
// Returns an empty string on an exact match, otherwise a one-line
// description of the first divergence.
std::string check_against_golden(const GoldenFixture& fix);

} // namespace specwin
