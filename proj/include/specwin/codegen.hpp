#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace specwin {

// Disclosure gadget bodies the victim branch speculatively executes.
enum class GadgetKind {
    LoadShiftLoad,   // load32 [data+idx]; shl 0xc; load32 [probe+value]
    LoadOnce,        // load32 [probe+idx]
    MinimalLoad,     // load64 [r]; load64 [r]
    StoreGadget,     // load64 [r]; store-imm [r]
    PrefetchGadget,  // load64 [r]; prefetcht0 [r]
    FlushGadget,     // load64 [r]; clflush [r]  (detected in inverted mode)
    ComplexLoad,     // load64 [r]; load64 [probe + r*8]
    ThreeLoadMasked, // load64 [b]; load64 [b]; and 0xff; shl 0xc; load [probe+v]
};

enum class FenceMode {
    NoFence,
    Lfence, // exactly one dispatch-serializing LFENCE right before the jump
};

// Spacer instruction placed in front of the gadget to size the window.
enum class SpacerKind { Nop, Cbw };

struct VictimOptions {
    GadgetKind gadget = GadgetKind::LoadShiftLoad;
    FenceMode fence = FenceMode::Lfence;
    int spacer_nops = 0;          // instruction count, <= kMaxSpacers
    SpacerKind spacer_kind = SpacerKind::Nop;
    int branch_align = 16;        // power of two; alignment of the indirect jump
};

inline constexpr int kMaxSpacers = 64;

// Offsets into the victim code buffer. The byte at gadget_entry begins the
// spacers followed by the gadget template; the landing pad performs no
// memory access and returns to the harness.
struct VictimLayout {
    size_t code_size = 0;
    size_t branch_site = 0;   // offset of the register-indirect jump
    size_t gadget_entry = 0;
    size_t landing_pad = 0;
    int spacer_nops = 0;
};

// Pure encoder: deterministic bytes for (gadget, fence, spacers), no
// allocation, no absolute addresses anywhere in the emitted code. All
// runtime pointers arrive in registers, so two builds of the same
// configuration are byte-identical.
std::vector<uint8_t> encode_victim(const VictimOptions& opt, VictimLayout* layout = nullptr);

// Landing pad template: restore the saved register, return to the harness.
std::vector<uint8_t> encode_landing_pad();

// Gadget body template alone (no spacers, no epilogue).
std::vector<uint8_t> encode_gadget_body(GadgetKind kind);

const char* gadget_name(GadgetKind k);
const char* fence_name(FenceMode m);
const char* spacer_name(SpacerKind k);

// Page-granular executable memory. Built writable, sealed to RX before use;
// immutable afterwards, so buffers may run from any pinned thread.
class ExecBuffer {
public:
    ExecBuffer() = default;
    explicit ExecBuffer(size_t size); // throws AllocFailed
    ~ExecBuffer();
    ExecBuffer(ExecBuffer&&) noexcept;
    ExecBuffer& operator=(ExecBuffer&&) noexcept;
    ExecBuffer(const ExecBuffer&) = delete;
    ExecBuffer& operator=(const ExecBuffer&) = delete;

    void write(size_t offset, std::span<const uint8_t> bytes);
    void seal(); // flip to RX; throws AllocFailed
    uint8_t* base() const { return base_; }
    size_t size() const { return size_; }

private:
    uint8_t* base_ = nullptr;
    size_t size_ = 0;
    bool sealed_ = false;
};

// Data pages backing one victim: the branch-target slot plus the planting
// areas. Each page is fenced by PROT_NONE guard pages so neither a stride
// prefetcher nor a stray transient access can cross between them.
class VictimData {
public:
    VictimData(); // throws AllocFailed
    ~VictimData();
    VictimData(VictimData&&) noexcept;
    VictimData& operator=(VictimData&&) noexcept;
    VictimData(const VictimData&) = delete;
    VictimData& operator=(const VictimData&) = delete;

    uint64_t* target_slot() const;   // architectural branch target lives here
    uint8_t* value_page() const;     // real secret/pointer plants (4 KiB)
    uint8_t* dummy_page() const;     // training-time plants (4 KiB)
    uint8_t* dummy_probe() const;    // training-time probe area (256 * 4 KiB)
    static constexpr size_t kDummyProbeSize = 256 * 4096;

private:
    uint8_t* region_ = nullptr;
    size_t region_size_ = 0;
};

// A built victim: sealed code buffer + data pages + resolved layout.
class VictimBuffer {
public:
    static VictimBuffer build(const VictimOptions& opt);

    using VictimFn = void (*)(uint64_t arg_data, uint64_t arg_probe,
                              uint64_t arg_index, uint64_t arg_target_ptr);
    VictimFn entry() const { return reinterpret_cast<VictimFn>(code_.base()); }

    const VictimLayout& layout() const { return layout_; }
    const VictimOptions& options() const { return options_; }
    std::span<const uint8_t> code_bytes() const {
        return {code_.base(), layout_.code_size};
    }
    uint64_t gadget_entry_addr() const {
        return reinterpret_cast<uint64_t>(code_.base()) + layout_.gadget_entry;
    }
    uint64_t landing_pad_addr() const {
        return reinterpret_cast<uint64_t>(code_.base()) + layout_.landing_pad;
    }

    VictimData& data() { return data_; }
    const VictimData& data() const { return data_; }

    // Runs the victim once; the architectural target is whatever
    // *data().target_slot() holds.
    void run(uint64_t arg_data, uint64_t arg_probe, uint64_t arg_index) const;

private:
    VictimBuffer(ExecBuffer code, VictimData data, VictimLayout layout, VictimOptions opt);
    ExecBuffer code_;
    VictimData data_;
    VictimLayout layout_;
    VictimOptions options_;
};

} // namespace specwin
