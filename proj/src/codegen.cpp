#include "specwin/codegen.hpp"
#include "specwin/errors.hpp"

#include <cstring>
#include <initializer_list>
#include <stdexcept>

#include <sys/mman.h>
#include <unistd.h>

namespace specwin {

namespace {

constexpr uint8_t kNop = 0x90;
constexpr uint8_t kPadFill = 0xCC; // traps if anything strays between sections

struct Emitter {
    std::vector<uint8_t> bytes;

    void emit(std::initializer_list<uint8_t> bs) {
        bytes.insert(bytes.end(), bs.begin(), bs.end());
    }
    void fill(size_t count, uint8_t b) { bytes.insert(bytes.end(), count, b); }
    void align_to(size_t a, uint8_t filler) {
        while (bytes.size() % a != 0)
            bytes.push_back(filler);
    }
    size_t off() const { return bytes.size(); }
};

size_t prologue_length(FenceMode fence) {
    // push rbx + mov rax,rdi + mov rbx,rdi + mov rcx,[rcx] (+ lfence)
    return 1 + 3 + 3 + 3 + (fence == FenceMode::Lfence ? 3 : 0);
}

void emit_prologue(Emitter& e, FenceMode fence) {
    e.emit({0x53});             // push rbx
    e.emit({0x48, 0x89, 0xF8}); // mov rax, rdi   (pointer-chase gadget input)
    e.emit({0x48, 0x89, 0xFB}); // mov rbx, rdi   (three-load gadget input)
    e.emit({0x48, 0x8B, 0x09}); // mov rcx, [rcx] (load architectural target)
    if (fence == FenceMode::Lfence)
        e.emit({0x0F, 0xAE, 0xE8}); // lfence
}

void emit_spacers(Emitter& e, int count, SpacerKind kind) {
    for (int i = 0; i < count; ++i) {
        if (kind == SpacerKind::Nop)
            e.emit({kNop});
        else
            e.emit({0x66, 0x98}); // cbw
    }
}

void emit_gadget(Emitter& e, GadgetKind kind) {
    switch (kind) {
    case GadgetKind::LoadShiftLoad:
        e.emit({0x8B, 0x1C, 0x17});       // mov ebx, [rdi + rdx]
        e.emit({0xC1, 0xE3, 0x0C});       // shl ebx, 0xc
        e.emit({0x8B, 0x0C, 0x1E});       // mov ecx, [rsi + rbx]
        break;
    case GadgetKind::LoadOnce:
        e.emit({0x8B, 0x0C, 0x3E});       // mov ecx, [rsi + rdi]
        break;
    case GadgetKind::MinimalLoad:
        e.emit({0x48, 0x8B, 0x00});       // mov rax, [rax]
        e.emit({0x48, 0x8B, 0x00});       // mov rax, [rax]
        break;
    case GadgetKind::StoreGadget:
        e.emit({0x48, 0x8B, 0x00});       // mov rax, [rax]
        e.emit({0x48, 0xC7, 0x00, 0x00, 0x00, 0x00, 0x00}); // mov qword [rax], 0
        break;
    case GadgetKind::PrefetchGadget:
        e.emit({0x48, 0x8B, 0x00});       // mov rax, [rax]
        e.emit({0x0F, 0x18, 0x08});       // prefetcht0 [rax]
        break;
    case GadgetKind::FlushGadget:
        e.emit({0x48, 0x8B, 0x00});       // mov rax, [rax]
        e.emit({0x0F, 0xAE, 0x38});       // clflush [rax]
        break;
    case GadgetKind::ComplexLoad:
        e.emit({0x48, 0x8B, 0x18});       // mov rbx, [rax]
        e.emit({0x48, 0x8B, 0x0C, 0xDE}); // mov rcx, [rsi + rbx*8]
        break;
    case GadgetKind::ThreeLoadMasked:
        e.emit({0x48, 0x8B, 0x1B});       // mov rbx, [rbx]
        e.emit({0x48, 0x8B, 0x13});       // mov rdx, [rbx]
        e.emit({0x48, 0x81, 0xE2, 0xFF, 0x00, 0x00, 0x00}); // and rdx, 0xff
        e.emit({0x48, 0xC1, 0xE2, 0x0C}); // shl rdx, 0xc
        e.emit({0x48, 0x8B, 0x04, 0x16}); // mov rax, [rsi + rdx]
        break;
    default:
        throw UnsupportedGadget("unknown gadget kind");
    }
}

void emit_return_to_harness(Emitter& e) {
    e.emit({0x5B}); // pop rbx
    e.emit({0xC3}); // ret
}

} // namespace

std::vector<uint8_t> encode_gadget_body(GadgetKind kind) {
    Emitter e;
    emit_gadget(e, kind);
    return std::move(e.bytes);
}

std::vector<uint8_t> encode_landing_pad() {
    Emitter e;
    emit_return_to_harness(e);
    return std::move(e.bytes);
}

std::vector<uint8_t> encode_victim(const VictimOptions& opt, VictimLayout* layout) {
    if (opt.spacer_nops < 0 || opt.spacer_nops > kMaxSpacers)
        throw std::invalid_argument("spacer count out of range");
    if (opt.branch_align < 1 || (opt.branch_align & (opt.branch_align - 1)) != 0)
        throw std::invalid_argument("branch_align must be a power of two");

    VictimLayout lay;
    lay.spacer_nops = opt.spacer_nops;

    Emitter e;
    // Leading executed NOPs so the indirect jump itself lands on the
    // requested alignment boundary.
    const size_t align = static_cast<size_t>(opt.branch_align);
    const size_t plen = prologue_length(opt.fence);
    e.fill((align - plen % align) % align, kNop);
    emit_prologue(e, opt.fence);
    lay.branch_site = e.off();
    e.emit({0xFF, 0xE1}); // jmp rcx

    e.align_to(16, kPadFill);
    lay.gadget_entry = e.off();
    emit_spacers(e, opt.spacer_nops, opt.spacer_kind);
    emit_gadget(e, opt.gadget);
    emit_return_to_harness(e);

    e.align_to(16, kPadFill);
    lay.landing_pad = e.off();
    emit_return_to_harness(e);

    lay.code_size = e.off();
    if (layout)
        *layout = lay;
    return std::move(e.bytes);
}

const char* gadget_name(GadgetKind k) {
    switch (k) {
    case GadgetKind::LoadShiftLoad: return "lsl";
    case GadgetKind::LoadOnce: return "load-once";
    case GadgetKind::MinimalLoad: return "minimal";
    case GadgetKind::StoreGadget: return "store";
    case GadgetKind::PrefetchGadget: return "prefetch";
    case GadgetKind::FlushGadget: return "flush";
    case GadgetKind::ComplexLoad: return "complex";
    case GadgetKind::ThreeLoadMasked: return "three-load";
    }
    return "?";
}

const char* fence_name(FenceMode m) {
    return m == FenceMode::Lfence ? "lfence" : "none";
}

const char* spacer_name(SpacerKind k) {
    return k == SpacerKind::Cbw ? "cbw" : "nop";
}

// ---------------------------------------------------------------------------
// ExecBuffer

static size_t page_size() {
    static const size_t ps = static_cast<size_t>(sysconf(_SC_PAGESIZE));
    return ps;
}

static size_t round_up(size_t v, size_t a) { return (v + a - 1) / a * a; }

ExecBuffer::ExecBuffer(size_t size) {
    size_ = round_up(size, page_size());
    void* p = mmap(nullptr, size_, PROT_READ | PROT_WRITE,
                   MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (p == MAP_FAILED)
        throw AllocFailed("mmap of executable buffer failed");
    base_ = static_cast<uint8_t*>(p);
    std::memset(base_, kPadFill, size_);
}

ExecBuffer::~ExecBuffer() {
    if (base_)
        munmap(base_, size_);
}

ExecBuffer::ExecBuffer(ExecBuffer&& o) noexcept
    : base_(o.base_), size_(o.size_), sealed_(o.sealed_) {
    o.base_ = nullptr;
    o.size_ = 0;
}

ExecBuffer& ExecBuffer::operator=(ExecBuffer&& o) noexcept {
    if (this != &o) {
        if (base_)
            munmap(base_, size_);
        base_ = o.base_;
        size_ = o.size_;
        sealed_ = o.sealed_;
        o.base_ = nullptr;
        o.size_ = 0;
    }
    return *this;
}

void ExecBuffer::write(size_t offset, std::span<const uint8_t> bytes) {
    if (sealed_)
        throw std::logic_error("write to sealed ExecBuffer");
    if (offset + bytes.size() > size_)
        throw std::out_of_range("ExecBuffer write out of range");
    std::memcpy(base_ + offset, bytes.data(), bytes.size());
}

void ExecBuffer::seal() {
    if (mprotect(base_, size_, PROT_READ | PROT_EXEC) != 0)
        throw AllocFailed("mprotect to RX failed");
    sealed_ = true;
}

// ---------------------------------------------------------------------------
// VictimData

namespace {
// region layout, all offsets in pages:
// [guard][target][guard][value][guard][dummy][guard][dummy probe ...][guard]
constexpr size_t kTargetPage = 1;
constexpr size_t kValuePage = 3;
constexpr size_t kDummyPage = 5;
constexpr size_t kDummyProbePage = 7;
} // namespace

VictimData::VictimData() {
    const size_t ps = page_size();
    const size_t probe_pages = kDummyProbeSize / ps;
    const size_t total_pages = kDummyProbePage + probe_pages + 1;
    region_size_ = total_pages * ps;
    void* p = mmap(nullptr, region_size_, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (p == MAP_FAILED)
        throw AllocFailed("mmap of victim data region failed");
    region_ = static_cast<uint8_t*>(p);
    auto unguard = [&](size_t page, size_t npages) {
        if (mprotect(region_ + page * ps, npages * ps, PROT_READ | PROT_WRITE) != 0)
            throw AllocFailed("mprotect of victim data window failed");
    };
    unguard(kTargetPage, 1);
    unguard(kValuePage, 1);
    unguard(kDummyPage, 1);
    unguard(kDummyProbePage, probe_pages);
    // Touch every data page once so address translations are resolved before
    // any timing-sensitive run.
    for (size_t pg : {kTargetPage, kValuePage, kDummyPage})
        region_[pg * ps] = 0;
    for (size_t i = 0; i < probe_pages; ++i)
        region_[(kDummyProbePage + i) * ps] = 0;
}

VictimData::~VictimData() {
    if (region_)
        munmap(region_, region_size_);
}

VictimData::VictimData(VictimData&& o) noexcept
    : region_(o.region_), region_size_(o.region_size_) {
    o.region_ = nullptr;
    o.region_size_ = 0;
}

VictimData& VictimData::operator=(VictimData&& o) noexcept {
    if (this != &o) {
        if (region_)
            munmap(region_, region_size_);
        region_ = o.region_;
        region_size_ = o.region_size_;
        o.region_ = nullptr;
        o.region_size_ = 0;
    }
    return *this;
}

uint64_t* VictimData::target_slot() const {
    return reinterpret_cast<uint64_t*>(region_ + kTargetPage * page_size());
}
uint8_t* VictimData::value_page() const { return region_ + kValuePage * page_size(); }
uint8_t* VictimData::dummy_page() const { return region_ + kDummyPage * page_size(); }
uint8_t* VictimData::dummy_probe() const { return region_ + kDummyProbePage * page_size(); }

// ---------------------------------------------------------------------------
// VictimBuffer

VictimBuffer::VictimBuffer(ExecBuffer code, VictimData data, VictimLayout layout,
                           VictimOptions opt)
    : code_(std::move(code)), data_(std::move(data)), layout_(layout), options_(opt) {}

VictimBuffer VictimBuffer::build(const VictimOptions& opt) {
    VictimLayout layout;
    auto bytes = encode_victim(opt, &layout);
    ExecBuffer code(bytes.size());
    code.write(0, bytes);
    code.seal();
    VictimData data;
    return VictimBuffer(std::move(code), std::move(data), layout, opt);
}

void VictimBuffer::run(uint64_t arg_data, uint64_t arg_probe, uint64_t arg_index) const {
    entry()(arg_data, arg_probe, arg_index,
            reinterpret_cast<uint64_t>(data_.target_slot()));
}

} // namespace specwin
