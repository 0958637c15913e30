#include "specwin/workloads.hpp"
#include "specwin/errors.hpp"

#include <atomic>
#include <cstring>
#include <ctime>

#include <pthread.h>
#include <sched.h>

namespace specwin {

const char* workload_name(WorkloadKind k) {
    switch (k) {
    case WorkloadKind::None: return "none";
    case WorkloadKind::DirectJmp: return "djmp";
    case WorkloadKind::CondPredicted: return "jcc-p";
    case WorkloadKind::CondMispredicted: return "jcc-m";
    case WorkloadKind::IndirectPredicted: return "ijmp-p";
    case WorkloadKind::IndirectMispredicted: return "ijmp-m";
    case WorkloadKind::FarJmp: return "farjmp";
    case WorkloadKind::XorLoop: return "xor";
    case WorkloadKind::Nanosleep: return "nanosleep";
    }
    return "?";
}

namespace {

struct BodyEmitter {
    WorkloadProgram prog;

    void emit(std::initializer_list<uint8_t> bs) {
        prog.code.insert(prog.code.end(), bs.begin(), bs.end());
    }
    void emit32(uint32_t v) {
        emit({uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)});
    }
    size_t off() const { return prog.code.size(); }
    void patch32(size_t pos, uint32_t v) {
        prog.code[pos + 0] = uint8_t(v);
        prog.code[pos + 1] = uint8_t(v >> 8);
        prog.code[pos + 2] = uint8_t(v >> 16);
        prog.code[pos + 3] = uint8_t(v >> 24);
    }

    // x ^= x << 13; x ^= x >> 7; x ^= x << 17  on rdx, rax as scratch.
    void emit_xorshift_rdx() {
        emit({0x48, 0x89, 0xD0, 0x48, 0xC1, 0xE0, 0x0D, 0x48, 0x31, 0xC2});
        emit({0x48, 0x89, 0xD0, 0x48, 0xC1, 0xE8, 0x07, 0x48, 0x31, 0xC2});
        emit({0x48, 0x89, 0xD0, 0x48, 0xC1, 0xE0, 0x11, 0x48, 0x31, 0xC2});
    }

    // Indirect-jump unit: pick a slot in this unit's group of kIndirectFan
    // table entries, jump through it, land on one of kIndirectFan stubs that
    // all fall through to the next unit. The predictable flavor always picks
    // slot 0; the mispredicted one picks by rng.
    void emit_indirect_unit(int unit, bool mispredict) {
        if (mispredict) {
            emit_xorshift_rdx();
            emit({0x48, 0x89, 0xD0});                      // mov rax, rdx
            emit({0x83, 0xE0, uint8_t(kIndirectFan - 1)}); // and eax, fan-1
        } else {
            emit({0x31, 0xC0}); // xor eax, eax
        }
        const size_t slot_base = size_t(unit) * kIndirectFan;
        emit({0xFF, 0xA4, 0xC3}); // jmp qword [rbx + rax*8 + disp32]
        emit32(uint32_t(slot_base * 8));
        for (int j = 0; j < kIndirectFan; ++j) {
            prog.table_patches.emplace_back(slot_base + size_t(j), off());
            const uint8_t rel = uint8_t(2 * (kIndirectFan - 1 - j));
            emit({0xEB, rel}); // jmp stub_end
        }
    }
};

} // namespace

WorkloadProgram encode_workload_body(WorkloadKind kind, int branches_per_iteration) {
    if (kind == WorkloadKind::None || kind == WorkloadKind::Nanosleep)
        throw UnsupportedWorkload("workload has no generated body");
    if (branches_per_iteration < 1)
        throw UnsupportedWorkload("branches per iteration must be positive");

    BodyEmitter e;
    const int n = branches_per_iteration;

    e.emit({0x53});                   // push rbx
    e.emit({0x48, 0x8B, 0x57, 0x10}); // mov rdx, [rdi+16]  rng state
    e.emit({0x48, 0x8B, 0x5F, 0x18}); // mov rbx, [rdi+24]  indirect table
    e.emit({0x4C, 0x8B, 0x47, 0x20}); // mov r8,  [rdi+32]  far table
    e.emit({0x49, 0x89, 0xD1});       // mov r9,  rdx   (ALU-loop operands;
    e.emit({0x49, 0x89, 0xDA});       // mov r10, rbx    any nonzero garbage
    e.emit({0x4D, 0x89, 0xC3});       // mov r11, r8     will do)

    const size_t loop_head = e.off();
    e.emit({0x48, 0x8B, 0x07}); // mov rax, [rdi]  stop flag
    e.emit({0x48, 0x85, 0xC0}); // test rax, rax
    e.emit({0x0F, 0x85});       // jnz done (rel32 backpatched)
    const size_t exit_fixup = e.off();
    e.emit32(0);

    for (int u = 0; u < n; ++u) {
        switch (kind) {
        case WorkloadKind::DirectJmp:
            e.emit({0xEB, 0x00}); // jmp next instruction
            break;
        case WorkloadKind::CondPredicted:
            // ZF is still set by the loop-head test (rax == 0), so every
            // one of these is taken, every time.
            e.emit({0x74, 0x00}); // jz next instruction
            break;
        case WorkloadKind::CondMispredicted:
            e.emit_xorshift_rdx();
            e.emit({0xF6, 0xC2, 0x01}); // test dl, 1
            e.emit({0x75, 0x00});       // jnz next instruction, ~50% taken
            break;
        case WorkloadKind::IndirectPredicted:
            e.emit_indirect_unit(u, /*mispredict=*/false);
            break;
        case WorkloadKind::IndirectMispredicted:
            e.emit_indirect_unit(u, /*mispredict=*/true);
            break;
        case WorkloadKind::FarJmp:
            // rex.W jmp far [r8 + disp32]: reloads CS:RIP from a 10-byte
            // slot; the slot holds the current CS and the next instruction.
            e.prog.far_patches.emplace_back(size_t(u), e.off() + 7);
            e.emit({0x49, 0xFF, 0xA8});
            e.emit32(uint32_t(u) * 16);
            break;
        case WorkloadKind::XorLoop:
            switch (u & 3) { // rotating dependent pairs, never a zero idiom
            case 0: e.emit({0x4D, 0x31, 0xC8}); break; // xor r8,  r9
            case 1: e.emit({0x4D, 0x31, 0xD1}); break; // xor r9,  r10
            case 2: e.emit({0x4D, 0x31, 0xDA}); break; // xor r10, r11
            case 3: e.emit({0x4D, 0x31, 0xC3}); break; // xor r11, r8
            }
            break;
        default:
            throw UnsupportedWorkload("unknown workload kind");
        }
    }

    e.emit({0x48, 0xFF, 0x47, 0x08}); // inc qword [rdi+8]  iteration count
    e.emit({0xE9});                   // jmp loop_head
    e.emit32(uint32_t(loop_head - (e.off() + 4)));

    const size_t done = e.off();
    e.patch32(exit_fixup, uint32_t(done - (exit_fixup + 4)));
    e.emit({0x48, 0x89, 0x57, 0x10}); // mov [rdi+16], rdx  persist rng
    e.emit({0x5B});                   // pop rbx
    e.emit({0xC3});                   // ret

    if (kind == WorkloadKind::IndirectPredicted ||
        kind == WorkloadKind::IndirectMispredicted)
        e.prog.table_slots = size_t(n) * kIndirectFan;
    if (kind == WorkloadKind::FarJmp)
        e.prog.far_slots = size_t(n);
    return std::move(e.prog);
}

// ---------------------------------------------------------------------------
// WorkloadRunner

namespace {

uint16_t current_cs() {
    uint16_t cs;
    asm volatile("mov %%cs, %0" : "=r"(cs));
    return cs;
}

bool pin_raw(int cpu) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
}

enum class RunState : int { Starting, Running, PinFail };

} // namespace

struct RunnerHandshake {
    std::atomic<RunState> state{RunState::Starting};
};

WorkloadRunner::WorkloadRunner(WorkloadKind kind, int cpu, uint64_t seed,
                               int branches_per_iteration)
    : kind_(kind) {
    if (kind == WorkloadKind::None)
        throw UnsupportedWorkload("the idle workload needs no runner");

    args_.seed = seed != 0 ? seed : 0x9E3779B97F4A7C15ull;

    if (kind != WorkloadKind::Nanosleep) {
        WorkloadProgram prog = encode_workload_body(kind, branches_per_iteration);
        table_.assign(prog.table_slots, 0);
        far_table_.assign(prog.far_slots * 16, 0);
        code_ = ExecBuffer(prog.code.size());
        code_.write(0, prog.code);

        const uint64_t base = reinterpret_cast<uint64_t>(code_.base());
        for (auto [slot, off] : prog.table_patches)
            table_[slot] = base + off;
        const uint16_t cs = current_cs();
        for (auto [slot, off] : prog.far_patches) {
            uint8_t* entry = far_table_.data() + slot * 16;
            const uint64_t target = base + off;
            std::memcpy(entry, &target, 8);
            std::memcpy(entry + 8, &cs, 2);
        }
        code_.seal();
        args_.table = reinterpret_cast<uint64_t>(table_.data());
        args_.far_table = reinterpret_cast<uint64_t>(far_table_.data());
    }

    RunnerHandshake hs;
    thread_ = std::thread([this, cpu, &hs] {
        if (cpu >= 0 && !pin_raw(cpu)) {
            hs.state.store(RunState::PinFail, std::memory_order_release);
            return;
        }
        hs.state.store(RunState::Running, std::memory_order_release);
        thread_main(cpu);
    });
    joined_ = false;

    while (hs.state.load(std::memory_order_acquire) == RunState::Starting)
        std::this_thread::yield();
    if (hs.state.load(std::memory_order_acquire) == RunState::PinFail) {
        thread_.join();
        joined_ = true;
        throw PinFailed("could not pin workload thread to cpu " + std::to_string(cpu));
    }
}

void WorkloadRunner::thread_main(int) {
    if (kind_ == WorkloadKind::Nanosleep) {
        timespec req{0, 1000}; // 1 us; the syscall itself is the workload
        while (args_.stop == 0) {
            nanosleep(&req, nullptr);
            args_.iterations = args_.iterations + 1;
        }
        return;
    }
    using BodyFn = void (*)(WorkloadArgs*);
    reinterpret_cast<BodyFn>(code_.base())(&args_);
}

void WorkloadRunner::stop_and_join() {
    if (joined_)
        return;
    args_.stop = 1;
    thread_.join();
    joined_ = true;
}

WorkloadRunner::~WorkloadRunner() { stop_and_join(); }

bool WorkloadRunner::overlaps(uint64_t lo, uint64_t hi) const {
    auto hit = [&](const void* begin, size_t len) {
        const auto b = reinterpret_cast<uint64_t>(begin);
        return len > 0 && b < hi && lo < b + len;
    };
    return hit(code_.base(), code_.size()) ||
           hit(table_.data(), table_.size() * sizeof(uint64_t)) ||
           hit(far_table_.data(), far_table_.size());
}

std::unique_ptr<WorkloadRunner> start_workload(WorkloadKind kind, int attacker_cpu,
                                               int workload_cpu,
                                               const CpuTopology& topo,
                                               uint64_t seed) {
    if (kind == WorkloadKind::None)
        return nullptr;
    if (!topo.contains(attacker_cpu))
        throw InvalidCpu("attacker cpu " + std::to_string(attacker_cpu) +
                         " not in topology");
    if (!topo.contains(workload_cpu))
        throw InvalidCpu("workload cpu " + std::to_string(workload_cpu) +
                         " not in topology");
    if (!topo.smt_enabled)
        throw SmtDisabled("workloads need a second hardware thread per core");
    auto sib = topo.sibling_of(attacker_cpu);
    if (!sib || *sib != workload_cpu)
        throw NotSibling("cpu " + std::to_string(workload_cpu) +
                         " does not share a core with cpu " +
                         std::to_string(attacker_cpu));
    return std::make_unique<WorkloadRunner>(kind, workload_cpu, seed);
}

} // namespace specwin
