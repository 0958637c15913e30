#!/usr/bin/env python3
"""Regenerates src/golden_fixtures.inc.

Assembles every fixture victim with GNU as and freezes the resulting bytes
and symbol offsets into a C++ table. The assembler acts as an independent
encoder: the assembly source states the layout rules (prologue, aligned
indirect jump, aligned gadget entry and landing pad, 0xCC fill) and as picks
the instruction encodings, so the table never inherits a mistake from the
C++ emitter it is meant to check.

Usage: tools/gen_golden_fixtures.py [output.inc]
"""

import subprocess
import sys
import tempfile
from pathlib import Path

BRANCH_ALIGN = 16

PROLOGUE = [
    "push rbx",
    "mov rax, rdi",
    "mov rbx, rdi",
    "mov rcx, [rcx]",
]

GADGETS = {
    "lsl": ("LoadShiftLoad", [
        "mov ebx, [rdi + rdx]",
        "shl ebx, 0xc",
        "mov ecx, [rsi + rbx]",
    ]),
    "load-once": ("LoadOnce", [
        "mov ecx, [rsi + rdi]",
    ]),
    "minimal": ("MinimalLoad", [
        "mov rax, [rax]",
        "mov rax, [rax]",
    ]),
    "store": ("StoreGadget", [
        "mov rax, [rax]",
        "mov qword ptr [rax], 0",
    ]),
    "prefetch": ("PrefetchGadget", [
        "mov rax, [rax]",
        "prefetcht0 [rax]",
    ]),
    "flush": ("FlushGadget", [
        "mov rax, [rax]",
        "clflush [rax]",
    ]),
    "complex": ("ComplexLoad", [
        "mov rbx, [rax]",
        "mov rcx, [rsi + rbx*8]",
    ]),
    "three-load": ("ThreeLoadMasked", [
        "mov rbx, [rbx]",
        "mov rdx, [rbx]",
        "and rdx, 0xff",
        "shl rdx, 0xc",
        "mov rax, [rsi + rdx]",
    ]),
}

FENCES = {"none": ("NoFence", []), "lfence": ("Lfence", ["lfence"])}

# (count, spacer mnemonic, enum name)
SPACER_SETS = [(0, "nop", "Nop"), (1, "nop", "Nop"), (23, "nop", "Nop"),
               (8, "cbw", "Cbw")]


def make_source(gadget_lines, fence_lines, spacer_count, spacer_insn, lead_pad):
    lines = [
        "    .intel_syntax noprefix",
        "    .text",
        "victim_start:",
        f"    .fill {lead_pad}, 1, 0x90",
    ]
    lines += [f"    {i}" for i in PROLOGUE + fence_lines]
    lines += [
        "branch_site:",
        "    jmp rcx",
        "    .balign 16, 0xcc",
        "gadget_entry:",
    ]
    lines += [f"    {spacer_insn}"] * spacer_count
    lines += [f"    {i}" for i in gadget_lines]
    lines += [
        "    pop rbx",
        "    ret",
        "    .balign 16, 0xcc",
        "landing_pad:",
        "    pop rbx",
        "    ret",
        "victim_end:",
    ]
    return "\n".join(lines) + "\n"


def assemble(source, tmpdir):
    src = tmpdir / "victim.s"
    obj = tmpdir / "victim.o"
    raw = tmpdir / "victim.bin"
    src.write_text(source)
    subprocess.run(["as", "-o", str(obj), str(src)], check=True)
    subprocess.run(["objcopy", "-O", "binary", str(obj), str(raw)], check=True)
    symbols = {}
    nm = subprocess.run(["nm", str(obj)], check=True, capture_output=True, text=True)
    for line in nm.stdout.splitlines():
        value, _, name = line.split()
        symbols[name] = int(value, 16)
    return raw.read_bytes(), symbols


def build_fixture(gadget_lines, fence_lines, spacer_count, spacer_insn, tmpdir):
    # Pass 1 measures where the assembler puts the jump; pass 2 pads the
    # entry so the jump sits on the alignment boundary.
    _, symbols = assemble(
        make_source(gadget_lines, fence_lines, spacer_count, spacer_insn, 0), tmpdir)
    lead = (BRANCH_ALIGN - symbols["branch_site"] % BRANCH_ALIGN) % BRANCH_ALIGN
    raw, symbols = assemble(
        make_source(gadget_lines, fence_lines, spacer_count, spacer_insn, lead), tmpdir)
    assert symbols["branch_site"] % BRANCH_ALIGN == 0
    assert len(raw) == symbols["victim_end"]
    return raw, symbols


def main():
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "src" / "golden_fixtures.inc")

    rows = []
    blobs = []
    with tempfile.TemporaryDirectory() as td:
        tmpdir = Path(td)
        for gname, (genum, glines) in GADGETS.items():
            for fname, (fenum, flines) in FENCES.items():
                for count, insn, senum in SPACER_SETS:
                    raw, syms = build_fixture(glines, flines, count, insn, tmpdir)
                    name = f"{gname}/{fname}/{insn}{count}"
                    idx = len(blobs)
                    blobs.append(raw)
                    rows.append((name, genum, fenum, count, senum, syms, idx))

    lines = [
        "// Generated by tools/gen_golden_fixtures.py -- do not edit by hand.",
        "// Reference encodings assembled with GNU as; regenerate with the script",
        "// after any deliberate template change.",
        "",
    ]
    for i, blob in enumerate(blobs):
        hexes = ", ".join(f"0x{b:02X}" for b in blob)
        lines.append(f"static const uint8_t kFixtureBytes{i}[] = {{{hexes}}};")
    lines.append("")
    lines.append("static const GoldenFixture kFixtures[] = {")
    for name, genum, fenum, count, senum, syms, idx in rows:
        opts = (f"{{GadgetKind::{genum}, FenceMode::{fenum}, {count}, "
                f"SpacerKind::{senum}, {BRANCH_ALIGN}}}")
        layout = (f"{{{syms['victim_end']}, {syms['branch_site']}, "
                  f"{syms['gadget_entry']}, {syms['landing_pad']}, {count}}}")
        lines.append(f'    {{"{name}", {opts}, {layout},')
        lines.append(f"     {{kFixtureBytes{idx}, sizeof(kFixtureBytes{idx})}}}},")
    lines.append("};")
    out_path.write_text("\n".join(lines) + "\n")
    total = sum(len(b) for b in blobs)
    print(f"wrote {len(rows)} fixtures ({total} bytes) to {out_path}")


if __name__ == "__main__":
    main()
