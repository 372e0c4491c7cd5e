"""Minimal ELF64 reader and whole-file byte attribution.

Parses just enough of an ELF image to answer the questions the rest of the
toolkit asks: object type, interpreter presence, the section inventory, and
where the header tables live in the file. All reads are bounds-checked
against the input buffer; nothing past the buffer is ever touched.

Only 64-bit little-endian images are accepted (the x86-64 Linux corpus this
toolkit targets).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedElf, Unsupported

ELF_MAGIC = b"\x7fELF"
EHDR_SIZE = 64
PHDR_SIZE = 56
SHDR_SIZE = 64

SHT_NOBITS = 8
PT_INTERP = 3

BUCKET_EHDR = "[ELF Header]"
BUCKET_PHDRS = "[ELF Program Headers]"
BUCKET_SHDRS = "[ELF Section Headers]"
BUCKET_UNMAPPED = "[Unmapped]"


class ElfType(Enum):
    EXEC = "EXEC"
    DYN = "DYN"
    REL = "REL"
    OTHER = "OTHER"

    @classmethod
    def from_code(cls, code: int) -> "ElfType":
        return {1: cls.REL, 2: cls.EXEC, 3: cls.DYN}.get(code, cls.OTHER)


@dataclass(frozen=True)
class SectionEntry:
    name: str
    sh_type: int
    file_offset: int
    file_size_on_disk: int  # always 0 for NOBITS sections
    mem_size: int


@dataclass(frozen=True)
class ElfSummary:
    file_size: int
    elf_type: ElfType
    elf_type_code: int  # raw e_type, meaningful when elf_type is OTHER
    machine: int
    has_interp: bool
    sections: tuple[SectionEntry, ...]
    program_header_extent: tuple[int, int]  # (offset, length), (0, 0) if absent
    section_header_extent: tuple[int, int]


@dataclass(frozen=True)
class SizeProfile:
    """Every byte of a file attributed to exactly one named bucket."""

    buckets: dict[str, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.buckets.values())


def parse_elf(data: bytes) -> ElfSummary:
    """Parse an in-memory ELF64 image into an ElfSummary.

    Raises MalformedElf for truncated or inconsistent images and Unsupported
    for 32-bit or big-endian inputs. A missing or unusable section-name
    string table is tolerated: affected sections get empty names.
    """
    size = len(data)
    if size < EHDR_SIZE:
        raise MalformedElf(f"file too short for an ELF header ({size} bytes)", offset=0)
    if data[:4] != ELF_MAGIC:
        raise MalformedElf("bad ELF magic", offset=0)
    if data[4] != 2:
        raise Unsupported("only 64-bit (ELFCLASS64) images are supported")
    if data[5] != 1:
        raise Unsupported("only little-endian (ELFDATA2LSB) images are supported")

    e_type, e_machine = struct.unpack_from("<HH", data, 16)
    e_phoff, e_shoff = struct.unpack_from("<QQ", data, 32)
    (e_phentsize, e_phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
        "<HHHHH", data, 54
    )

    ph_extent = _table_extent(
        "program header table", e_phoff, e_phentsize, e_phnum, PHDR_SIZE, size
    )
    sh_extent = _table_extent(
        "section header table", e_shoff, e_shentsize, e_shnum, SHDR_SIZE, size
    )

    raw_sections = []
    for i in range(e_shnum):
        base = e_shoff + i * e_shentsize
        sh_name, sh_type = struct.unpack_from("<II", data, base)
        sh_offset, sh_size = struct.unpack_from("<QQ", data, base + 24)
        raw_sections.append((sh_name, sh_type, sh_offset, sh_size))

    strtab = _section_name_table(data, raw_sections, e_shstrndx)

    sections = []
    for sh_name, sh_type, sh_offset, sh_size in raw_sections:
        name = _read_name(strtab, sh_name)
        on_disk = 0 if sh_type == SHT_NOBITS else sh_size
        if on_disk > 0 and sh_offset + on_disk > size:
            raise MalformedElf(
                f"section {name!r} data extends past end of file", offset=sh_offset
            )
        sections.append(
            SectionEntry(
                name=name,
                sh_type=sh_type,
                file_offset=sh_offset,
                file_size_on_disk=on_disk,
                mem_size=sh_size,
            )
        )

    has_interp = any(s.name == ".interp" for s in sections)
    for i in range(e_phnum):
        (p_type,) = struct.unpack_from("<I", data, e_phoff + i * e_phentsize)
        if p_type == PT_INTERP:
            has_interp = True
            break

    return ElfSummary(
        file_size=size,
        elf_type=ElfType.from_code(e_type),
        elf_type_code=e_type,
        machine=e_machine,
        has_interp=has_interp,
        sections=tuple(sections),
        program_header_extent=ph_extent,
        section_header_extent=sh_extent,
    )


def _table_extent(
    what: str, off: int, entsize: int, num: int, min_entsize: int, file_size: int
) -> tuple[int, int]:
    if num == 0:
        return (0, 0)
    if entsize < min_entsize:
        raise MalformedElf(f"{what} entry size {entsize} too small", offset=off)
    length = num * entsize
    if off >= file_size or off + length > file_size:
        raise MalformedElf(f"{what} extends past end of file", offset=off)
    return (off, length)


def _section_name_table(data, raw_sections, shstrndx: int) -> bytes:
    # SHN_UNDEF (0) or an out-of-range index means no name table; tolerated.
    if shstrndx == 0 or shstrndx >= len(raw_sections):
        return b""
    _, sh_type, sh_offset, sh_size = raw_sections[shstrndx]
    if sh_type == SHT_NOBITS or sh_offset + sh_size > len(data):
        return b""
    return data[sh_offset : sh_offset + sh_size]


def _read_name(strtab: bytes, off: int) -> str:
    if off >= len(strtab):
        return ""
    end = strtab.find(b"\x00", off)
    if end < 0:
        end = len(strtab)
    return strtab[off:end].decode("latin-1")


class _ClaimedRanges:
    """Disjoint half-open intervals of already-attributed file bytes."""

    def __init__(self):
        self._spans: list[tuple[int, int]] = []

    def claim(self, start: int, end: int) -> int:
        """Claim the unclaimed part of [start, end); return bytes gained."""
        if end <= start:
            return 0
        gained = 0
        merged = []
        cursor = start
        for s, e in self._spans:
            if e <= start or s >= end:
                merged.append((s, e))
                continue
            # overlap: count the gap before this span, then skip it
            if s > cursor:
                gained += s - cursor
            cursor = max(cursor, e)
            merged.append((s, e))
        if end > cursor:
            gained += end - cursor
        merged.append((start, end))
        merged.sort()
        # normalize to keep the span list short
        norm = [merged[0]]
        for s, e in merged[1:]:
            ls, le = norm[-1]
            if s <= le:
                norm[-1] = (ls, max(le, e))
            else:
                norm.append((s, e))
        self._spans = norm
        return gained

    def total(self) -> int:
        return sum(e - s for s, e in self._spans)


def size_profile(summary: ElfSummary, file_size: int) -> SizeProfile:
    """Attribute every byte of a file to exactly one bucket.

    Claim precedence: ELF header, then program header table, then section
    header table, then sections in ascending file-offset order (section-table
    order breaks ties); a byte already claimed is never re-claimed. NOBITS
    sections claim nothing. Whatever remains is "[Unmapped]". Bucket values
    always sum to file_size exactly.
    """
    claimed = _ClaimedRanges()
    buckets: dict[str, int] = {}

    def clip(off: int, length: int) -> tuple[int, int]:
        start = min(max(off, 0), file_size)
        end = min(max(off + length, 0), file_size)
        return start, end

    buckets[BUCKET_EHDR] = claimed.claim(*clip(0, EHDR_SIZE))
    buckets[BUCKET_PHDRS] = claimed.claim(*clip(*summary.program_header_extent))
    buckets[BUCKET_SHDRS] = claimed.claim(*clip(*summary.section_header_extent))

    for sec in summary.sections:
        # the unnamed null section would otherwise pollute every profile
        if sec.name and sec.name not in buckets:
            buckets[sec.name] = 0
    for sec in sorted(
        (s for s in summary.sections if s.file_size_on_disk > 0),
        key=lambda s: s.file_offset,
    ):
        start, end = clip(sec.file_offset, sec.file_size_on_disk)
        buckets[sec.name] = buckets.get(sec.name, 0) + claimed.claim(start, end)

    buckets[BUCKET_UNMAPPED] = file_size - claimed.total()
    return SizeProfile(buckets=buckets)


def profile_file_bytes(data: bytes) -> SizeProfile:
    """Convenience: parse and profile an in-memory image in one step."""
    return size_profile(parse_elf(data), len(data))


def size_delta(before: SizeProfile, after: SizeProfile) -> dict[str, float | None]:
    """Per-bucket after/before ratio as a percentage.

    Buckets missing on either side, or with a zero before-value, map to None
    (rendered as "NA" in tables).
    """
    keys = list(before.buckets)
    keys.extend(k for k in after.buckets if k not in before.buckets)
    out: dict[str, float | None] = {}
    for k in keys:
        b = before.buckets.get(k)
        a = after.buckets.get(k)
        if b is None or a is None or b == 0:
            out[k] = None
        else:
            out[k] = a / b * 100.0
    return out
