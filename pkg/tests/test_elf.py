import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rweval.elf import (
    BUCKET_EHDR,
    BUCKET_PHDRS,
    BUCKET_SHDRS,
    BUCKET_UNMAPPED,
    ElfType,
    MalformedElf,
    SizeProfile,
    Unsupported,
    parse_elf,
    size_delta,
    size_profile,
)

from elfbuild import ET_EXEC, SHT_NOBITS, SHT_SYMTAB, Sec, build_elf
from oracles import readelf_facts


class TestParse:
    def test_below_minimum_header_size(self):
        with pytest.raises(MalformedElf):
            parse_elf(b"\x7fELF" + b"\x00" * 59)  # 63 bytes

    def test_bad_magic(self):
        with pytest.raises(MalformedElf):
            parse_elf(b"this is not an elf file".ljust(64, b"\x00"))

    def test_32bit_rejected(self):
        with pytest.raises(Unsupported):
            parse_elf(build_elf(ei_class=1))

    def test_big_endian_rejected(self):
        with pytest.raises(Unsupported):
            parse_elf(build_elf(ei_data=2))

    def test_section_table_past_eof(self):
        img = bytearray(build_elf())
        struct.pack_into("<Q", img, 40, len(img) + 1)  # e_shoff
        with pytest.raises(MalformedElf) as exc:
            parse_elf(bytes(img))
        assert exc.value.offset == len(img) + 1

    def test_program_table_past_eof(self):
        img = bytearray(build_elf())
        struct.pack_into("<Q", img, 32, len(img) - 8)  # e_phoff near the end
        with pytest.raises(MalformedElf):
            parse_elf(bytes(img))

    def test_section_data_past_eof(self):
        img = build_elf([Sec(".text", b"\x90" * 8)])
        with pytest.raises(MalformedElf):
            parse_elf(img[:-40])

    def test_basic_fields(self):
        img = build_elf(
            [Sec(".text", b"\x90" * 16), Sec(".symtab", b"\x00" * 24, SHT_SYMTAB)],
            interp=True,
        )
        s = parse_elf(img)
        assert s.file_size == len(img)
        assert s.elf_type is ElfType.DYN
        assert s.machine == 0x3E
        assert s.has_interp
        assert [sec.name for sec in s.sections] == [
            "",
            ".interp",
            ".text",
            ".symtab",
            ".shstrtab",
        ]

    def test_exec_type_without_interp(self):
        s = parse_elf(build_elf(elf_type=ET_EXEC, interp=False))
        assert s.elf_type is ElfType.EXEC
        assert not s.has_interp

    def test_other_type_keeps_code(self):
        s = parse_elf(build_elf(elf_type=4))  # ET_CORE
        assert s.elf_type is ElfType.OTHER
        assert s.elf_type_code == 4

    def test_nobits_has_zero_disk_size(self):
        img = build_elf([Sec(".bss", b"\x00" * 4096, SHT_NOBITS)])
        (bss,) = [sec for sec in parse_elf(img).sections if sec.name == ".bss"]
        assert bss.file_size_on_disk == 0
        assert bss.mem_size == 4096

    def test_missing_shstrtab_gives_empty_names(self):
        img = build_elf([Sec(".text", b"\x90" * 4)], with_shstrtab=False)
        s = parse_elf(img)
        assert all(sec.name == "" for sec in s.sections)

    def test_never_reads_past_buffer_on_fuzzable_offsets(self):
        img = bytearray(build_elf())
        struct.pack_into("<H", img, 62, 0xFFF0)  # absurd e_shstrndx
        s = parse_elf(bytes(img))  # tolerated: names become empty
        assert all(sec.name == "" for sec in s.sections)


class TestReadelfParity:
    def test_hello_world_variants(self, hello_variants):
        for variant in hello_variants:
            data = variant.path.read_bytes()
            summary = parse_elf(data)
            facts = readelf_facts(str(variant.path))
            assert summary.elf_type.value == facts.elf_type, variant.name
            ours = [sec.name for sec in summary.sections if sec.name]
            assert ours == facts.section_names, variant.name
            assert summary.has_interp, variant.name  # all are dynamic builds

    def test_pie_has_symtab_until_stripped(self, hello_variants):
        for variant in hello_variants:
            names = {
                sec.name for sec in parse_elf(variant.path.read_bytes()).sections
            }
            if variant.stripped:
                assert ".symtab" not in names and ".strtab" not in names
            else:
                assert ".symtab" in names

    def test_stripping_only_removes_symbol_sections(self, hello_variants):
        by_key = {(v.compiler, v.pie, v.stripped): v for v in hello_variants}
        for cc in ("gcc", "clang"):
            for pie in (True, False):
                full = parse_elf(by_key[(cc, pie, False)].path.read_bytes())
                bare = parse_elf(by_key[(cc, pie, True)].path.read_bytes())
                full_names = {s.name for s in full.sections if s.name}
                bare_names = {s.name for s in bare.sections if s.name}
                assert full_names - bare_names == {".symtab", ".strtab"}


class TestSizeProfile:
    def test_gap_free_file_has_zero_unmapped(self):
        img = build_elf([Sec(".text", b"\x90" * 32), Sec(".data", b"\x01" * 8)])
        profile = size_profile(parse_elf(img), len(img))
        assert profile.buckets[BUCKET_UNMAPPED] == 0
        assert profile.total() == len(img)

    def test_trailing_bytes_go_to_unmapped_only(self):
        base = build_elf([Sec(".text", b"\x90" * 32)])
        grown = base + bytes(100)
        p0 = size_profile(parse_elf(base), len(base))
        p1 = size_profile(parse_elf(grown), len(grown))
        assert p1.buckets[BUCKET_UNMAPPED] == p0.buckets[BUCKET_UNMAPPED] + 100
        for name, value in p0.buckets.items():
            if name != BUCKET_UNMAPPED:
                assert p1.buckets[name] == value

    def test_hello_world_buckets_sum_to_disk_size(self, hello_variants):
        for variant in hello_variants:
            data = variant.path.read_bytes()
            profile = size_profile(parse_elf(data), len(data))
            assert profile.total() == variant.path.stat().st_size, variant.name
            assert all(v >= 0 for v in profile.buckets.values())

    def test_header_buckets_have_expected_sizes(self):
        img = build_elf([Sec(".text", b"\x90" * 16)])
        s = parse_elf(img)
        profile = size_profile(s, len(img))
        assert profile.buckets[BUCKET_EHDR] == 64
        assert profile.buckets[BUCKET_PHDRS] == 56
        assert profile.buckets[BUCKET_SHDRS] == 3 * 64
        assert profile.buckets[".text"] == 16

    def test_gaps_are_unmapped(self):
        img = build_elf([Sec(".text", b"\x90" * 16, gap_before=7)])
        profile = size_profile(parse_elf(img), len(img))
        assert profile.buckets[BUCKET_UNMAPPED] == 7

    def test_nobits_claims_nothing(self):
        img = build_elf(
            [Sec(".text", b"\x90" * 16), Sec(".bss", b"\x00" * 999, SHT_NOBITS)]
        )
        profile = size_profile(parse_elf(img), len(img))
        assert profile.buckets[".bss"] == 0
        assert profile.total() == len(img)

    def test_overlap_first_claimer_wins(self):
        # two section headers pointing at the same bytes
        img = bytearray(build_elf([Sec(".text", b"\x90" * 16), Sec(".dup", b"")]))
        s = parse_elf(bytes(img))
        text = next(sec for sec in s.sections if sec.name == ".text")
        shoff = s.section_header_extent[0]
        # rewrite .dup's header (entry 2) to alias .text's bytes
        struct.pack_into("<QQ", img, shoff + 2 * 64 + 24, text.file_offset, 16)
        s2 = parse_elf(bytes(img))
        profile = size_profile(s2, len(img))
        assert profile.buckets[".text"] == 16
        assert profile.buckets[".dup"] == 0
        assert profile.total() == len(img)

    def test_deterministic(self):
        img = build_elf()
        s = parse_elf(img)
        assert size_profile(s, len(img)) == size_profile(s, len(img))
        assert parse_elf(img) == s

    @settings(max_examples=60, deadline=None)
    @given(
        sections=st.lists(
            st.tuples(
                st.sampled_from([".a", ".b", ".c", ".data", ".text"]),
                st.integers(0, 48),
                st.booleans(),
                st.integers(0, 9),
            ),
            max_size=6,
        ),
        trailing=st.integers(0, 80),
    )
    def test_conservation_property(self, sections, trailing):
        secs = [
            Sec(name, b"\xaa" * size, SHT_NOBITS if nobits else 1, gap_before=gap)
            for name, size, nobits, gap in sections
        ]
        img = build_elf(secs, trailing=b"\xee" * trailing)
        profile = size_profile(parse_elf(img), len(img))
        assert profile.total() == len(img)
        assert all(v >= 0 for v in profile.buckets.values())


class TestSizeDelta:
    def test_identity_is_100_everywhere(self):
        img = build_elf()
        p = size_profile(parse_elf(img), len(img))
        delta = size_delta(p, p)
        assert all(v == 100.0 for v in delta.values() if v is not None)
        assert delta[".text"] == 100.0

    def test_growth_arithmetic(self):
        before = SizeProfile({".text": 1000})
        after = SizeProfile({".text": 1500})
        assert size_delta(before, after) == {".text": 150.0}

    def test_bucket_missing_on_either_side_is_na(self):
        before = SizeProfile({".text": 10})
        after = SizeProfile({".text": 10, ".got.plt": 64})
        delta = size_delta(before, after)
        assert delta[".got.plt"] is None
        assert size_delta(after, before)[".got.plt"] is None

    def test_zero_before_value_is_na(self):
        assert size_delta(SizeProfile({".bss": 0}), SizeProfile({".bss": 0})) == {
            ".bss": None
        }
