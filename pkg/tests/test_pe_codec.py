import struct

import numpy as np
import pytest

from advmut import corpus, pe_codec


def checksum_oracle(raw: bytes) -> int:
    """Straight-line 16-bit one's-complement reference: word sum with
    end-around carry, skipping the 4 checksum bytes, plus file length."""
    skip = pe_codec.checksum_field_offset(raw)
    data = raw + (b"\x00" if len(raw) % 2 else b"")
    total = 0
    for i in range(0, len(data), 2):
        if skip <= i < skip + 4:
            continue
        total += data[i] | (data[i + 1] << 8)
        total = (total & 0xFFFF) + (total >> 16)
    total = (total & 0xFFFF) + (total >> 16)
    return total + len(raw)


def test_parse_minimal_pe_section_count():
    raw = corpus.generate_minimal_pe(seed=3, extra_sections=[".rsrc", ".reloc"])
    pe = pe_codec.parse_pe(raw)
    assert pe.coff.number_of_sections == len(pe.sections) == 5


def test_not_mz():
    with pytest.raises(pe_codec.NotMz):
        pe_codec.parse_pe(b"ZM" + b"\x00" * 100)


def test_truncated_header():
    raw = corpus.generate_minimal_pe(seed=3)
    with pytest.raises((pe_codec.Truncated, pe_codec.NotPe)):
        pe_codec.parse_pe(raw[:40])


def test_roundtrip_identity(small_corpus):
    for raw, _ in small_corpus:
        assert pe_codec.write_pe(pe_codec.parse_pe(raw)) == raw


def test_roundtrip_identity_thousand_files():
    """Byte-stability property over 1,000 generated files of varied shape."""
    count = 0
    for seed in range(10):
        cfg = corpus.CorpusConfig(
            n_benign=50,
            n_malware=50,
            seed=1000 + seed,
            section_bytes_min=64,
            section_bytes_max=320,
            cert_prob=0.5 if seed % 2 else 0.1,
            debug_prob=0.7 if seed % 3 else 0.2,
        )
        for raw, _ in corpus.generate_corpus(cfg):
            assert pe_codec.write_pe(pe_codec.parse_pe(raw)) == raw
            count += 1
    assert count == 1000


def test_structural_fixpoint(small_corpus):
    for raw, _ in small_corpus[:10]:
        pe = pe_codec.parse_pe(raw)
        again = pe_codec.parse_pe(pe_codec.write_pe(pe))
        assert again == pe


def test_write_rejects_disordered_sections():
    raw = corpus.generate_minimal_pe(seed=3)
    pe = pe_codec.parse_pe(raw)
    swapped = list(pe.sections)
    swapped[0], swapped[1] = swapped[1], swapped[0]
    from dataclasses import replace

    bad = replace(pe, sections=tuple(swapped))
    with pytest.raises((pe_codec.LayoutOverflow, pe_codec.Malformed)):
        pe_codec.write_pe(bad)


def test_verify_format_valid(small_corpus):
    for raw, _ in small_corpus:
        report = pe_codec.verify_format(raw)
        assert report.is_pe and not report.failures


def test_verify_format_empty_input():
    report = pe_codec.verify_format(b"")
    assert not report.is_pe
    assert pe_codec.CHECK_MAGIC in report.failures


def test_verify_report_consistency():
    # is_pe is true exactly when the failure list is empty
    for blob in (b"", b"MZ", corpus.generate_minimal_pe(seed=9)):
        report = pe_codec.verify_format(blob)
        assert report.is_pe == (not report.failures)


def test_verify_agrees_with_parse_on_fuzz(small_corpus, rng):
    """1,000-case fuzz: mutated inputs either parse or fail with a declared
    error, and verify_format always agrees with parse_pe."""
    base = [raw for raw, _ in small_corpus]
    declared = (pe_codec.NotMz, pe_codec.NotPe, pe_codec.Truncated, pe_codec.Malformed)
    for i in range(1000):
        raw = bytearray(base[i % len(base)])
        mode = i % 5
        if mode == 0:
            raw = raw[: rng.integers(0, len(raw))]  # truncation
        elif mode == 1:
            raw[0:2] = bytes(rng.integers(0, 256, 2, dtype=np.uint8))  # magic flip
        elif mode == 2:
            struct.pack_into("<H", raw, 0x3C + 4 + 2, int(rng.integers(0, 400)))  # section count
        elif mode == 3:
            pos = int(rng.integers(0, len(raw)))
            raw[pos] = int(rng.integers(0, 256))  # random byte flip
        else:
            struct.pack_into("<I", raw, 0x3C, int(rng.integers(0, 2 ** 31)))  # e_lfanew
        blob = bytes(raw)
        parse_ok = True
        try:
            pe_codec.parse_pe(blob)
        except declared:
            parse_ok = False
        assert pe_codec.verify_format(blob).is_pe == parse_ok


def test_checksum_matches_straight_line_oracle(small_corpus):
    for raw, _ in small_corpus[:20]:
        assert pe_codec.compute_checksum(raw) == checksum_oracle(raw)


def test_checksum_ignores_checksum_field():
    raw = corpus.generate_minimal_pe(seed=11)
    before = pe_codec.compute_checksum(raw)
    patched = bytearray(raw)
    struct.pack_into("<I", patched, pe_codec.checksum_field_offset(raw), 0xDEADBEEF)
    assert pe_codec.compute_checksum(bytes(patched)) == before


def test_checksum_changes_with_overlay_byte():
    raw = corpus.generate_minimal_pe(seed=12)
    grown = raw + b"\x00"
    assert pe_codec.compute_checksum(grown) != pe_codec.compute_checksum(raw)
    assert pe_codec.compute_checksum(grown) == checksum_oracle(grown)


def test_checksum_requires_pe():
    with pytest.raises(pe_codec.PeError):
        pe_codec.compute_checksum(b"MZ" + b"\x00" * 300)


def test_rva_to_offset_roundtrip():
    raw = corpus.generate_minimal_pe(seed=13)
    pe = pe_codec.parse_pe(raw)
    s = pe.sections[0]
    assert pe.rva_to_offset(s.virtual_address) == s.raw_offset
    assert pe.rva_to_offset(s.virtual_address + 5) == s.raw_offset + 5
    assert pe.rva_to_offset(0) is None


def test_import_reader_sees_generated_imports():
    imports = ["ReadFile:kernel32.dll", "WriteFile:kernel32.dll", "printf:msvcrt.dll"]
    raw = corpus.generate_minimal_pe(seed=14, imports=imports)
    pe = pe_codec.parse_pe(raw)
    got = {f"{fn}:{dll}" for fn, dll in pe_codec.read_imports(pe, raw)}
    assert got == set(imports)


def test_pe32_optional_header_roundtrip():
    """The PE32 lane is unit-tested even though the generator emits PE32+."""
    plus = corpus.generate_minimal_pe(seed=15)
    pe = pe_codec.parse_pe(plus)
    opt = pe.optional
    from dataclasses import replace

    pe32_opt = replace(
        opt,
        magic=pe_codec.PE32_MAGIC,
        base_of_data=0x3000,
        image_base=0x400000,
        size_of_stack_reserve=0x100000,
        size_of_stack_commit=0x1000,
        size_of_heap_reserve=0x100000,
        size_of_heap_commit=0x1000,
    )
    blob = pe_codec._pack_optional(pe32_opt)
    assert len(blob) == 224  # 96 fixed + 16 directories
    parsed = pe_codec._parse_optional(blob)
    assert parsed == replace(pe32_opt, trailing=b"")
    assert not parsed.is_pe32_plus
