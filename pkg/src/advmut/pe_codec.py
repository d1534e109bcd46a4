"""PE/COFF container codec with byte-stable round-tripping.

Parses a PE image into an immutable structural model (headers, section
table, section payloads, inter-structure gap bytes, overlay), serializes
it back to the identical byte string, and provides the documented PE
checksum plus a static format verifier.

Scope is deliberately narrow: layout only. Import/debug directories are
decoded on demand as derived views; nothing is ever executed or emulated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

MZ_MAGIC = b"MZ"
PE_SIGNATURE = b"PE\x00\x00"
PE32_MAGIC = 0x10B
PE32PLUS_MAGIC = 0x20B

COFF_HEADER_SIZE = 20
SECTION_HEADER_SIZE = 40
MAX_DATA_DIRECTORIES = 16
MAX_SECTIONS = 96

DIR_EXPORT = 0
DIR_IMPORT = 1
DIR_RESOURCE = 2
DIR_SECURITY = 4
DIR_BASERELOC = 5
DIR_DEBUG = 6
DIR_TLS = 9
DIR_IAT = 12

# Section characteristic bits used around the package.
SCN_CNT_CODE = 0x00000020
SCN_CNT_INITIALIZED_DATA = 0x00000040
SCN_MEM_EXECUTE = 0x20000000
SCN_MEM_READ = 0x40000000
SCN_MEM_WRITE = 0x80000000

# Named static checks reported by verify_format, in evaluation order.
CHECK_MAGIC = "magic"
CHECK_PE_SIGNATURE = "pe_signature"
CHECK_HEADER_BOUNDS = "header_bounds"
CHECK_DIRECTORY_BOUNDS = "directory_bounds"
CHECK_SECTION_TABLE = "section_table"
CHECK_SECTION_LAYOUT = "section_layout"

ALL_CHECKS = (
    CHECK_MAGIC,
    CHECK_PE_SIGNATURE,
    CHECK_HEADER_BOUNDS,
    CHECK_DIRECTORY_BOUNDS,
    CHECK_SECTION_TABLE,
    CHECK_SECTION_LAYOUT,
)


class PeError(Exception):
    """Base for all codec errors; carries the failed static-check name."""

    check = CHECK_MAGIC

    def __init__(self, message: str, check: str | None = None):
        super().__init__(message)
        if check is not None:
            self.check = check


class NotMz(PeError):
    check = CHECK_MAGIC


class NotPe(PeError):
    check = CHECK_PE_SIGNATURE


class Truncated(PeError):
    check = CHECK_HEADER_BOUNDS


class Malformed(PeError):
    check = CHECK_SECTION_LAYOUT


class LayoutOverflow(PeError):
    check = CHECK_SECTION_LAYOUT


@dataclass(frozen=True)
class DataDirectory:
    rva: int
    size: int


@dataclass(frozen=True)
class CoffHeader:
    machine: int
    number_of_sections: int
    timestamp: int
    pointer_to_symbol_table: int
    number_of_symbols: int
    size_of_optional_header: int
    characteristics: int


@dataclass(frozen=True)
class OptionalHeader:
    """PE32/PE32+ optional header. Width-dependent fields (image_base,
    stack/heap sizes) are stored as plain ints; `magic` decides how they
    serialize. `trailing` keeps any declared bytes past the directory
    table verbatim."""

    magic: int
    major_linker_version: int
    minor_linker_version: int
    size_of_code: int
    size_of_initialized_data: int
    size_of_uninitialized_data: int
    entry_point: int
    base_of_code: int
    base_of_data: int  # PE32 only; ignored for PE32+
    image_base: int
    section_alignment: int
    file_alignment: int
    major_os_version: int
    minor_os_version: int
    major_image_version: int
    minor_image_version: int
    major_subsystem_version: int
    minor_subsystem_version: int
    win32_version: int
    size_of_image: int
    size_of_headers: int
    checksum: int
    subsystem: int
    dll_characteristics: int
    size_of_stack_reserve: int
    size_of_stack_commit: int
    size_of_heap_reserve: int
    size_of_heap_commit: int
    loader_flags: int
    number_of_rva_and_sizes: int
    data_directories: tuple[DataDirectory, ...]
    trailing: bytes = b""

    @property
    def is_pe32_plus(self) -> bool:
        return self.magic == PE32PLUS_MAGIC

    def directory(self, index: int) -> DataDirectory:
        if index < len(self.data_directories):
            return self.data_directories[index]
        return DataDirectory(0, 0)


@dataclass(frozen=True)
class Section:
    name: bytes  # raw 8-byte field, NUL padded
    virtual_size: int
    virtual_address: int
    raw_size: int
    raw_offset: int
    pointer_to_relocations: int
    pointer_to_line_numbers: int
    number_of_relocations: int
    number_of_line_numbers: int
    characteristics: int
    data: bytes
    gap_before: bytes = b""  # file bytes between the previous extent and raw_offset

    @property
    def name_str(self) -> str:
        return self.name.rstrip(b"\x00").decode("ascii", errors="replace")

    @property
    def raw_end(self) -> int:
        return self.raw_offset + self.raw_size


@dataclass(frozen=True)
class PeFile:
    pre_header: bytes  # file[0:e_lfanew]: DOS header plus stub, verbatim
    coff: CoffHeader
    optional: OptionalHeader
    sections: tuple[Section, ...]
    overlay: bytes

    @property
    def e_lfanew(self) -> int:
        return len(self.pre_header)

    @property
    def section_table_offset(self) -> int:
        return self.e_lfanew + 4 + COFF_HEADER_SIZE + self.coff.size_of_optional_header

    @property
    def section_table_end(self) -> int:
        return self.section_table_offset + SECTION_HEADER_SIZE * len(self.sections)

    def section_names(self) -> list[str]:
        return [s.name_str for s in self.sections]

    def rva_to_offset(self, rva: int) -> int | None:
        """Map an RVA into a file offset through the section table."""
        if rva <= 0:
            return None
        for s in self.sections:
            span = max(s.virtual_size, s.raw_size)
            if span and s.virtual_address <= rva < s.virtual_address + span:
                delta = rva - s.virtual_address
                if delta < s.raw_size:
                    return s.raw_offset + delta
                return None
        return None


@dataclass(frozen=True)
class FormatReport:
    is_pe: bool
    failures: tuple[str, ...]


def _u16(raw: bytes, off: int) -> int:
    return struct.unpack_from("<H", raw, off)[0]


def _u32(raw: bytes, off: int) -> int:
    return struct.unpack_from("<I", raw, off)[0]


def _u64(raw: bytes, off: int) -> int:
    return struct.unpack_from("<Q", raw, off)[0]


def _parse_optional(opt: bytes) -> OptionalHeader:
    if len(opt) < 2:
        raise Truncated("optional header too small for magic", CHECK_HEADER_BOUNDS)
    magic = _u16(opt, 0)
    if magic not in (PE32_MAGIC, PE32PLUS_MAGIC):
        raise Malformed(f"optional header magic 0x{magic:x} is not PE32/PE32+", CHECK_HEADER_BOUNDS)
    plus = magic == PE32PLUS_MAGIC
    fixed = 112 if plus else 96
    if len(opt) < fixed:
        raise Truncated("optional header smaller than fixed layout", CHECK_HEADER_BOUNDS)

    if plus:
        base_of_data = 0
        image_base = _u64(opt, 24)
        win_off = 32
    else:
        base_of_data = _u32(opt, 24)
        image_base = _u32(opt, 28)
        win_off = 32

    if plus:
        stack_reserve = _u64(opt, 72)
        stack_commit = _u64(opt, 80)
        heap_reserve = _u64(opt, 88)
        heap_commit = _u64(opt, 96)
        loader_flags = _u32(opt, 104)
        nrva = _u32(opt, 108)
        dir_off = 112
    else:
        stack_reserve = _u32(opt, 72)
        stack_commit = _u32(opt, 76)
        heap_reserve = _u32(opt, 80)
        heap_commit = _u32(opt, 84)
        loader_flags = _u32(opt, 88)
        nrva = _u32(opt, 92)
        dir_off = 96

    if nrva > MAX_DATA_DIRECTORIES:
        raise Malformed(f"number_of_rva_and_sizes {nrva} exceeds {MAX_DATA_DIRECTORIES}", CHECK_DIRECTORY_BOUNDS)
    if dir_off + 8 * nrva > len(opt):
        raise Malformed("data directories extend past declared optional header", CHECK_DIRECTORY_BOUNDS)

    dirs = tuple(
        DataDirectory(_u32(opt, dir_off + 8 * i), _u32(opt, dir_off + 8 * i + 4))
        for i in range(nrva)
    )

    return OptionalHeader(
        magic=magic,
        major_linker_version=opt[2],
        minor_linker_version=opt[3],
        size_of_code=_u32(opt, 4),
        size_of_initialized_data=_u32(opt, 8),
        size_of_uninitialized_data=_u32(opt, 12),
        entry_point=_u32(opt, 16),
        base_of_code=_u32(opt, 20),
        base_of_data=base_of_data,
        image_base=image_base,
        section_alignment=_u32(opt, win_off),
        file_alignment=_u32(opt, win_off + 4),
        major_os_version=_u16(opt, 40),
        minor_os_version=_u16(opt, 42),
        major_image_version=_u16(opt, 44),
        minor_image_version=_u16(opt, 46),
        major_subsystem_version=_u16(opt, 48),
        minor_subsystem_version=_u16(opt, 50),
        win32_version=_u32(opt, 52),
        size_of_image=_u32(opt, 56),
        size_of_headers=_u32(opt, 60),
        checksum=_u32(opt, 64),
        subsystem=_u16(opt, 68),
        dll_characteristics=_u16(opt, 70),
        size_of_stack_reserve=stack_reserve,
        size_of_stack_commit=stack_commit,
        size_of_heap_reserve=heap_reserve,
        size_of_heap_commit=heap_commit,
        loader_flags=loader_flags,
        number_of_rva_and_sizes=nrva,
        data_directories=dirs,
        trailing=bytes(opt[dir_off + 8 * nrva:]),
    )


def _pack_optional(opt: OptionalHeader) -> bytes:
    plus = opt.is_pe32_plus
    out = bytearray()
    out += struct.pack("<HBB", opt.magic, opt.major_linker_version, opt.minor_linker_version)
    out += struct.pack(
        "<IIIII",
        opt.size_of_code,
        opt.size_of_initialized_data,
        opt.size_of_uninitialized_data,
        opt.entry_point,
        opt.base_of_code,
    )
    if plus:
        out += struct.pack("<Q", opt.image_base)
    else:
        out += struct.pack("<II", opt.base_of_data, opt.image_base)
    out += struct.pack("<II", opt.section_alignment, opt.file_alignment)
    out += struct.pack(
        "<HHHHHH",
        opt.major_os_version,
        opt.minor_os_version,
        opt.major_image_version,
        opt.minor_image_version,
        opt.major_subsystem_version,
        opt.minor_subsystem_version,
    )
    out += struct.pack("<IIII", opt.win32_version, opt.size_of_image, opt.size_of_headers, opt.checksum)
    out += struct.pack("<HH", opt.subsystem, opt.dll_characteristics)
    width = "<QQQQ" if plus else "<IIII"
    out += struct.pack(
        width,
        opt.size_of_stack_reserve,
        opt.size_of_stack_commit,
        opt.size_of_heap_reserve,
        opt.size_of_heap_commit,
    )
    out += struct.pack("<II", opt.loader_flags, opt.number_of_rva_and_sizes)
    for d in opt.data_directories:
        out += struct.pack("<II", d.rva, d.size)
    out += opt.trailing
    return bytes(out)


def _pack_coff(coff: CoffHeader) -> bytes:
    return struct.pack(
        "<HHIIIHH",
        coff.machine,
        coff.number_of_sections,
        coff.timestamp,
        coff.pointer_to_symbol_table,
        coff.number_of_symbols,
        coff.size_of_optional_header,
        coff.characteristics,
    )


def _pack_section_header(s: Section) -> bytes:
    return s.name + struct.pack(
        "<IIIIIIHHI",
        s.virtual_size,
        s.virtual_address,
        s.raw_size,
        s.raw_offset,
        s.pointer_to_relocations,
        s.pointer_to_line_numbers,
        s.number_of_relocations,
        s.number_of_line_numbers,
        s.characteristics,
    )


def parse_pe(raw: bytes) -> PeFile:
    """Decompose `raw` into a PeFile whose serialization is byte-identical.

    Raises NotMz, NotPe, Truncated, or Malformed; every raised error maps
    onto one of the named static checks so verify_format can mirror it.
    """
    if len(raw) < 2 or raw[:2] != MZ_MAGIC:
        raise NotMz("missing MZ magic")
    if len(raw) < 0x40:
        raise Truncated("file smaller than the DOS header", CHECK_MAGIC)

    e_lfanew = _u32(raw, 0x3C)
    if e_lfanew < 0x40 or e_lfanew + 4 > len(raw):
        raise NotPe(f"e_lfanew 0x{e_lfanew:x} out of range")
    if raw[e_lfanew:e_lfanew + 4] != PE_SIGNATURE:
        raise NotPe("missing PE\\0\\0 signature")

    coff_off = e_lfanew + 4
    if coff_off + COFF_HEADER_SIZE > len(raw):
        raise Truncated("COFF header extends past EOF")
    coff = CoffHeader(
        machine=_u16(raw, coff_off),
        number_of_sections=_u16(raw, coff_off + 2),
        timestamp=_u32(raw, coff_off + 4),
        pointer_to_symbol_table=_u32(raw, coff_off + 8),
        number_of_symbols=_u32(raw, coff_off + 12),
        size_of_optional_header=_u16(raw, coff_off + 16),
        characteristics=_u16(raw, coff_off + 18),
    )

    opt_off = coff_off + COFF_HEADER_SIZE
    if opt_off + coff.size_of_optional_header > len(raw):
        raise Truncated("optional header extends past EOF")
    optional = _parse_optional(raw[opt_off:opt_off + coff.size_of_optional_header])

    if coff.number_of_sections > MAX_SECTIONS:
        raise Malformed(f"section count {coff.number_of_sections} exceeds {MAX_SECTIONS}", CHECK_SECTION_TABLE)
    table_off = opt_off + coff.size_of_optional_header
    table_end = table_off + SECTION_HEADER_SIZE * coff.number_of_sections
    if table_end > len(raw):
        raise Truncated("section table extends past EOF", CHECK_SECTION_TABLE)

    align = optional.file_alignment
    align_ok = align >= 512 and align <= 0x10000 and (align & (align - 1)) == 0

    headers = []
    for i in range(coff.number_of_sections):
        off = table_off + SECTION_HEADER_SIZE * i
        headers.append(
            dict(
                name=bytes(raw[off:off + 8]),
                virtual_size=_u32(raw, off + 8),
                virtual_address=_u32(raw, off + 12),
                raw_size=_u32(raw, off + 16),
                raw_offset=_u32(raw, off + 20),
                pointer_to_relocations=_u32(raw, off + 24),
                pointer_to_line_numbers=_u32(raw, off + 28),
                number_of_relocations=_u16(raw, off + 32),
                number_of_line_numbers=_u16(raw, off + 34),
                characteristics=_u32(raw, off + 36),
            )
        )

    for i, h in enumerate(headers):
        if h["raw_size"] == 0:
            continue
        if h["raw_offset"] + h["raw_size"] > len(raw):
            raise Truncated(f"section {i} raw data extends past EOF", CHECK_SECTION_TABLE)
        if align_ok and h["raw_offset"] % align != 0:
            raise Malformed(f"section {i} raw offset not file-aligned", CHECK_SECTION_TABLE)

    # File-space layout: data regions must start after the section table,
    # be sorted by raw offset, and never overlap.
    cursor = table_end
    sections: list[Section] = []
    for i, h in enumerate(headers):
        if h["raw_size"] == 0:
            sections.append(Section(data=b"", gap_before=b"", **h))
            continue
        if h["raw_offset"] < cursor:
            raise Malformed(f"section {i} overlaps preceding structures", CHECK_SECTION_LAYOUT)
        gap = bytes(raw[cursor:h["raw_offset"]])
        data = bytes(raw[h["raw_offset"]:h["raw_offset"] + h["raw_size"]])
        cursor = h["raw_offset"] + h["raw_size"]
        sections.append(Section(data=data, gap_before=gap, **h))

    overlay = bytes(raw[cursor:])
    return PeFile(
        pre_header=bytes(raw[:e_lfanew]),
        coff=coff,
        optional=optional,
        sections=tuple(sections),
        overlay=overlay,
    )


def write_pe(pe: PeFile) -> bytes:
    """Serialize a PeFile; exact inverse of parse_pe for unmodified files."""
    opt_bytes = _pack_optional(pe.optional)
    if len(opt_bytes) != pe.coff.size_of_optional_header:
        raise LayoutOverflow(
            f"optional header serializes to {len(opt_bytes)} bytes, "
            f"header declares {pe.coff.size_of_optional_header}"
        )
    if pe.coff.number_of_sections != len(pe.sections):
        raise Malformed("number_of_sections disagrees with the section list")

    out = bytearray()
    out += pe.pre_header
    out += PE_SIGNATURE
    out += _pack_coff(pe.coff)
    out += opt_bytes
    for s in pe.sections:
        out += _pack_section_header(s)

    cursor = len(out)
    for i, s in enumerate(pe.sections):
        if s.raw_size == 0:
            continue
        if s.raw_size != len(s.data):
            raise Malformed(f"section {i} raw_size disagrees with payload length")
        if cursor + len(s.gap_before) != s.raw_offset:
            raise LayoutOverflow(
                f"section {i} raw offset 0x{s.raw_offset:x} unreachable from cursor 0x{cursor:x}"
            )
        out += s.gap_before
        out += s.data
        cursor = s.raw_offset + s.raw_size
    out += pe.overlay
    return bytes(out)


def verify_format(raw: bytes) -> FormatReport:
    """Static format check; is_pe agrees with parse_pe success by construction."""
    try:
        parse_pe(raw)
    except PeError as err:
        return FormatReport(is_pe=False, failures=(err.check,))
    return FormatReport(is_pe=True, failures=())


def checksum_field_offset(raw: bytes) -> int:
    """File offset of the 4-byte optional-header checksum field."""
    e_lfanew = _u32(raw, 0x3C)
    return e_lfanew + 4 + COFF_HEADER_SIZE + 64


def compute_checksum(raw: bytes) -> int:
    """Documented PE checksum: 16-bit one's-complement sum over the file
    (accumulated dword-wise), skipping the checksum field, plus file length.

    End-around-carry addition is order-independent, so the dwords are
    summed in one vector pass and folded once at the end.
    """
    parse_pe(raw)  # propagate NotMz/NotPe/... on non-PE input
    skip_index = checksum_field_offset(raw) // 4

    import numpy as np

    data = raw
    remainder = len(data) % 4
    if remainder:
        data = data + b"\x00" * (4 - remainder)
    dwords = np.frombuffer(data, dtype="<u4")
    checksum = int(dwords.sum(dtype=np.uint64)) - int(dwords[skip_index])

    while checksum > 0xFFFF:
        checksum = (checksum & 0xFFFF) + (checksum >> 16)
    return checksum + len(raw)


# ---------------------------------------------------------------------------
# Derived views: import and debug directories. Best-effort readers tolerant
# of garbage (they return what they can); builders used by the corpus
# generator and the import-append mutation.
# ---------------------------------------------------------------------------

IMPORT_DESCRIPTOR_SIZE = 20
DEBUG_ENTRY_SIZE = 28


@dataclass(frozen=True)
class ImportDescriptor:
    original_first_thunk: int
    timestamp: int
    forwarder_chain: int
    name_rva: int
    first_thunk: int
    dll: str
    functions: tuple[str, ...]


def _read_cstr(raw: bytes, off: int, limit: int = 256) -> str | None:
    if off < 0 or off >= len(raw):
        return None
    end = raw.find(b"\x00", off, min(len(raw), off + limit))
    if end < 0:
        return None
    try:
        return raw[off:end].decode("ascii")
    except UnicodeDecodeError:
        return None


def read_import_descriptors(pe: PeFile, raw: bytes) -> list[ImportDescriptor]:
    """Walk the import directory. Unreadable structures end the walk."""
    d = pe.optional.directory(DIR_IMPORT)
    if d.rva == 0:
        return []
    base = pe.rva_to_offset(d.rva)
    if base is None:
        return []

    plus = pe.optional.is_pe32_plus
    thunk_size = 8 if plus else 4
    ordinal_flag = 1 << 63 if plus else 1 << 31

    out: list[ImportDescriptor] = []
    off = base
    for _ in range(256):
        if off + IMPORT_DESCRIPTOR_SIZE > len(raw):
            break
        oft, ts, fwd, name_rva, ft = struct.unpack_from("<IIIII", raw, off)
        if oft == 0 and ts == 0 and fwd == 0 and name_rva == 0 and ft == 0:
            break
        dll = _read_cstr(raw, pe.rva_to_offset(name_rva) or -1) or ""
        functions: list[str] = []
        thunk_rva = oft or ft
        thunk_off = pe.rva_to_offset(thunk_rva)
        if thunk_off is not None:
            for j in range(4096):
                ent_off = thunk_off + j * thunk_size
                if ent_off + thunk_size > len(raw):
                    break
                val = _u64(raw, ent_off) if plus else _u32(raw, ent_off)
                if val == 0:
                    break
                if val & ordinal_flag:
                    continue  # ordinal imports carry no name
                name_off = pe.rva_to_offset(int(val))
                if name_off is None:
                    continue
                name = _read_cstr(raw, name_off + 2)
                if name:
                    functions.append(name)
        out.append(
            ImportDescriptor(
                original_first_thunk=oft,
                timestamp=ts,
                forwarder_chain=fwd,
                name_rva=name_rva,
                first_thunk=ft,
                dll=dll,
                functions=tuple(functions),
            )
        )
        off += IMPORT_DESCRIPTOR_SIZE
    return out


def read_imports(pe: PeFile, raw: bytes) -> list[tuple[str, str]]:
    """All (function, dll) pairs, dll lowercased, in directory order."""
    pairs: list[tuple[str, str]] = []
    for desc in read_import_descriptors(pe, raw):
        for fn in desc.functions:
            pairs.append((fn, desc.dll.lower()))
    return pairs


def read_export_names(pe: PeFile, raw: bytes) -> list[str]:
    """Exported symbol names; empty on files without an export directory."""
    d = pe.optional.directory(DIR_EXPORT)
    if d.rva == 0:
        return []
    base = pe.rva_to_offset(d.rva)
    if base is None or base + 40 > len(raw):
        return []
    num_names = _u32(raw, base + 24)
    names_rva = _u32(raw, base + 32)
    names_off = pe.rva_to_offset(names_rva)
    if names_off is None:
        return []
    out = []
    for i in range(min(num_names, 4096)):
        if names_off + 4 * i + 4 > len(raw):
            break
        ptr = pe.rva_to_offset(_u32(raw, names_off + 4 * i))
        if ptr is None:
            continue
        name = _read_cstr(raw, ptr)
        if name:
            out.append(name)
    return out


def build_import_block(
    dlls: list[tuple[str, list[str]]],
    base_rva: int,
    pe32_plus: bool,
    preserved: list[ImportDescriptor] | None = None,
) -> tuple[bytes, int]:
    """Lay out a complete import directory blob addressed from base_rva.

    `preserved` descriptors are copied verbatim (their RVAs still point at
    the original structures elsewhere in the image); fresh descriptors and
    their thunk/hint-name storage are appended for each entry of `dlls`.
    Returns (blob, directory_size); the descriptor array sits at blob
    offset 0.
    """
    preserved = preserved or []
    thunk_size = 8 if pe32_plus else 4
    n_desc = len(preserved) + len(dlls)
    desc_bytes = IMPORT_DESCRIPTOR_SIZE * (n_desc + 1)

    # First pass: place thunk tables, hint/name entries and dll names.
    cursor = desc_bytes
    placements = []
    for dll, funcs in dlls:
        int_off = cursor
        cursor += thunk_size * (len(funcs) + 1)
        iat_off = cursor
        cursor += thunk_size * (len(funcs) + 1)
        hint_offs = []
        for fn in funcs:
            hint_offs.append(cursor)
            entry = 2 + len(fn) + 1
            cursor += entry + (entry % 2)
        name_off = cursor
        cursor += len(dll) + 1 + (len(dll) + 1) % 2
        placements.append((int_off, iat_off, hint_offs, name_off))

    blob = bytearray(cursor)
    off = 0
    for desc in preserved:
        struct.pack_into(
            "<IIIII",
            blob,
            off,
            desc.original_first_thunk,
            desc.timestamp,
            desc.forwarder_chain,
            desc.name_rva,
            desc.first_thunk,
        )
        off += IMPORT_DESCRIPTOR_SIZE
    for (dll, funcs), (int_off, iat_off, hint_offs, name_off) in zip(dlls, placements):
        struct.pack_into(
            "<IIIII", blob, off,
            base_rva + int_off, 0, 0, base_rva + name_off, base_rva + iat_off,
        )
        off += IMPORT_DESCRIPTOR_SIZE
        fmt = "<Q" if pe32_plus else "<I"
        for j, fn in enumerate(funcs):
            struct.pack_into(fmt, blob, int_off + j * thunk_size, base_rva + hint_offs[j])
            struct.pack_into(fmt, blob, iat_off + j * thunk_size, base_rva + hint_offs[j])
            struct.pack_into("<H", blob, hint_offs[j], 0)
            blob[hint_offs[j] + 2:hint_offs[j] + 2 + len(fn)] = fn.encode("ascii")
        blob[name_off:name_off + len(dll)] = dll.encode("ascii")
    # last descriptor row stays zeroed as the terminator

    return bytes(blob), desc_bytes


def align_up(value: int, alignment: int) -> int:
    if alignment <= 1:
        return value
    return (value + alignment - 1) // alignment * alignment
