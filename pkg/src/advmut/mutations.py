"""Format-preserving PE transformations: the agent's action space.

Ten actions with a fixed index order (serialized into reports): overlay
append, import append, section rename, section add, section append, UPX
pack/unpack, signature removal, debug removal, checksum break. Each
action is byte-in/byte-out given an explicit random stream; every applied
outcome still passes the static format verifier, actions that cannot
apply skip with a reason instead of failing.
"""

from __future__ import annotations

import enum
import shutil
import struct
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pe_codec
from .features import KIND_IMPORT, KIND_SECTION, Vocabulary
from .pe_codec import DataDirectory, PeFile, Section, align_up

MAX_PAYLOAD = 4096  # cap on random payload bytes, bounds growth over long episodes


class MutationAction(enum.IntEnum):
    OVERLAY_APPEND = 0
    IMPORTS_APPEND = 1
    SECTION_RENAME = 2
    SECTION_ADD = 3
    SECTION_APPEND = 4
    UPX_PACK = 5
    UPX_UNPACK = 6
    REMOVE_SIGNATURE = 7
    REMOVE_DEBUG = 8
    BREAK_HEADER_CHECKSUM = 9

    @property
    def label(self) -> str:
        return self.name.lower()


ACTION_ORDER = tuple(MutationAction)


class SkipReason(str, enum.Enum):
    TOOL_UNAVAILABLE = "tool_unavailable"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class ActionOutcome:
    new_bytes: bytes
    applied: bool
    skip_reason: SkipReason | None = None


@dataclass(frozen=True)
class MutationConfig:
    upx_path: str | None = None


# Fallback name pools used when the adversarial diff has nothing suitable.
FALLBACK_IMPORTS = (
    "GetModuleFileNameA:kernel32.dll",
    "GetSystemInfo:kernel32.dll",
    "IsValidCodePage:kernel32.dll",
    "GetACP:kernel32.dll",
    "GetOEMCP:kernel32.dll",
    "GetCPInfo:kernel32.dll",
    "EnumSystemLocalesA:kernel32.dll",
    "IsWindow:user32.dll",
    "GetSysColor:user32.dll",
    "GetStockObject:gdi32.dll",
)

FALLBACK_SECTIONS = (".stab", ".stabstr", ".gfids", ".00cfg", ".didat", ".sxdata")


@dataclass(frozen=True)
class FeatureSupplier:
    """Feeds the GAN's adversarial feature diff into the problem space.

    diff holds (vocabulary index, (kind, name)) pairs that the adversarial
    vector sets but the original lacks; picks are uniform over the diff
    entries of the matching kind, falling back to the built-in pools when
    the diff offers nothing.
    """

    vocab: Vocabulary | None
    diff: frozenset[tuple[int, tuple[str, str]]]
    rng_seed: int = 0

    def _of_kind(self, kind: str) -> list[tuple[int, str]]:
        return sorted((idx, name) for idx, (k, name) in self.diff if k == kind)

    def pick_import(
        self, rng: np.random.Generator, exclude: set[str]
    ) -> tuple[int | None, str]:
        """(vocab index, "Function:dll") not already imported."""
        candidates = [(i, n) for i, n in self._of_kind(KIND_IMPORT) if n not in exclude]
        if candidates:
            idx, name = candidates[int(rng.integers(0, len(candidates)))]
            return idx, name
        pool = [n for n in FALLBACK_IMPORTS if n not in exclude]
        if not pool:
            pool = list(FALLBACK_IMPORTS)
        return None, pool[int(rng.integers(0, len(pool)))]

    def pick_section_name(self, rng: np.random.Generator) -> tuple[int | None, str]:
        candidates = self._of_kind(KIND_SECTION)
        if candidates:
            idx, name = candidates[int(rng.integers(0, len(candidates)))]
            return idx, name
        return None, FALLBACK_SECTIONS[int(rng.integers(0, len(FALLBACK_SECTIONS)))]


EMPTY_SUPPLIER = FeatureSupplier(vocab=None, diff=frozenset())


def available_actions(config: MutationConfig | None = None) -> tuple[MutationAction, ...]:
    """All ten actions in index order; the UPX pair only when configured."""
    config = config or MutationConfig()
    if config.upx_path:
        return ACTION_ORDER
    return tuple(
        a for a in ACTION_ORDER if a not in (MutationAction.UPX_PACK, MutationAction.UPX_UNPACK)
    )


def _rng_bytes(rng: np.random.Generator, n: int) -> bytes:
    return rng.integers(0, 256, n, dtype=np.uint8).tobytes()


def _patch_security_offset(pe: PeFile, shift_at: int, delta: int) -> PeFile:
    """The certificate directory stores a file offset; keep it pointing at
    the same blob when layout grows by `delta` at/after `shift_at`."""
    d = pe.optional.directory(pe_codec.DIR_SECURITY)
    if d.rva == 0 or d.rva < shift_at:
        return pe
    dirs = list(pe.optional.data_directories)
    dirs[pe_codec.DIR_SECURITY] = DataDirectory(d.rva + delta, d.size)
    return replace(pe, optional=replace(pe.optional, data_directories=tuple(dirs)))


def _last_extent_end(pe: PeFile) -> int:
    ends = [s.raw_end for s in pe.sections if s.raw_size]
    return max(ends) if ends else pe.section_table_end


def _used_section_names(pe: PeFile) -> set[str]:
    return {s.name_str for s in pe.sections}


def _unique_section_name(base: str, used: set[str]) -> str:
    name = base[:8]
    if name not in used:
        return name
    for i in range(100):
        candidate = f"{base[:6]}{i}"[:8]
        if candidate not in used:
            return candidate
    return name  # duplicate names are legal in PE; last resort


def _append_section(pe: PeFile, name: str, payload: bytes, characteristics: int) -> PeFile | None:
    """Grow the section table by one entry and place the payload after the
    last raw extent. Returns None when the header area has no room for
    another 40-byte header (callers then skip as not-applicable)."""
    with_data = [s for s in pe.sections if s.raw_size]
    if not with_data:
        return None
    first = min(with_data, key=lambda s: s.raw_offset)
    if len(first.gap_before) < pe_codec.SECTION_HEADER_SIZE:
        return None

    align = pe.optional.file_alignment
    raw_size = align_up(max(len(payload), 1), align)
    padded = payload + b"\x00" * (raw_size - len(payload))

    old_end = _last_extent_end(pe)
    new_offset = align_up(old_end, align)
    lead_gap = b"\x00" * (new_offset - old_end)

    va_end = max(
        (s.virtual_address + max(s.virtual_size, s.raw_size) for s in pe.sections),
        default=pe.optional.section_alignment,
    )
    new_va = align_up(va_end, pe.optional.section_alignment)

    new_section = Section(
        name=name.encode("ascii", errors="replace")[:8].ljust(8, b"\x00"),
        virtual_size=len(payload),
        virtual_address=new_va,
        raw_size=raw_size,
        raw_offset=new_offset,
        pointer_to_relocations=0,
        pointer_to_line_numbers=0,
        number_of_relocations=0,
        number_of_line_numbers=0,
        characteristics=characteristics,
        data=padded,
        gap_before=lead_gap,
    )

    sections = []
    for s in pe.sections:
        if s is first:
            # the new table entry consumes 40 bytes of the header padding
            s = replace(s, gap_before=s.gap_before[pe_codec.SECTION_HEADER_SIZE:])
        sections.append(s)
    sections.append(new_section)

    new_image = align_up(new_va + max(len(payload), 1), pe.optional.section_alignment)
    out = replace(
        pe,
        coff=replace(pe.coff, number_of_sections=len(sections)),
        optional=replace(pe.optional, size_of_image=new_image),
        sections=tuple(sections),
    )
    # everything at/after the new payload start shifted by the raw growth
    return _patch_security_offset(out, old_end, (new_offset + raw_size) - old_end)


def _overlay_append(pe: PeFile, rng: np.random.Generator) -> PeFile:
    n = int(rng.integers(1, MAX_PAYLOAD + 1))
    return replace(pe, overlay=pe.overlay + _rng_bytes(rng, n))


IMPORT_SECTION_NAME = ".idata0"  # marker for the mutation-owned import section
IMPORT_SECTION_CAPACITY = 12288  # reserved space; ~100 bytes per added import


def _imports_append(pe: PeFile, raw: bytes, supplier: FeatureSupplier, rng: np.random.Generator) -> PeFile | None:
    """Rebuild the import directory with one extra function:dll.

    The first application appends a capacity-reserved section and repoints
    data directory 1 into it; later applications rewrite that section's
    content in place, so repeated additions cost exactly one section
    total and never shift the file layout again.
    """
    existing = pe_codec.read_import_descriptors(pe, raw)
    imported = {f"{fn}:{desc.dll.lower()}" for desc in existing for fn in desc.functions}
    _, entry = supplier.pick_import(rng, exclude=imported)
    func, _, dll = entry.partition(":")

    # full (dll -> functions) map including the new entry
    by_dll: dict[str, list[str]] = {}
    for desc in existing:
        if desc.dll:
            by_dll.setdefault(desc.dll.lower(), []).extend(desc.functions)
    by_dll.setdefault(dll.lower(), []).append(func)
    dlls = [(name, sorted(set(fns))) for name, fns in sorted(by_dll.items())]

    owned_idx = next(
        (i for i, s in enumerate(pe.sections) if s.name_str == IMPORT_SECTION_NAME), None
    )
    if owned_idx is None:
        va_end = max(
            (s.virtual_address + max(s.virtual_size, s.raw_size) for s in pe.sections),
            default=pe.optional.section_alignment,
        )
        new_va = align_up(va_end, pe.optional.section_alignment)
        blob, dir_size = pe_codec.build_import_block(dlls, new_va, pe.optional.is_pe32_plus)
        if len(blob) > IMPORT_SECTION_CAPACITY:
            return None
        # random filler keeps the section's entropy in line with ordinary
        # data sections; rebuilds only overwrite the directory prefix
        payload = blob + _rng_bytes(rng, IMPORT_SECTION_CAPACITY - len(blob))
        grown = _append_section(
            pe,
            IMPORT_SECTION_NAME,
            payload,
            pe_codec.SCN_CNT_INITIALIZED_DATA | pe_codec.SCN_MEM_READ | pe_codec.SCN_MEM_WRITE,
        )
        if grown is None:
            return None
        out = grown
    else:
        section = pe.sections[owned_idx]
        blob, dir_size = pe_codec.build_import_block(
            dlls, section.virtual_address, pe.optional.is_pe32_plus
        )
        if len(blob) > section.raw_size:
            return None
        data = blob + section.data[len(blob):section.raw_size]
        sections = list(pe.sections)
        sections[owned_idx] = replace(section, data=data)
        out = replace(pe, sections=tuple(sections))

    import_va = next(
        s.virtual_address for s in out.sections if s.name_str == IMPORT_SECTION_NAME
    )
    dirs = list(out.optional.data_directories)
    dirs[pe_codec.DIR_IMPORT] = DataDirectory(import_va, dir_size)
    return replace(out, optional=replace(out.optional, data_directories=tuple(dirs)))


def _section_rename(pe: PeFile, supplier: FeatureSupplier, rng: np.random.Generator) -> PeFile | None:
    if not pe.sections:
        return None
    idx = int(rng.integers(0, len(pe.sections)))
    _, new_name = supplier.pick_section_name(rng)
    target = pe.sections[idx]
    renamed = replace(target, name=new_name.encode("ascii", errors="replace")[:8].ljust(8, b"\x00"))
    sections = list(pe.sections)
    sections[idx] = renamed
    return replace(pe, sections=tuple(sections))


def _section_add(pe: PeFile, supplier: FeatureSupplier, rng: np.random.Generator) -> PeFile | None:
    _, name = supplier.pick_section_name(rng)
    name = _unique_section_name(name, _used_section_names(pe))
    payload = _rng_bytes(rng, int(rng.integers(1, MAX_PAYLOAD + 1)))
    return _append_section(
        pe, name, payload, pe_codec.SCN_CNT_INITIALIZED_DATA | pe_codec.SCN_MEM_READ
    )


def _section_append(pe: PeFile, rng: np.random.Generator) -> PeFile | None:
    """Append random bytes into the tail of the last section, growing its
    raw extent when the alignment slack is not enough."""
    with_data = [i for i, s in enumerate(pe.sections) if s.raw_size]
    if not with_data:
        return None
    idx = max(with_data, key=lambda i: pe.sections[i].raw_offset)
    target = pe.sections[idx]
    if target.raw_end != _last_extent_end(pe):
        return None
    # must also own the top of the address space, or growth would collide
    if any(
        s.virtual_address > target.virtual_address for s in pe.sections if max(s.virtual_size, s.raw_size)
    ):
        return None

    extra = _rng_bytes(rng, int(rng.integers(1, MAX_PAYLOAD + 1)))
    content_end = min(target.virtual_size, target.raw_size)
    new_content_len = content_end + len(extra)
    align = pe.optional.file_alignment
    new_raw = align_up(max(new_content_len, 1), align)
    data = target.data[:content_end] + extra
    data += b"\x00" * (new_raw - len(data))

    grown = replace(
        target,
        data=data,
        raw_size=new_raw,
        virtual_size=new_content_len,
    )
    sections = list(pe.sections)
    sections[idx] = grown
    new_image = align_up(
        grown.virtual_address + new_content_len, pe.optional.section_alignment
    )
    out = replace(
        pe,
        sections=tuple(sections),
        optional=replace(
            pe.optional, size_of_image=max(pe.optional.size_of_image, new_image)
        ),
    )
    return _patch_security_offset(out, target.raw_end, new_raw - target.raw_size)


def _remove_signature(pe: PeFile) -> PeFile | None:
    d = pe.optional.directory(pe_codec.DIR_SECURITY)
    if d.rva == 0 and d.size == 0:
        return None
    dirs = list(pe.optional.data_directories)
    dirs[pe_codec.DIR_SECURITY] = DataDirectory(0, 0)
    out = replace(pe, optional=replace(pe.optional, data_directories=tuple(dirs)))

    # certificate blobs live at a plain file offset, normally the overlay
    start = _last_extent_end(pe)
    if d.rva >= start and d.size:
        lo = d.rva - start
        hi = min(lo + d.size, len(pe.overlay))
        if 0 <= lo <= len(pe.overlay):
            if hi >= len(pe.overlay):
                overlay = pe.overlay[:lo]  # suffix: truncate
            else:
                overlay = pe.overlay[:lo] + b"\x00" * (hi - lo) + pe.overlay[hi:]
            out = replace(out, overlay=overlay)
    return out


def _remove_debug(pe: PeFile) -> PeFile | None:
    d = pe.optional.directory(pe_codec.DIR_DEBUG)
    if d.rva == 0 and d.size == 0:
        return None
    dirs = list(pe.optional.data_directories)
    dirs[pe_codec.DIR_DEBUG] = DataDirectory(0, 0)
    out = replace(pe, optional=replace(pe.optional, data_directories=tuple(dirs)))

    entry_off = pe.rva_to_offset(d.rva)
    if entry_off is not None and d.size:
        for i, s in enumerate(pe.sections):
            if s.raw_size and s.raw_offset <= entry_off < s.raw_end:
                lo = entry_off - s.raw_offset
                hi = min(lo + d.size, len(s.data))
                data = s.data[:lo] + b"\x00" * (hi - lo) + s.data[hi:]
                sections = list(out.sections)
                sections[i] = replace(sections[i], data=data)
                out = replace(out, sections=tuple(sections))
                break
    return out


def _break_checksum(pe: PeFile, raw: bytes) -> PeFile:
    correct = pe_codec.compute_checksum(raw)
    broken = ~correct & 0xFFFFFFFF
    return replace(pe, optional=replace(pe.optional, checksum=broken))


def _run_upx(raw: bytes, upx_path: str, unpack: bool) -> bytes | None:
    """Round-trip through the external tool on a private temp copy."""
    if not upx_path or shutil.which(upx_path) is None:
        return None
    with tempfile.TemporaryDirectory(prefix="advmut-upx-") as tmp:
        target = Path(tmp) / "work.bin"
        target.write_bytes(raw)
        argv = [upx_path, "-d", "-q", str(target)] if unpack else [upx_path, "-q", str(target)]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=60)
        except (OSError, subprocess.TimeoutExpired):
            return None
        if proc.returncode != 0:
            return None
        return target.read_bytes()


def apply_action(
    raw: bytes,
    action: MutationAction,
    supplier: FeatureSupplier,
    rng: np.random.Generator,
    config: MutationConfig | None = None,
) -> ActionOutcome:
    """Apply one action to a valid PE image.

    Raises the codec's parse errors if `raw` is not a valid PE (caller
    precondition). Otherwise never raises: inapplicable actions return
    applied=False with a skip reason and the original bytes.
    """
    config = config or MutationConfig()
    pe = pe_codec.parse_pe(raw)

    def skip(reason: SkipReason) -> ActionOutcome:
        return ActionOutcome(new_bytes=raw, applied=False, skip_reason=reason)

    if action in (MutationAction.UPX_PACK, MutationAction.UPX_UNPACK):
        if not config.upx_path:
            return skip(SkipReason.TOOL_UNAVAILABLE)
        result = _run_upx(raw, config.upx_path, unpack=action == MutationAction.UPX_UNPACK)
        if result is None or not pe_codec.verify_format(result).is_pe:
            return skip(SkipReason.NOT_APPLICABLE)
        return ActionOutcome(new_bytes=result, applied=True)

    if action == MutationAction.OVERLAY_APPEND:
        mutated = _overlay_append(pe, rng)
    elif action == MutationAction.IMPORTS_APPEND:
        mutated = _imports_append(pe, raw, supplier, rng)
    elif action == MutationAction.SECTION_RENAME:
        mutated = _section_rename(pe, supplier, rng)
    elif action == MutationAction.SECTION_ADD:
        mutated = _section_add(pe, supplier, rng)
    elif action == MutationAction.SECTION_APPEND:
        mutated = _section_append(pe, rng)
    elif action == MutationAction.REMOVE_SIGNATURE:
        mutated = _remove_signature(pe)
    elif action == MutationAction.REMOVE_DEBUG:
        mutated = _remove_debug(pe)
    elif action == MutationAction.BREAK_HEADER_CHECKSUM:
        mutated = _break_checksum(pe, raw)
    else:
        raise ValueError(f"unknown action {action!r}")

    if mutated is None:
        return skip(SkipReason.NOT_APPLICABLE)
    new_bytes = pe_codec.write_pe(mutated)
    if not pe_codec.verify_format(new_bytes).is_pe:
        # applied outcomes must stay parseable; treat anything else as a skip
        return skip(SkipReason.NOT_APPLICABLE)
    return ActionOutcome(new_bytes=new_bytes, applied=True)
