"""The two featurizations used by the attack pipeline.

GAN space: a 0/1 vector over a corpus-derived vocabulary of import
"Function:dll" entries and section names.

Agent state space: a fixed 2,350-wide real vector over raw bytes, laid out
as byte histogram 256 | byte-entropy 2-D histogram 256 | hashed section
info 255 | hashed imports 1,280 | hashed exports 128 | general file info
24 | header info 47 | printable-string stats 104. The two histogram blocks
are L1-normalized; hashing uses FNV-1a 64 with a per-block modulus.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pe_codec
from .pe_codec import PeFile

KIND_IMPORT = "import"
KIND_SECTION = "section"

STATE_WIDTH = 2350

# Block layout of the state vector: (name, start, width).
STATE_LAYOUT = (
    ("byte_histogram", 0, 256),
    ("byte_entropy", 256, 256),
    ("section_info", 512, 255),
    ("imports", 767, 1280),
    ("exports", 2047, 128),
    ("general", 2175, 24),
    ("header", 2199, 47),
    ("strings", 2246, 104),
)

ENTROPY_WINDOW = 2048
ENTROPY_STRIDE = 1024

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_PRINTABLE_RE = re.compile(rb"[\x20-\x7f]{5,}")


class EmptyCorpus(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def fnv1a_64(text: str) -> int:
    """FNV-1a over the UTF-8 bytes; the fixed hash behind every hashed block."""
    h = _FNV_OFFSET
    for b in text.encode("utf-8", errors="replace"):
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Vocabulary:
    """Ordered feature names: imports first, then sections, each sorted."""

    entries: tuple[tuple[str, str], ...]  # (kind, name)
    _index: dict[tuple[str, str], int] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        index = {entry: i for i, entry in enumerate(self.entries)}
        if len(index) != len(self.entries):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.entries)

    def position(self, kind: str, name: str) -> int | None:
        return self._index.get((kind, name))

    @property
    def n_imports(self) -> int:
        return sum(1 for kind, _ in self.entries if kind == KIND_IMPORT)

    @property
    def n_sections(self) -> int:
        return len(self.entries) - self.n_imports

    def indices_of_kind(self, kind: str) -> list[int]:
        return [i for i, (k, _) in enumerate(self.entries) if k == kind]

    def save(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for kind, name in self.entries:
                fh.write(f"{kind}\t{name}\n")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                kind, _, name = line.rstrip("\n").partition("\t")
                entries.append((kind, name))
        return cls(entries=tuple(entries))


def _import_names(pe: PeFile, raw: bytes) -> set[str]:
    return {f"{fn}:{dll}" for fn, dll in pe_codec.read_imports(pe, raw)}


def _section_names(pe: PeFile) -> set[str]:
    return {s.name_str for s in pe.sections if s.name_str}


def build_vocabulary(corpus: list[tuple[PeFile, bytes]]) -> Vocabulary:
    """Union of every distinct import and section name across the corpus."""
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from zero files")
    imports: set[str] = set()
    sections: set[str] = set()
    for pe, raw in corpus:
        imports |= _import_names(pe, raw)
        sections |= _section_names(pe)
    entries = [(KIND_IMPORT, name) for name in sorted(imports)]
    entries += [(KIND_SECTION, name) for name in sorted(sections)]
    return Vocabulary(entries=tuple(entries))


def extract_gan_features(pe: PeFile, raw: bytes, vocab: Vocabulary) -> np.ndarray:
    """0/1 vector: bit i set iff vocabulary entry i is present in the file.
    Out-of-vocabulary content is ignored."""
    bits = np.zeros(len(vocab), dtype=np.uint8)
    for name in _import_names(pe, raw):
        pos = vocab.position(KIND_IMPORT, name)
        if pos is not None:
            bits[pos] = 1
    for name in _section_names(pe):
        pos = vocab.position(KIND_SECTION, name)
        if pos is not None:
            bits[pos] = 1
    return bits


def feature_diff(
    original: np.ndarray, adversarial: np.ndarray, vocab: Vocabulary
) -> set[tuple[int, tuple[str, str]]]:
    """Indices set in the adversarial vector but absent from the original."""
    if len(original) != len(adversarial) or len(original) != len(vocab):
        raise LengthMismatch(
            f"lengths {len(original)}/{len(adversarial)}/{len(vocab)} disagree"
        )
    added = np.flatnonzero((adversarial == 1) & (original == 0))
    return {(int(i), vocab.entries[int(i)]) for i in added}


def shannon_entropy(data: bytes | np.ndarray) -> float:
    """Entropy in bits of the byte distribution."""
    if len(data) == 0:
        return 0.0
    arr = np.frombuffer(data, dtype=np.uint8) if isinstance(data, bytes) else data
    counts = np.bincount(arr, minlength=256)
    p = counts[counts > 0] / len(arr)
    return float(-(p * np.log2(p)).sum())


def _byte_histogram(arr: np.ndarray) -> np.ndarray:
    out = np.zeros(256)
    if arr.size:
        counts = np.bincount(arr, minlength=256)
        out = counts / counts.sum()
    return out


def _entropy_histogram(arr: np.ndarray) -> np.ndarray:
    """16x16 (entropy row x mean-byte column) histogram of sliding windows.

    All windows are binned in one bincount pass (window-offset trick), so
    the cost stays linear in file size rather than windows x 256.
    """
    out = np.zeros((16, 16))
    if arr.size == 0:
        return out.ravel()
    if arr.size <= ENTROPY_WINDOW:
        windows = arr[None, :]
    else:
        n = (arr.size - ENTROPY_WINDOW) // ENTROPY_STRIDE + 1
        windows = np.lib.stride_tricks.as_strided(
            arr,
            shape=(n, ENTROPY_WINDOW),
            strides=(arr.strides[0] * ENTROPY_STRIDE, arr.strides[0]),
        )
    n = windows.shape[0]
    offsets = (np.arange(n, dtype=np.int64) * 256)[:, None]
    counts = np.bincount(
        (windows.astype(np.int64) + offsets).ravel(), minlength=n * 256
    ).reshape(n, 256)
    p = counts / windows.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0, np.log2(p, where=p > 0), 0.0)
    entropy = -(p * logs).sum(axis=1)
    means = windows.mean(axis=1)
    ebins = np.minimum((entropy * 2).astype(np.int64), 15)
    mbins = np.minimum((means / 16.0).astype(np.int64), 15)
    np.add.at(out, (ebins, mbins), 1.0)
    return (out / out.sum()).ravel()


def _hashed_sections(pe: PeFile) -> np.ndarray:
    out = np.zeros(255)
    for s in pe.sections:
        name = s.name_str
        out[fnv1a_64("name|" + name) % 255] += 1.0
        out[fnv1a_64("size|" + name) % 255] += math.log1p(s.raw_size)
        out[fnv1a_64("entropy|" + name) % 255] += shannon_entropy(s.data)
    return out


def _hashed_imports(pairs: list[tuple[str, str]]) -> np.ndarray:
    out = np.zeros(1280)
    for fn, dll in pairs:
        out[fnv1a_64(f"{fn}:{dll}") % 1280] += 1.0
    for dll in {dll for _, dll in pairs}:
        out[fnv1a_64("dll|" + dll) % 1280] += 1.0
    return out


def _hashed_exports(names: list[str]) -> np.ndarray:
    out = np.zeros(128)
    for name in names:
        out[fnv1a_64(name) % 128] += 1.0
    return out


def _general_info(pe: PeFile, raw: bytes, pairs: list[tuple[str, str]], exports: list[str]) -> np.ndarray:
    opt = pe.optional
    entropies = [shannon_entropy(s.data) for s in pe.sections if s.raw_size]
    entry_section_exec = 0.0
    for s in pe.sections:
        span = max(s.virtual_size, s.raw_size)
        if span and s.virtual_address <= opt.entry_point < s.virtual_address + span:
            entry_section_exec = float(bool(s.characteristics & pe_codec.SCN_MEM_EXECUTE))
            break
    return np.array(
        [
            math.log1p(len(raw)),
            math.log1p(len(pe.overlay)),
            float(len(pe.sections)),
            float(sum(1 for s in pe.sections if s.raw_size)),
            float(len({s.name_str for s in pe.sections})),
            float(sum(1 for s in pe.sections if s.characteristics & pe_codec.SCN_MEM_EXECUTE)),
            float(sum(1 for s in pe.sections if s.characteristics & pe_codec.SCN_MEM_WRITE)),
            float(len(pairs)),
            float(len({dll for _, dll in pairs})),
            float(len(exports)),
            float(opt.directory(pe_codec.DIR_DEBUG).rva != 0),
            float(opt.directory(pe_codec.DIR_SECURITY).size != 0),
            float(opt.directory(pe_codec.DIR_BASERELOC).rva != 0),
            float(opt.directory(pe_codec.DIR_RESOURCE).rva != 0),
            float(opt.directory(pe_codec.DIR_TLS).rva != 0),
            math.log1p(opt.size_of_image),
            float(np.mean(entropies)) if entropies else 0.0,
            float(np.max(entropies)) if entropies else 0.0,
            math.log1p(sum(s.raw_size for s in pe.sections)),
            math.log1p(sum(len(s.gap_before) for s in pe.sections)),
            entry_section_exec,
            float(opt.checksum != 0),
            float(sum(1 for d in opt.data_directories if d.rva or d.size)),
            float(len(pe.overlay) > 0),
        ]
    )


def _header_info(pe: PeFile) -> np.ndarray:
    coff, opt = pe.coff, pe.optional
    vals = [
        coff.machine / 65536.0,
        float(coff.number_of_sections),
        math.log1p(coff.timestamp),
    ]
    vals += [float((coff.characteristics >> i) & 1) for i in range(16)]
    vals += [
        float(opt.is_pe32_plus),
        float(opt.major_linker_version),
        float(opt.minor_linker_version),
        math.log1p(opt.size_of_code),
        math.log1p(opt.size_of_initialized_data),
        math.log1p(opt.size_of_uninitialized_data),
        math.log1p(opt.entry_point),
        math.log1p(opt.image_base),
        math.log2(opt.section_alignment) if opt.section_alignment else 0.0,
        math.log2(opt.file_alignment) if opt.file_alignment else 0.0,
        float(opt.major_os_version),
        float(opt.minor_os_version),
        float(opt.major_image_version),
        float(opt.minor_image_version),
        float(opt.major_subsystem_version),
        float(opt.minor_subsystem_version),
        math.log1p(opt.size_of_image),
        math.log1p(opt.size_of_headers),
        math.log1p(opt.checksum),
        float(opt.subsystem),
        float(bin(opt.dll_characteristics).count("1")),
        math.log1p(opt.size_of_stack_reserve),
        math.log1p(opt.size_of_stack_commit),
        math.log1p(opt.size_of_heap_reserve),
        math.log1p(opt.size_of_heap_commit),
        float(opt.loader_flags),
        float(opt.number_of_rva_and_sizes),
        float(sum(1 for d in opt.data_directories if d.rva or d.size)),
    ]
    out = np.array(vals)
    assert out.shape == (47,)
    return out


def _string_stats(raw: bytes) -> np.ndarray:
    out = np.zeros(104)
    strings = _PRINTABLE_RE.findall(raw)
    if strings:
        total = sum(len(s) for s in strings)
        joined = np.frombuffer(b"".join(strings), dtype=np.uint8)
        counts = np.bincount(joined - 0x20, minlength=96).astype(float)
        dist = counts / total
        p = dist[dist > 0]
        out[0] = math.log1p(len(strings))
        out[1] = total / len(strings)
        out[2:98] = dist
        out[98] = math.log1p(total)
        out[99] = float(-(p * np.log2(p)).sum())
    out[100] = raw.count(b"C:\\") + raw.count(b"c:\\")
    out[101] = raw.count(b"http")
    out[102] = raw.count(b"HKEY_")
    out[103] = raw.count(b"MZ")
    return out


def extract_state_features(raw: bytes) -> np.ndarray:
    """Deterministic 2,350-wide state vector for the mutation agent.

    Byte-level blocks (histograms, strings) are always computed; if the
    file does not parse as a PE the structural blocks stay zero.
    """
    arr = np.frombuffer(raw, dtype=np.uint8)
    out = np.zeros(STATE_WIDTH)
    out[0:256] = _byte_histogram(arr)
    out[256:512] = _entropy_histogram(arr)
    out[2246:2350] = _string_stats(raw)
    try:
        pe = pe_codec.parse_pe(raw)
    except pe_codec.PeError:
        return out
    pairs = pe_codec.read_imports(pe, raw)
    exports = pe_codec.read_export_names(pe, raw)
    out[512:767] = _hashed_sections(pe)
    out[767:2047] = _hashed_imports(pairs)
    out[2047:2175] = _hashed_exports(exports)
    out[2175:2199] = _general_info(pe, raw, pairs, exports)
    out[2199:2246] = _header_info(pe)
    return out
