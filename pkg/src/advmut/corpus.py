"""Synthetic labeled PE corpus generation and dataset splitting.

Files are structurally valid PE32+ images assembled from scratch. The
"malware" label is purely statistical: the two classes draw imports and
section names from overlapping pools with class-conditional inclusion
probabilities. No file contains executable behavior and nothing is ever
run.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pe_codec
from .pe_codec import (
    CoffHeader,
    DataDirectory,
    OptionalHeader,
    PeFile,
    Section,
    align_up,
)


class InvalidConfig(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


# Import pools. Entries are "Function:dll" with the dll lowercased; the
# common pool appears in both classes, the class pools lean one way with a
# smaller cross-class bleed probability.
COMMON_IMPORTS = (
    "GetModuleHandleA:kernel32.dll",
    "GetProcAddress:kernel32.dll",
    "ExitProcess:kernel32.dll",
    "CloseHandle:kernel32.dll",
    "ReadFile:kernel32.dll",
    "WriteFile:kernel32.dll",
    "CreateFileA:kernel32.dll",
    "GetLastError:kernel32.dll",
    "HeapAlloc:kernel32.dll",
    "HeapFree:kernel32.dll",
    "GetCommandLineA:kernel32.dll",
    "GetStartupInfoA:kernel32.dll",
    "VirtualQuery:kernel32.dll",
    "LoadLibraryA:kernel32.dll",
    "FreeLibrary:kernel32.dll",
    "Sleep:kernel32.dll",
    "GetTickCount:kernel32.dll",
    "lstrlenA:kernel32.dll",
    "MultiByteToWideChar:kernel32.dll",
    "WideCharToMultiByte:kernel32.dll",
    "memset:msvcrt.dll",
    "memcpy:msvcrt.dll",
    "malloc:msvcrt.dll",
    "free:msvcrt.dll",
    "printf:msvcrt.dll",
    "strlen:msvcrt.dll",
    "fopen:msvcrt.dll",
    "fclose:msvcrt.dll",
    "exit:msvcrt.dll",
    "atoi:msvcrt.dll",
)

BENIGN_IMPORTS = (
    "GetStdHandle:kernel32.dll",
    "SetConsoleTextAttribute:kernel32.dll",
    "GetConsoleScreenBufferInfo:kernel32.dll",
    "GetLocalTime:kernel32.dll",
    "GetSystemTime:kernel32.dll",
    "GetUserDefaultLCID:kernel32.dll",
    "FormatMessageA:kernel32.dll",
    "GetVersionExA:kernel32.dll",
    "GetCurrentDirectoryA:kernel32.dll",
    "SetCurrentDirectoryA:kernel32.dll",
    "FindFirstFileA:kernel32.dll",
    "FindNextFileA:kernel32.dll",
    "GetFileAttributesA:kernel32.dll",
    "CompareStringA:kernel32.dll",
    "GetEnvironmentStringsA:kernel32.dll",
    "GetComputerNameA:kernel32.dll",
    "GetDiskFreeSpaceA:kernel32.dll",
    "GetDriveTypeA:kernel32.dll",
    "GetTempPathA:kernel32.dll",
    "GetWindowsDirectoryA:kernel32.dll",
    "GlobalMemoryStatusEx:kernel32.dll",
    "QueryPerformanceCounter:kernel32.dll",
    "QueryPerformanceFrequency:kernel32.dll",
    "SetEndOfFile:kernel32.dll",
    "FlushFileBuffers:kernel32.dll",
    "MessageBoxA:user32.dll",
    "LoadIconA:user32.dll",
    "LoadCursorA:user32.dll",
    "RegisterClassExA:user32.dll",
    "CreateWindowExA:user32.dll",
    "ShowWindow:user32.dll",
    "UpdateWindow:user32.dll",
    "GetMessageA:user32.dll",
    "TranslateMessage:user32.dll",
    "DispatchMessageA:user32.dll",
    "DefWindowProcA:user32.dll",
    "PostQuitMessage:user32.dll",
    "SendMessageA:user32.dll",
    "SetWindowTextA:user32.dll",
    "GetDC:user32.dll",
    "ReleaseDC:user32.dll",
    "GetClientRect:user32.dll",
    "InvalidateRect:user32.dll",
    "BeginPaint:user32.dll",
    "EndPaint:user32.dll",
    "TextOutA:gdi32.dll",
    "SelectObject:gdi32.dll",
    "CreateFontA:gdi32.dll",
    "DeleteObject:gdi32.dll",
    "BitBlt:gdi32.dll",
    "CreateCompatibleDC:gdi32.dll",
    "CreateSolidBrush:gdi32.dll",
    "CoInitialize:ole32.dll",
    "CoUninitialize:ole32.dll",
    "CoCreateInstance:ole32.dll",
    "SHGetFolderPathA:shell32.dll",
    "ShellExecuteA:shell32.dll",
    "CommandLineToArgvW:shell32.dll",
    "PrintDlgA:comdlg32.dll",
    "GetOpenFileNameA:comdlg32.dll",
    "GetSaveFileNameA:comdlg32.dll",
    "ChooseColorA:comdlg32.dll",
    "InitCommonControls:comctl32.dll",
    "ImageList_Create:comctl32.dll",
    "timeGetTime:winmm.dll",
    "PlaySoundA:winmm.dll",
)

MALWARE_IMPORTS = (
    "VirtualAlloc:kernel32.dll",
    "VirtualAllocEx:kernel32.dll",
    "VirtualProtect:kernel32.dll",
    "WriteProcessMemory:kernel32.dll",
    "ReadProcessMemory:kernel32.dll",
    "CreateRemoteThread:kernel32.dll",
    "OpenProcess:kernel32.dll",
    "CreateToolhelp32Snapshot:kernel32.dll",
    "Process32First:kernel32.dll",
    "Process32Next:kernel32.dll",
    "CreateMutexA:kernel32.dll",
    "SetFileAttributesA:kernel32.dll",
    "CopyFileA:kernel32.dll",
    "MoveFileExA:kernel32.dll",
    "DeleteFileA:kernel32.dll",
    "WinExec:kernel32.dll",
    "CreateProcessA:kernel32.dll",
    "TerminateProcess:kernel32.dll",
    "IsDebuggerPresent:kernel32.dll",
    "GetAsyncKeyState:user32.dll",
    "SetWindowsHookExA:user32.dll",
    "keybd_event:user32.dll",
    "FindWindowA:user32.dll",
    "RegOpenKeyExA:advapi32.dll",
    "RegSetValueExA:advapi32.dll",
    "RegCreateKeyExA:advapi32.dll",
    "RegDeleteValueA:advapi32.dll",
    "AdjustTokenPrivileges:advapi32.dll",
    "OpenProcessToken:advapi32.dll",
    "CryptEncrypt:advapi32.dll",
    "CryptAcquireContextA:advapi32.dll",
    "CryptGenKey:advapi32.dll",
    "InternetOpenA:wininet.dll",
    "InternetOpenUrlA:wininet.dll",
    "InternetReadFile:wininet.dll",
    "InternetConnectA:wininet.dll",
    "HttpSendRequestA:wininet.dll",
    "URLDownloadToFileA:urlmon.dll",
    "socket:ws2_32.dll",
    "connect:ws2_32.dll",
    "send:ws2_32.dll",
    "recv:ws2_32.dll",
    "gethostbyname:ws2_32.dll",
    "WSAStartup:ws2_32.dll",
)

BENIGN_SECTIONS = (".rsrc", ".reloc", ".pdata", ".gfids", ".didat", ".00cfg")
MALWARE_SECTIONS = (".vmp0", ".vmp1", ".upx0", ".upx1", ".enc0", ".crypt", ".pack0", ".adata")

BASE_SECTIONS = (".text", ".data", ".rdata")

FILE_ALIGNMENT = 0x200
SECTION_ALIGNMENT = 0x1000
E_LFANEW = 0x80
SIZE_OF_HEADERS = 0x400  # leaves slack for roughly 15 appended section headers


@dataclass(frozen=True)
class CorpusConfig:
    """Class separation lives in the inclusion probabilities.

    The benign pool is the discriminative one (present in benign files,
    mostly absent from malware); the malware pool is deliberately bled
    into both classes at similar rates so that detectors key on missing
    benign features rather than on malware-marker presence. That mirrors
    the additive threat model: mutations can add features, never remove
    imports.
    """

    n_benign: int = 400
    n_malware: int = 400
    seed: int = 0
    sections_extra_max: int = 4
    section_bytes_min: int = 512
    section_bytes_max: int = 4096
    p_common: float = 0.5
    p_benign_in_benign: float = 0.6
    p_benign_in_malware: float = 0.15
    p_malware_in_malware: float = 0.35
    p_malware_in_benign: float = 0.22
    p_section_class: float = 0.6
    p_section_cross: float = 0.10
    cert_prob: float = 0.4
    debug_prob: float = 0.5
    common_imports: tuple[str, ...] = COMMON_IMPORTS
    benign_imports: tuple[str, ...] = BENIGN_IMPORTS
    malware_imports: tuple[str, ...] = MALWARE_IMPORTS
    benign_sections: tuple[str, ...] = BENIGN_SECTIONS
    malware_sections: tuple[str, ...] = MALWARE_SECTIONS

    def validate(self) -> None:
        if self.n_benign < 0 or self.n_malware < 0:
            raise InvalidConfig("negative corpus size")
        probs = (
            self.p_common,
            self.p_benign_in_benign,
            self.p_benign_in_malware,
            self.p_malware_in_malware,
            self.p_malware_in_benign,
            self.p_section_class,
            self.p_section_cross,
            self.cert_prob,
            self.debug_prob,
        )
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"probability {p} outside [0, 1]")
        if not (self.common_imports and self.benign_imports and self.malware_imports):
            raise InvalidConfig("import pools must be non-empty")
        if self.section_bytes_min < 16 or self.section_bytes_max < self.section_bytes_min:
            raise InvalidConfig("bad section byte range")


def _split_import(entry: str) -> tuple[str, str]:
    fn, _, dll = entry.partition(":")
    return fn, dll


def _group_dlls(entries: list[str]) -> list[tuple[str, list[str]]]:
    by_dll: dict[str, list[str]] = {}
    for e in entries:
        fn, dll = _split_import(e)
        by_dll.setdefault(dll, []).append(fn)
    return [(dll, sorted(fns)) for dll, fns in sorted(by_dll.items())]


def generate_minimal_pe(
    seed: int = 0,
    imports: list[str] | None = None,
    extra_sections: list[str] | None = None,
    section_bytes: tuple[int, int] = (512, 2048),
    with_debug: bool = False,
    with_certificate: bool = False,
    timestamp: int = 0x5F000000,
) -> bytes:
    """Assemble one structurally valid PE32+ image.

    Sections: .text (random payload), .data (random payload), .rdata
    (import tables, optional debug directory), then any extra named
    sections. The header region is padded to SIZE_OF_HEADERS so later
    mutations can grow the section table in place.
    """
    rng = np.random.default_rng(seed)
    imports = list(imports) if imports else ["ReadFile:kernel32.dll"]
    extra_sections = list(extra_sections or [])

    def payload() -> bytes:
        n = int(rng.integers(section_bytes[0], section_bytes[1] + 1))
        return rng.integers(0, 256, n, dtype=np.uint8).tobytes()

    names = list(BASE_SECTIONS) + extra_sections
    datas = {name: payload() for name in names}

    # .rdata gets rebuilt around the import block below.
    n_sections = len(names)
    table_off = E_LFANEW + 4 + pe_codec.COFF_HEADER_SIZE + 240
    table_end = table_off + pe_codec.SECTION_HEADER_SIZE * n_sections
    if table_end > SIZE_OF_HEADERS:
        raise InvalidConfig("too many sections for the reserved header area")

    # Virtual layout, one aligned region per section.
    rvas = {}
    rva = SECTION_ALIGNMENT
    for name in names:
        rvas[name] = rva
        rva = align_up(rva + max(len(datas[name]), 1), SECTION_ALIGNMENT)

    rdata_rva = rvas[".rdata"]
    import_blob, import_dir_size = pe_codec.build_import_block(
        _group_dlls(imports), rdata_rva, pe32_plus=True
    )

    debug_dir = DataDirectory(0, 0)
    rdata = bytearray(import_blob)
    if with_debug:
        # One debug directory entry pointing at a small trailing blob.
        entry_off = len(rdata)
        codeview = b"RSDS" + bytes(rng.integers(0, 256, 16, dtype=np.uint8)) + struct.pack("<I", 1) + b"app.pdb\x00"
        blob_off = entry_off + pe_codec.DEBUG_ENTRY_SIZE
        rdata += struct.pack(
            "<IIHHIIII",
            0,
            timestamp,
            0,
            0,
            2,  # IMAGE_DEBUG_TYPE_CODEVIEW
            len(codeview),
            rdata_rva + blob_off,
            0,  # pointer_to_raw_data patched after layout is final
        )
        rdata += codeview
        debug_dir = DataDirectory(rdata_rva + entry_off, pe_codec.DEBUG_ENTRY_SIZE)
    rdata += datas[".rdata"]
    datas[".rdata"] = bytes(rdata)

    # Recompute virtual layout now that .rdata has its final size.
    rva = SECTION_ALIGNMENT
    for name in names:
        rvas[name] = rva
        rva = align_up(rva + max(len(datas[name]), 1), SECTION_ALIGNMENT)
    size_of_image = rva
    if rvas[".rdata"] != rdata_rva:
        raise AssertionError("rdata rva moved between layout passes")

    # File layout.
    sections = []
    offset = SIZE_OF_HEADERS
    for name in names:
        data = datas[name]
        raw_size = align_up(len(data), FILE_ALIGNMENT)
        padded = data + b"\x00" * (raw_size - len(data))
        if name == ".text":
            characteristics = pe_codec.SCN_CNT_CODE | pe_codec.SCN_MEM_EXECUTE | pe_codec.SCN_MEM_READ
        elif name == ".data":
            characteristics = pe_codec.SCN_CNT_INITIALIZED_DATA | pe_codec.SCN_MEM_READ | pe_codec.SCN_MEM_WRITE
        else:
            characteristics = pe_codec.SCN_CNT_INITIALIZED_DATA | pe_codec.SCN_MEM_READ
        sections.append(
            Section(
                name=name.encode("ascii")[:8].ljust(8, b"\x00"),
                virtual_size=len(data),
                virtual_address=rvas[name],
                raw_size=raw_size,
                raw_offset=offset,
                pointer_to_relocations=0,
                pointer_to_line_numbers=0,
                number_of_relocations=0,
                number_of_line_numbers=0,
                characteristics=characteristics,
                data=padded,
                gap_before=b"",
            )
        )
        offset += raw_size

    # Patch the debug entry's file pointer now that .rdata has an offset.
    if with_debug:
        rdata_section = sections[names.index(".rdata")]
        entry_off = debug_dir.rva - rdata_rva
        blob_rva = struct.unpack_from("<I", rdata_section.data, entry_off + 20)[0]
        data = bytearray(rdata_section.data)
        struct.pack_into("<I", data, entry_off + 24, rdata_section.raw_offset + (blob_rva - rdata_rva))
        sections[names.index(".rdata")] = replace(rdata_section, data=bytes(data))

    overlay = b""
    cert_dir = DataDirectory(0, 0)
    if with_certificate:
        cert_data = bytes(rng.integers(0, 256, int(rng.integers(64, 256)), dtype=np.uint8))
        blob = struct.pack("<IHH", 8 + len(cert_data), 0x0200, 0x0002) + cert_data
        blob += b"\x00" * ((8 - len(blob) % 8) % 8)
        cert_dir = DataDirectory(offset, len(blob))  # file offset, not an RVA
        overlay = blob

    directories = [DataDirectory(0, 0)] * 16
    directories[pe_codec.DIR_IMPORT] = DataDirectory(rdata_rva, import_dir_size)
    directories[pe_codec.DIR_SECURITY] = cert_dir
    directories[pe_codec.DIR_DEBUG] = debug_dir

    optional = OptionalHeader(
        magic=pe_codec.PE32PLUS_MAGIC,
        major_linker_version=14,
        minor_linker_version=0,
        size_of_code=sections[0].raw_size,
        size_of_initialized_data=sum(s.raw_size for s in sections[1:]),
        size_of_uninitialized_data=0,
        entry_point=rvas[".text"] + 0x10,
        base_of_code=rvas[".text"],
        base_of_data=0,
        image_base=0x140000000,
        section_alignment=SECTION_ALIGNMENT,
        file_alignment=FILE_ALIGNMENT,
        major_os_version=6,
        minor_os_version=0,
        major_image_version=1,
        minor_image_version=0,
        major_subsystem_version=6,
        minor_subsystem_version=0,
        win32_version=0,
        size_of_image=size_of_image,
        size_of_headers=SIZE_OF_HEADERS,
        checksum=0,
        subsystem=3,  # console
        dll_characteristics=0x8160,
        size_of_stack_reserve=0x100000,
        size_of_stack_commit=0x1000,
        size_of_heap_reserve=0x100000,
        size_of_heap_commit=0x1000,
        loader_flags=0,
        number_of_rva_and_sizes=16,
        data_directories=tuple(directories),
        trailing=b"",
    )

    coff = CoffHeader(
        machine=0x8664,
        number_of_sections=n_sections,
        timestamp=timestamp,
        pointer_to_symbol_table=0,
        number_of_symbols=0,
        size_of_optional_header=240,
        characteristics=0x0022,  # EXECUTABLE_IMAGE | LARGE_ADDRESS_AWARE
    )

    pre_header = bytearray(E_LFANEW)
    pre_header[0:2] = pe_codec.MZ_MAGIC
    struct.pack_into("<H", pre_header, 0x02, 0x90)
    struct.pack_into("<H", pre_header, 0x04, 0x03)
    struct.pack_into("<H", pre_header, 0x08, 0x04)
    struct.pack_into("<H", pre_header, 0x18, 0x40)
    struct.pack_into("<I", pre_header, 0x3C, E_LFANEW)
    stub_text = b"This program cannot be run in DOS mode.\r\r\n$"
    pre_header[0x4E:0x4E + len(stub_text)] = stub_text

    # Header gap: the first section's gap_before covers the padding between
    # the section table and SIZE_OF_HEADERS.
    sections[0] = replace(sections[0], gap_before=b"\x00" * (SIZE_OF_HEADERS - table_end))

    pe = PeFile(
        pre_header=bytes(pre_header),
        coff=coff,
        optional=optional,
        sections=tuple(sections),
        overlay=overlay,
    )
    raw = pe_codec.write_pe(pe)

    # Stamp the correct checksum; the field itself is excluded from the sum.
    checksum = pe_codec.compute_checksum(raw)
    out = bytearray(raw)
    struct.pack_into("<I", out, pe_codec.checksum_field_offset(raw), checksum)
    return bytes(out)


def _sample_pool(rng: np.random.Generator, pool: tuple[str, ...], p: float) -> list[str]:
    mask = rng.random(len(pool)) < p
    return [name for name, hit in zip(pool, mask) if hit]


def generate_corpus(config: CorpusConfig) -> list[tuple[bytes, int]]:
    """Generate (pe_bytes, label) pairs; label 1 = malware, 0 = benign."""
    config.validate()
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_benign + config.n_malware)
    out: list[tuple[bytes, int]] = []
    for i, ss in enumerate(seeds):
        label = 0 if i < config.n_benign else 1
        rng = np.random.default_rng(ss)
        if label == 0:
            benign_part = _sample_pool(rng, config.benign_imports, config.p_benign_in_benign)
            malware_part = _sample_pool(rng, config.malware_imports, config.p_malware_in_benign)
            class_sections = _sample_pool(rng, config.benign_sections, config.p_section_class)
            cross_sections = _sample_pool(rng, config.malware_sections, config.p_section_cross)
        else:
            benign_part = _sample_pool(rng, config.benign_imports, config.p_benign_in_malware)
            malware_part = _sample_pool(rng, config.malware_imports, config.p_malware_in_malware)
            class_sections = _sample_pool(rng, config.malware_sections, config.p_section_class)
            cross_sections = _sample_pool(rng, config.benign_sections, config.p_section_cross)
        imports = _sample_pool(rng, config.common_imports, config.p_common) + benign_part + malware_part
        if not imports:
            imports = [config.common_imports[0]]
        extra = class_sections + cross_sections
        if len(extra) > config.sections_extra_max:
            picks = rng.choice(len(extra), config.sections_extra_max, replace=False)
            extra = [extra[j] for j in sorted(picks)]
        # log-uniform per-file size scale keeps file sizes spread over an
        # order of magnitude, so size growth from mutations stays in range
        size_hi = int(
            np.exp(
                rng.uniform(
                    np.log(config.section_bytes_min * 2),
                    np.log(config.section_bytes_max * 4),
                )
            )
        )
        raw = generate_minimal_pe(
            seed=int(rng.integers(0, 2**31)),
            imports=imports,
            extra_sections=extra,
            section_bytes=(config.section_bytes_min, max(size_hi, config.section_bytes_min + 16)),
            with_debug=bool(rng.random() < config.debug_prob),
            with_certificate=bool(rng.random() < config.cert_prob),
            timestamp=int(rng.integers(0x40000000, 0x60000000)),
        )
        out.append((raw, label))
    return out


@dataclass(frozen=True)
class SplitPlan:
    """Per-label partition ratios; each label's ratios must sum to 1."""

    benign: dict[str, float] = field(
        default_factory=lambda: {"det_train": 0.8, "det_test": 0.2}
    )
    malware: dict[str, float] = field(
        default_factory=lambda: {
            "det_train": 0.5,
            "det_test": 0.15,
            "gan_train": 0.15,
            "attack": 0.2,
        }
    )

    def validate(self) -> None:
        for label, ratios in (("benign", self.benign), ("malware", self.malware)):
            if abs(sum(ratios.values()) - 1.0) > 1e-9:
                raise InvalidConfig(f"{label} ratios sum to {sum(ratios.values())}, not 1")
            if any(r < 0 for r in ratios.values()):
                raise InvalidConfig(f"{label} ratios must be non-negative")


def split(
    corpus: list[tuple[bytes, int]], plan: SplitPlan, seed: int
) -> dict[str, list[tuple[bytes, int]]]:
    """Stratified shuffled split into the plan's named partitions.

    Partition names are prefixed with the label pool ("benign_det_train",
    "malware_attack", ...); partitions are pairwise disjoint and cover the
    corpus.
    """
    plan.validate()
    rng = np.random.default_rng(seed)
    parts: dict[str, list[tuple[bytes, int]]] = {}
    for label, label_name, ratios in (
        (0, "benign", plan.benign),
        (1, "malware", plan.malware),
    ):
        pool = [item for item in corpus if item[1] == label]
        if ratios and not pool:
            raise InsufficientSamples(f"no {label_name} samples to split")
        order = rng.permutation(len(pool))
        counts = {}
        total = 0
        names = list(ratios)
        for name in names[:-1]:
            counts[name] = int(round(ratios[name] * len(pool)))
            total += counts[name]
        counts[names[-1]] = len(pool) - total
        if any(c < 0 for c in counts.values()):
            raise InsufficientSamples(f"{label_name} pool too small for the plan")
        cursor = 0
        for name in names:
            take = order[cursor:cursor + counts[name]]
            parts[f"{label_name}_{name}"] = [pool[j] for j in take]
            cursor += counts[name]
    return parts


def write_corpus_dir(corpus: list[tuple[bytes, int]], path: Path, seed: int) -> None:
    """Persist as benign/*.bin, malware/*.bin plus manifest.csv."""
    path = Path(path)
    (path / "benign").mkdir(parents=True, exist_ok=True)
    (path / "malware").mkdir(parents=True, exist_ok=True)
    rows = []
    counters = {0: 0, 1: 0}
    for raw, label in corpus:
        sub = "malware" if label else "benign"
        name = f"{sub}/{counters[label]:05d}.bin"
        counters[label] += 1
        (path / name).write_bytes(raw)
        rows.append((name, label, seed))
    with open(path / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "seed"])
        writer.writerows(rows)


def read_corpus_dir(path: Path) -> list[tuple[bytes, int]]:
    path = Path(path)
    out = []
    with open(path / "manifest.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(((path / row["path"]).read_bytes(), int(row["label"])))
    return out
