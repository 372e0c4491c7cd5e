"""Rewriting-experiment orchestration.

Runs (binary x tool x task) jobs in isolated working directories, checks
the IR and EXE checkpoints, applies the functional tests, and meters wall
time plus the peak resident set of each spawned process tree via the
kernel's child accounting (wait4 rusage, kbytes) -- no sampling involved.

Checkpoints are ordered: a run only reaches EXE if the IR checkpoint
passed (or does not apply), and only an EXE-passing run gets a functional
test. The NOP functional check is differential: the rewritten binary must
terminate normally under the same invocation as the original and exit with
the same code.
"""

from __future__ import annotations

import csv
import glob as globlib
import io
import json
import os
import shlex
import signal
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

from .dtree import Task
from .elf import ELF_MAGIC
from .errors import SpawnError, WorkdirError

DEFAULT_NULL_INVOCATION = ("--help",)
DEFAULT_TIMEOUT_S = 300.0

COMPILERS = ("clang", "gcc", "icx", "ollvm")
OPT_FLAGS = ("O0", "O1", "O2", "O3", "Os", "Ofast")
OLLVM_FLAGS = ("fla", "sub", "bcf")


class Relocation(Enum):
    POSITION_INDEPENDENT = "pie"
    POSITION_DEPENDENT = "nopie"


class Symbols(Enum):
    PRESENT = "present"
    STRIPPED = "stripped"


class TriState(Enum):
    """yes / no / na; na reads "not applicable" for the IR checkpoint and
    "not run" for functional tests."""

    YES = "yes"
    NO = "no"
    NA = "na"


@dataclass(frozen=True)
class VariantConfig:
    program: str
    compiler: str
    flags: str
    relocation: Relocation
    symbols: Symbols
    os_tag: str

    def __post_init__(self):
        if self.compiler not in COMPILERS:
            raise ValueError(f"unknown compiler {self.compiler!r}")
        allowed = OLLVM_FLAGS if self.compiler == "ollvm" else OPT_FLAGS
        if self.flags not in allowed:
            raise ValueError(
                f"flags {self.flags!r} invalid for compiler {self.compiler!r}"
            )


@dataclass(frozen=True)
class ToolAdapter:
    tool_name: str
    emits_ir: bool
    nop_command: str
    afl_command: str | None = None
    ir_artifact_glob: str | None = None

    def __post_init__(self):
        for label, tpl in (("nop_command", self.nop_command),
                           ("afl_command", self.afl_command)):
            if tpl is None:
                continue
            if "{input}" not in tpl or "{output}" not in tpl:
                raise ValueError(
                    f"{label} of {self.tool_name!r} must contain "
                    "{input} and {output} placeholders"
                )

    def command_for(self, task: Task) -> str | None:
        return self.nop_command if task is Task.NOP else self.afl_command


@dataclass(frozen=True)
class RunRecord:
    binary_id: str
    variant: VariantConfig | None
    tool_name: str
    task: Task
    ir_ok: TriState
    exe_ok: bool
    func_ok: TriState
    runtime_seconds: float
    memory_kbytes: int
    output_size_bytes: int | None = None
    annotation: str = ""

    def __post_init__(self):
        if self.runtime_seconds < 0 or self.memory_kbytes < 0:
            raise ValueError("resource fields must be non-negative")
        if self.func_ok is TriState.YES and not self.exe_ok:
            raise ValueError("func_ok=yes requires exe_ok")
        if self.exe_ok and self.ir_ok is TriState.NO:
            raise ValueError("exe_ok requires ir_ok in {yes, na}")


class FuncTest(NamedTuple):
    """Outcome of a functional test plus a short reason when it failed."""

    result: TriState
    annotation: str = ""


@dataclass(frozen=True)
class ManifestEntry:
    binary_id: str
    path: str
    variant: VariantConfig
    null_invocation: tuple[str, ...] | None = None


class _Metered(NamedTuple):
    exit_code: int
    runtime_seconds: float
    maxrss_kbytes: int
    timed_out: bool


def _substitute(template: str, mapping: dict[str, str]) -> list[str]:
    # split first so substituted paths with spaces stay one argv token
    argv = []
    for token in shlex.split(template):
        for key, value in mapping.items():
            token = token.replace(key, value)
        argv.append(token)
    if not argv:
        raise SpawnError(f"empty command template {template!r}")
    return argv


def _run_metered(
    argv: Sequence[str],
    cwd: str,
    timeout_s: float,
    stdout=None,
    stderr=None,
) -> _Metered:
    """Spawn argv in its own session, wait with rusage, kill the process
    group at timeout. maxrss is the kernel's high-water mark in kbytes for
    the child and everything it reaped."""
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=cwd,
            stdout=stdout if stdout is not None else subprocess.DEVNULL,
            stderr=stderr if stderr is not None else subprocess.DEVNULL,
            start_new_session=True,
        )
    except FileNotFoundError as e:
        raise SpawnError(f"command not found: {argv[0]!r}") from e
    except PermissionError as e:
        raise SpawnError(f"command not executable: {argv[0]!r}") from e

    timed_out = threading.Event()
    reaped = threading.Event()

    def on_timeout():
        if reaped.is_set():  # lost the race; never signal a recycled pid
            return
        timed_out.set()
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass

    timer = threading.Timer(timeout_s, on_timeout)
    timer.start()
    try:
        _, status, rusage = os.wait4(proc.pid, 0)
    finally:
        reaped.set()
        timer.cancel()
    proc.returncode = os.waitstatus_to_exitcode(status)
    runtime = time.monotonic() - start
    maxrss_kb = int(rusage.ru_maxrss)
    if os.uname().sysname == "Darwin":  # ru_maxrss is bytes there
        maxrss_kb //= 1024
    return _Metered(proc.returncode, runtime, maxrss_kb, timed_out.is_set())


def _is_elf(path: Path) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(4) == ELF_MAGIC
    except OSError:
        return False


def run_task(
    adapter: ToolAdapter,
    task: Task,
    input_path: str,
    workdir: str,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    *,
    binary_id: str | None = None,
    variant: VariantConfig | None = None,
) -> RunRecord:
    """Execute one rewriting task in an isolated working directory.

    The record's func_ok is always "na" here; functional tests belong to
    run_campaign (or can be applied separately) because they need the
    original binary and per-program invocations.
    """
    if binary_id is None:
        binary_id = Path(input_path).name
    ir_na = TriState.NA if not adapter.emits_ir else TriState.NO

    def failed(annotation: str) -> RunRecord:
        return RunRecord(
            binary_id=binary_id,
            variant=variant,
            tool_name=adapter.tool_name,
            task=task,
            ir_ok=ir_na,
            exe_ok=False,
            func_ok=TriState.NA,
            runtime_seconds=0.0,
            memory_kbytes=0,
            output_size_bytes=None,
            annotation=annotation,
        )

    template = adapter.command_for(task)
    if template is None:
        return failed("NoAflSupport")
    if not os.path.isfile(input_path):
        return failed(f"InputMissing: {input_path}")

    workdir = os.path.abspath(workdir)
    try:
        os.makedirs(workdir, exist_ok=True)
    except OSError as e:
        raise WorkdirError(f"cannot prepare workdir {workdir!r}: {e}") from e

    output = Path(workdir) / (Path(input_path).name + ".rewritten")
    argv = _substitute(
        template, {"{input}": os.path.abspath(input_path), "{output}": str(output)}
    )
    with open(Path(workdir) / "tool.log", "wb") as log:
        metered = _run_metered(argv, cwd=workdir, timeout_s=timeout_s,
                               stdout=log, stderr=log)

    notes = []
    if adapter.emits_ir:
        pattern = adapter.ir_artifact_glob
        matched = bool(
            pattern and globlib.glob(os.path.join(globlib.escape(workdir), pattern))
        )
        ir_ok = TriState.YES if matched else TriState.NO
    else:
        ir_ok = TriState.NA

    exe_ok = output.is_file() and _is_elf(output)
    if metered.timed_out:
        exe_ok = False
        notes.append("TimedOut")
    if exe_ok and ir_ok is TriState.NO:
        # ordered checkpoints: no EXE credit without the IR stage
        exe_ok = False
        notes.append("MissingIrArtifact")
    if metered.maxrss_kbytes == 0:
        notes.append("NoMemAccounting")

    return RunRecord(
        binary_id=binary_id,
        variant=variant,
        tool_name=adapter.tool_name,
        task=task,
        ir_ok=ir_ok,
        exe_ok=exe_ok,
        func_ok=TriState.NA,
        runtime_seconds=metered.runtime_seconds,
        memory_kbytes=metered.maxrss_kbytes,
        output_size_bytes=output.stat().st_size if output.is_file() else None,
        annotation="; ".join(notes),
    )


def task_output_path(workdir: str, input_path: str) -> Path:
    return Path(workdir) / (Path(input_path).name + ".rewritten")


def _run_plain(argv: Sequence[str], timeout_s: float) -> tuple[int | None, bool]:
    """(exit code or negative signal, timed_out); None when exec failed."""
    try:
        done = subprocess.run(
            argv,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            timeout=timeout_s,
        )
        return done.returncode, False
    except subprocess.TimeoutExpired:
        return None, True
    except FileNotFoundError as e:
        raise SpawnError(f"command not found: {argv[0]!r}") from e
    except OSError:
        return None, False  # e.g. ENOEXEC on a non-runnable image


def null_function_test(
    original: str,
    rewritten: str,
    invocation: Sequence[str] = DEFAULT_NULL_INVOCATION,
    timeout_s: float = 30.0,
) -> FuncTest:
    """Differential smoke test of a NOP-rewritten binary.

    Both binaries run with the identical invocation; pass means the
    rewritten process terminated normally (no signal, no timeout) with the
    same exit code as the original.
    """
    for p in (original, rewritten):
        if not (os.path.isfile(p) and os.access(p, os.X_OK)):
            raise ValueError(f"not an executable file: {p!r}")

    orig_rc, orig_to = _run_plain([os.path.abspath(original), *invocation], timeout_s)
    new_rc, new_to = _run_plain([os.path.abspath(rewritten), *invocation], timeout_s)

    if new_to:
        return FuncTest(TriState.NO, "TimedOut")
    if new_rc is None:
        return FuncTest(TriState.NO, "ExecFailed")
    if new_rc < 0:
        return FuncTest(TriState.NO, f"Signaled:{-new_rc}")
    if orig_to or orig_rc is None:
        return FuncTest(TriState.NO, "OriginalUnusable")
    if new_rc != orig_rc:
        return FuncTest(TriState.NO, f"ExitCodeMismatch:{new_rc}!={orig_rc}")
    return FuncTest(TriState.YES)


def afl_function_test(
    rewritten: str, driver_command: str, timeout_s: float = 30.0
) -> FuncTest:
    """Run the configured fuzzer driver against an instrumented binary;
    pass means the driver exits 0 within the timeout. The driver is fully
    pluggable -- tests ship stubs, production wires the real AFL++ one."""
    argv = _substitute(driver_command, {"{target}": os.path.abspath(rewritten)})
    rc, timed_out = _run_plain(argv, timeout_s)
    if timed_out:
        return FuncTest(TriState.NO, "TimedOut")
    if rc is None:
        return FuncTest(TriState.NO, "ExecFailed")
    if rc != 0:
        return FuncTest(TriState.NO, f"DriverExit:{rc}")
    return FuncTest(TriState.YES)


def run_campaign(
    manifest: Sequence[ManifestEntry],
    adapters: Sequence[ToolAdapter],
    tasks: Sequence[Task] = (Task.NOP, Task.AFL),
    parallelism: int = 1,
    *,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    afl_driver: str | None = None,
    workroot: str | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> list[RunRecord]:
    """Run the full (binary x adapter x task) cross product.

    Each job owns a private working directory; per-run failures land in the
    record's annotation and never abort the campaign. The returned list is
    sorted by (binary_id, tool, task) so the output is independent of the
    parallelism degree; on_record streams records in completion order.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    own_root = None
    if workroot is None:
        import tempfile

        own_root = tempfile.TemporaryDirectory(prefix="rweval-campaign-")
        workroot = own_root.name
    os.makedirs(workroot, exist_ok=True)

    emit_lock = threading.Lock()

    def job(entry: ManifestEntry, adapter: ToolAdapter, task: Task) -> RunRecord:
        workdir = os.path.join(
            workroot, f"{entry.binary_id}__{adapter.tool_name}__{task.value}"
        )
        try:
            record = run_task(
                adapter,
                task,
                entry.path,
                workdir,
                timeout_s,
                binary_id=entry.binary_id,
                variant=entry.variant,
            )
        except (SpawnError, WorkdirError) as e:
            record = RunRecord(
                binary_id=entry.binary_id,
                variant=entry.variant,
                tool_name=adapter.tool_name,
                task=task,
                ir_ok=TriState.NA if not adapter.emits_ir else TriState.NO,
                exe_ok=False,
                func_ok=TriState.NA,
                runtime_seconds=0.0,
                memory_kbytes=0,
                annotation=f"{type(e).__name__}: {e}",
            )
        if record.exe_ok:
            record = _apply_functional(record, entry, workdir, timeout_s, afl_driver)
        if on_record is not None:
            with emit_lock:
                on_record(record)
        return record

    jobs = [
        (entry, adapter, task)
        for entry in manifest
        for adapter in adapters
        for task in tasks
    ]
    try:
        if parallelism == 1:
            records = [job(*args) for args in jobs]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                records = list(pool.map(lambda args: job(*args), jobs))
    finally:
        if own_root is not None:
            own_root.cleanup()

    records.sort(key=lambda r: (r.binary_id, r.tool_name, r.task.value))
    return records


def _apply_functional(
    record: RunRecord,
    entry: ManifestEntry,
    workdir: str,
    timeout_s: float,
    afl_driver: str | None,
) -> RunRecord:
    output = str(task_output_path(workdir, entry.path))
    try:
        if record.task is Task.NOP:
            invocation = entry.null_invocation or DEFAULT_NULL_INVOCATION
            os.chmod(output, os.stat(output).st_mode | 0o111)
            outcome = null_function_test(entry.path, output, invocation, timeout_s)
        else:
            if afl_driver is None:
                return record
            outcome = afl_function_test(output, afl_driver, timeout_s)
    except (ValueError, SpawnError, OSError) as e:
        return replace(record, annotation=_join(record.annotation, f"FuncError: {e}"))
    return replace(
        record,
        func_ok=outcome.result,
        annotation=_join(record.annotation, outcome.annotation),
    )


def _join(*parts: str) -> str:
    return "; ".join(p for p in parts if p)


# --- manifest / adapter / results I/O --------------------------------------

RESULTS_COLUMNS = (
    "binary_id",
    "program",
    "compiler",
    "flags",
    "relocation",
    "symbols",
    "os",
    "tool",
    "task",
    "ir",
    "exe",
    "func",
    "runtime_s",
    "mem_kb",
    "out_size_bytes",
)


def load_manifest(path: str) -> list[ManifestEntry]:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError("manifest must be a JSON array")
    entries = []
    for i, obj in enumerate(raw):
        try:
            variant = VariantConfig(
                program=obj["program"],
                compiler=obj["compiler"],
                flags=obj["flags"],
                relocation=Relocation(obj["relocation"]),
                symbols=Symbols(obj["symbols"]),
                os_tag=obj["os"],
            )
            invocation = obj.get("null_invocation")
            entries.append(
                ManifestEntry(
                    binary_id=obj["id"],
                    path=obj["path"],
                    variant=variant,
                    null_invocation=tuple(invocation) if invocation else None,
                )
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ValueError(f"manifest entry {i}: {e}") from e
    ids = [e.binary_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest contains duplicate binary ids")
    return entries


def load_adapters(path: str) -> list[ToolAdapter]:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError("adapter config must be a JSON array")
    adapters = []
    for i, obj in enumerate(raw):
        try:
            adapters.append(
                ToolAdapter(
                    tool_name=obj["tool_name"],
                    emits_ir=bool(obj.get("emits_ir", False)),
                    nop_command=obj["nop_command"],
                    afl_command=obj.get("afl_command"),
                    ir_artifact_glob=obj.get("ir_artifact_glob"),
                )
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ValueError(f"adapter entry {i}: {e}") from e
    return adapters


def record_to_row(record: RunRecord) -> list[str]:
    v = record.variant
    return [
        record.binary_id,
        v.program if v else "",
        v.compiler if v else "",
        v.flags if v else "",
        v.relocation.value if v else "",
        v.symbols.value if v else "",
        v.os_tag if v else "",
        record.tool_name,
        record.task.value,
        record.ir_ok.value,
        "1" if record.exe_ok else "0",
        record.func_ok.value,
        f"{record.runtime_seconds:.6f}",
        str(record.memory_kbytes),
        "" if record.output_size_bytes is None else str(record.output_size_bytes),
    ]


def row_to_record(row: dict[str, str]) -> RunRecord:
    variant = None
    if row["program"]:
        variant = VariantConfig(
            program=row["program"],
            compiler=row["compiler"],
            flags=row["flags"],
            relocation=Relocation(row["relocation"]),
            symbols=Symbols(row["symbols"]),
            os_tag=row["os"],
        )
    out_size = row["out_size_bytes"]
    return RunRecord(
        binary_id=row["binary_id"],
        variant=variant,
        tool_name=row["tool"],
        task=Task(row["task"]),
        ir_ok=TriState(row["ir"]),
        exe_ok=row["exe"] == "1",
        func_ok=TriState(row["func"]),
        runtime_seconds=float(row["runtime_s"]),
        memory_kbytes=int(row["mem_kb"]),
        output_size_bytes=int(out_size) if out_size else None,
    )


def write_records_csv(records: Iterable[RunRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULTS_COLUMNS)
        for record in records:
            w.writerow(record_to_row(record))


def load_records_csv(path: str) -> list[RunRecord]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(RESULTS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results CSV missing columns {sorted(missing)}")
        return [row_to_record(row) for row in reader]


def records_csv_text(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_COLUMNS)
    for record in records:
        w.writerow(record_to_row(record))
    return buf.getvalue()
