"""
Result Table Writer

Comma-separated result tables with a single header row. Floats are
written with 17 significant digits so every value reads back exactly.
"""

from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import pandas as pd
import structlog

from grape_engine.core.propagation import PulseSequence
from grape_engine.strategies.optimizer import IterationRecord

log = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.17g"

ITERATIONS_FILE = "iterations.csv"
TIMINGS_FILE = "timings.csv"
WAVEFORM_FILE = "waveform.csv"
PROFILE_FILE = "profile.csv"

ProfileRow = Tuple[float, float]


class ResultWriter:
    """
    Writes run outputs into one directory.

    Args:
        out_dir: Output directory, created when missing
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _write(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self.written.append(path)
        log.debug("results.written", path=str(path), rows=len(frame))
        return path

    def write_iterations(self, records: Sequence[IterationRecord]) -> Path:
        """Deterministic iteration log: index, fidelity, grad_norm, step, evals."""
        frame = pd.DataFrame(
            {
                "index": pd.Series([r.iteration for r in records], dtype="int64"),
                "fidelity": pd.Series([r.fidelity for r in records], dtype="float64"),
                "grad_norm": pd.Series([r.grad_norm for r in records], dtype="float64"),
                "step": pd.Series([r.step for r in records], dtype="float64"),
                "evals": pd.Series([r.evals for r in records], dtype="int64"),
            }
        )
        return self._write(frame, ITERATIONS_FILE)

    def write_timings(self, records: Sequence[IterationRecord]) -> Path:
        frame = pd.DataFrame(
            {
                "index": pd.Series([r.iteration for r in records], dtype="int64"),
                "ms": pd.Series([r.wall_ms for r in records], dtype="float64"),
            }
        )
        return self._write(frame, TIMINGS_FILE)

    def write_waveform(self, pulse: PulseSequence, dt: float) -> Path:
        """One row per step: start time t, then cx, cy (Hz)."""
        amps = pulse.amplitudes
        columns = {"t": [n * dt for n in range(amps.shape[0])]}
        names = ["cx", "cy"] if amps.shape[1] == 2 else [f"c{k}" for k in range(amps.shape[1])]
        for k, name in enumerate(names):
            columns[name] = amps[:, k]
        return self._write(pd.DataFrame(columns, dtype="float64"), WAVEFORM_FILE)

    def write_profile(self, rows: Iterable[ProfileRow]) -> Path:
        rows = list(rows)
        frame = pd.DataFrame(
            {
                "offset_hz": pd.Series([r[0] for r in rows], dtype="float64"),
                "sz": pd.Series([r[1] for r in rows], dtype="float64"),
            }
        )
        return self._write(frame, PROFILE_FILE)


def read_table(path: Path) -> pd.DataFrame:
    """Read back a result table."""
    return pd.read_csv(path, float_precision="round_trip")
