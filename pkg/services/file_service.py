import logging
import os
from contextlib import contextmanager
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from config import CSV_FLOAT_FORMAT, LOCK_FILENAME
from errors import IncompleteState, OutputLocked, ShapeMismatch
from models import AnsatzCoefficients, DomainGrid, FlowState

logger = logging.getLogger(__name__)

FIELD_NAMES = ("u", "v", "P")


class FileService:
    """Output directories: locking, per-line field CSVs, coefficient tables and key=value reports."""

    @contextmanager
    def locked(self, directory: str) -> Iterator[str]:
        """Hold `.gmol.lock` in directory for the duration of a run.

        A lock whose recorded pid no longer exists is left over from a killed
        run and is taken over.
        """
        os.makedirs(directory, exist_ok=True)
        lock_path = os.path.join(directory, LOCK_FILENAME)
        fd = self._acquire(lock_path)
        if fd is None:
            holder = self._holder(lock_path)
            if self._holder_alive(holder):
                raise OutputLocked(directory, holder)
            logger.warning("removing stale lock %s (%s)", lock_path, holder)
            try:
                os.remove(lock_path)
            except FileNotFoundError:
                pass
            fd = self._acquire(lock_path)
            if fd is None:
                raise OutputLocked(directory, self._holder(lock_path))
        try:
            os.write(fd, f"pid {os.getpid()}".encode())
        finally:
            os.close(fd)
        try:
            yield directory
        finally:
            if os.path.exists(lock_path):
                os.remove(lock_path)

    @staticmethod
    def _acquire(lock_path: str) -> Optional[int]:
        try:
            return os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            return None

    @staticmethod
    def _holder(lock_path: str) -> Optional[str]:
        try:
            with open(lock_path, encoding="utf-8") as f:
                return f.read().strip() or None
        except OSError:
            return None

    @staticmethod
    def _holder_alive(holder: Optional[str]) -> bool:
        """False only when the lock names a pid that is provably gone."""
        if not holder or not holder.startswith("pid "):
            return True
        try:
            pid = int(holder[4:])
        except ValueError:
            return True
        if pid <= 0:
            return True
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return False
        except PermissionError:
            pass  # exists, owned by another user
        return True

    def _write_csv(self, df: pd.DataFrame, path: str) -> None:
        df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")

    # Line fields

    def write_line(self, path: str, theta: np.ndarray, values: np.ndarray) -> None:
        self._write_csv(pd.DataFrame({"theta": theta, "value": values}), path)

    def read_line(self, path: str) -> Tuple[np.ndarray, np.ndarray]:
        df = pd.read_csv(path, float_precision="round_trip")
        if list(df.columns) != ["theta", "value"]:
            raise ShapeMismatch(f"'{path}' must have columns theta,value")
        return df["theta"].to_numpy(dtype=float), df["value"].to_numpy(dtype=float)

    def write_fields(self, state: FlowState, grid: DomainGrid, directory: str) -> List[str]:
        written = []
        for name in FIELD_NAMES:
            field = getattr(state, name)
            if field is None:
                continue
            for n in range(grid.n_lines + 1):
                path = os.path.join(directory, f"{name}_{n}.csv")
                self.write_line(path, grid.theta, field[n])
                written.append(path)
        logger.info("wrote %d line files to %s", len(written), directory)
        return written

    def read_fields(self, directory: str) -> Tuple[FlowState, np.ndarray]:
        """Read u_<n>, v_<n>, P_<n> back; the line count is the longest contiguous run from 0."""
        n_lines = 0
        while os.path.exists(os.path.join(directory, f"u_{n_lines + 1}.csv")):
            n_lines += 1
        if n_lines < 2:
            raise IncompleteState(f"'{directory}' holds no complete set of line files")

        arrays: Dict[str, Optional[np.ndarray]] = {}
        theta = None
        for name in FIELD_NAMES:
            rows = []
            for n in range(n_lines + 1):
                path = os.path.join(directory, f"{name}_{n}.csv")
                if not os.path.exists(path):
                    if name == "P" and n == 0:
                        break
                    raise IncompleteState(f"missing line file '{path}'")
                line_theta, values = self.read_line(path)
                if theta is None:
                    theta = line_theta
                elif line_theta.shape != theta.shape or not np.array_equal(line_theta, theta):
                    raise ShapeMismatch(f"'{path}' is sampled on a different theta grid")
                rows.append(values)
            arrays[name] = np.vstack(rows) if rows else None
        return FlowState(u=arrays["u"], v=arrays["v"], P=arrays["P"]), theta

    # Fit outputs

    def write_coefficients(self, coeffs: AnsatzCoefficients, names: Mapping[str, List[str]], directory: str) -> None:
        for key in ("a", "b", "c"):
            table = getattr(coeffs, key)
            df = pd.DataFrame(table, columns=names[key])
            df.insert(0, "line", np.arange(1, table.shape[0] + 1))
            self._write_csv(df, os.path.join(directory, f"coeff_{key}.csv"))

    def read_coefficients(self, directory: str) -> AnsatzCoefficients:
        tables = {}
        for key in ("a", "b", "c"):
            df = pd.read_csv(os.path.join(directory, f"coeff_{key}.csv"), float_precision="round_trip")
            tables[key] = df.drop(columns=["line"]).to_numpy(dtype=float)
        return AnsatzCoefficients(**tables)

    # Reports

    def write_report(self, path: str, entries: Mapping[str, object]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for key, value in entries.items():
                f.write(f"{key} = {self._format_value(value)}\n")
        logger.info("wrote report %s", path)

    def read_report(self, path: str) -> Dict[str, str]:
        entries = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if "=" in line:
                    key, value = line.split("=", 1)
                    entries[key.strip()] = value.strip()
        return entries

    @staticmethod
    def _format_value(value) -> str:
        if hasattr(value, "value"):  # enums
            value = value.value
        if isinstance(value, bool) or value is None:
            return str(value).lower()
        if isinstance(value, float):
            return CSV_FLOAT_FORMAT % value
        if isinstance(value, (list, tuple)):
            return ",".join(FileService._format_value(v) for v in value)
        return str(value)


# Global file service instance
file_service = FileService()
