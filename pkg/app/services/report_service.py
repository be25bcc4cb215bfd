import json
import logging
import os
from io import BytesIO
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app import __version__
from app.core.errors import ConfigurationError, DomainError
from app.models.run_models import RunSummary
from app.services.pareto import ParetoArchive

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
VERSION_TAG = f"v{__version__}"


class ReportService:
    """Writes and reads run artifacts: archives, generation logs, partitions and summaries."""

    def __init__(self, output_dir: str = "runs"):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

    @staticmethod
    def header(seed: int, manifest_hash: str) -> str:
        return f"# seed={seed}, version={VERSION_TAG}, manifest={manifest_hash}"

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    @staticmethod
    def archive_frame(archive: ParetoArchive) -> pd.DataFrame:
        if not archive.entries:
            return pd.DataFrame(columns=["crowding", "origin", "violation"])
        decisions = archive.decision_matrix()
        objectives = archive.objective_matrix()
        frame = pd.DataFrame({f"decision_{i}": decisions[:, i] for i in range(decisions.shape[1])})
        for j in range(objectives.shape[1]):
            frame[f"objective_{j}"] = objectives[:, j]
        frame["crowding"] = [entry.crowding for entry in archive.entries]
        frame["origin"] = [entry.origin.value for entry in archive.entries]
        frame["violation"] = [entry.violation for entry in archive.entries]
        return frame

    def write_csv(self, frame: pd.DataFrame, name: str, seed: int, manifest_hash: str) -> str:
        path = self.path(name)
        with open(path, "w", newline="") as f:
            f.write(self.header(seed, manifest_hash) + "\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def write_json(self, payload: Dict[str, Any], name: str, seed: int, manifest_hash: str) -> str:
        path = self.path(name)
        document = {"seed": seed, "version": VERSION_TAG, "manifest": manifest_hash, **payload}
        with open(path, "w") as f:
            json.dump(document, f, indent=2, sort_keys=True, allow_nan=True)
        return path

    def write_archive(self, index: int, archive: ParetoArchive, seed: int, manifest_hash: str) -> Dict[str, str]:
        frame = self.archive_frame(archive)
        csv_path = self.write_csv(frame, f"archive_{index}.csv", seed, manifest_hash)
        json_path = self.write_json(
            {"capacity": archive.capacity, "entries": frame.to_dict(orient="records")},
            f"archive_{index}.json",
            seed,
            manifest_hash,
        )
        logger.info(f"Archive {index} written: {len(archive)} entries -> {csv_path}")
        return {"csv": csv_path, "json": json_path}

    def write_generation_log(self, index: int, records: Sequence[Dict[str, Any]], seed: int, manifest_hash: str) -> str:
        return self.write_csv(pd.DataFrame(list(records)), f"generations_{index}.csv", seed, manifest_hash)

    def write_partition(self, index: int, partition: Dict[str, Any], seed: int, manifest_hash: str) -> str:
        return self.write_json({"partition": partition}, f"partition_{index}.json", seed, manifest_hash)

    def write_summary(self, summary: RunSummary) -> Dict[str, str]:
        json_path = self.path("summary.json")
        with open(json_path, "w") as f:
            f.write(summary.model_dump_json(indent=2))
        frame = pd.DataFrame([repeat.model_dump(exclude={"warnings"}) for repeat in summary.repeats])
        csv_path = self.write_csv(frame, "summary.csv", summary.repeats[0].seed if summary.repeats else 0, summary.manifest_hash)
        return {"json": json_path, "csv": csv_path}

    def get_report(self) -> Dict[str, Any]:
        path = self.path("summary.json")
        if not os.path.exists(path):
            return {"success": False, "error": f"No summary in {self.output_dir}"}
        with open(path, "r") as f:
            summary = json.load(f)
        return {"success": True, "summary": summary}

    def read_archive(self, index: int) -> List[Dict[str, Any]]:
        path = self.path(f"archive_{index}.csv")
        if not os.path.exists(path):
            return []
        return pd.read_csv(path, comment="#").to_dict(orient="records")

    def download_archive(self, index: int, format: str = "csv") -> Optional[BytesIO]:
        if format not in ("csv", "json"):
            logger.error(f"Unknown format: {format}")
            return None
        path = self.path(f"archive_{index}.{format}")
        if not os.path.exists(path):
            logger.error(f"Archive file not found: {path}")
            return None
        with open(path, "rb") as f:
            data = BytesIO(f.read())
        data.seek(0)
        return data


def read_front(path: str) -> np.ndarray:
    """Objective matrix from a front CSV: objective_* columns if present, else every column."""
    if not os.path.exists(path):
        raise ConfigurationError(f"Front file not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"Cannot parse front file {path}: {e}")
    columns = [c for c in frame.columns if str(c).startswith("objective_")] or list(frame.columns)
    try:
        values = frame[columns].to_numpy(dtype=float)
    except ValueError as e:
        raise DomainError(f"Front file {path} has non-numeric objective columns: {e}")
    if values.size == 0:
        raise DomainError(f"Front file {path} has no rows")
    return values
