import csv
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

from app.core.exceptions import OutputError
from app.models.experiment import RunManifest

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9e"


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float) or (hasattr(value, "dtype") and getattr(value.dtype, "kind", "") == "f"):
        return FLOAT_FORMAT % float(value)
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


class RunArtifacts:
    '''
    Tracks the files written by one run. Used as a context manager: when the run
    fails every file written so far is removed and the error propagates.
    '''

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.files: List[Path] = []

    def __enter__(self) -> "RunArtifacts":
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(f"cannot create output directory {self.out_dir}: {e}") from e
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            self.discard()
        return False

    def discard(self) -> None:
        for path in self.files:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                logger.warning(f"Could not remove partial file {path}")
        if self.files:
            logger.info(f"Removed {len(self.files)} partial file(s) from {self.out_dir}")
        self.files = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.path(name)
        self.files.append(path)
        try:
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_cell(v) for v in row])
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e}") from e
        logger.info(f"Wrote {path}")
        return path

    def write_json(self, name: str, text: str) -> Path:
        path = self.path(name)
        self.files.append(path)
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e}") from e
        return path

    def write_manifest(self, manifest: RunManifest, name: str = "manifest.json") -> Path:
        '''Write manifest.json after checking every listed artifact exists and is non-empty.'''
        for item in manifest.files:
            target = Path(item)
            if not target.is_file() or target.stat().st_size == 0:
                raise OutputError(f"manifest lists missing or empty file {target}")
        path = self.write_json(name, manifest.model_dump_json(indent=2))
        logger.info(f"Wrote {path}")
        return path

    def listed(self) -> List[str]:
        return [str(p) for p in self.files]
