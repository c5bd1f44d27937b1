"""Run Manifest Management

Every CLI command writes one manifest.json into its output directory:

<out>/
  ├── manifest.json      (command, version, effective config, seed, file hashes)
  ├── train_log.jsonl    (training only)
  └── ...                (datasets, checkpoints, reports, exports)

Manifests carry no wall-clock time, so rerunning a command with the same
inputs and seed reproduces the manifest byte for byte.
"""

import json
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from src import __version__

from .filestore import FileStore, WriteResult, hash_file

MANIFEST_NAME = "manifest.json"


class RunManager:
    """
    Owns an output directory and its manifest.

    Responsibilities:
    - Create the output directory
    - Write files through the FileStore and remember their hashes
    - Record input files with their hashes
    - Write and read manifest.json
    """

    def __init__(self, command: str, out_dir: Path, manifest_name: str = MANIFEST_NAME):
        """
        Args:
            command: CLI command name recorded in the manifest
            out_dir: Output directory of this command
            manifest_name: File name of the manifest inside out_dir
        """
        self.command = command
        self.run_dir = Path(out_dir)
        self.manifest_name = manifest_name
        self.manifest_path = self.run_dir / manifest_name
        self.store = FileStore(self.run_dir)
        self.inputs: list[dict[str, Any]] = []
        self.outputs: dict[str, dict[str, Any]] = {}

    def create_structure(self) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        return self.run_dir

    def add_input(self, path: Union[str, Path]) -> str:
        """Record an input file; returns its sha256"""
        digest = hash_file(Path(path))
        self.inputs.append({"path": str(path), "sha256": digest})
        return digest

    def record_output(self, result: WriteResult) -> None:
        """Record a file written elsewhere (e.g. by the FileStore of a module)"""
        path = Path(result["path"])
        try:
            relative = path.relative_to(self.run_dir)
        except ValueError:
            relative = path
        self.outputs[str(relative)] = {
            "path": str(relative),
            "sha256": result["sha256"],
            "size_bytes": result["size_bytes"],
        }

    def record_file(self, path: Union[str, Path]) -> None:
        """Record a file that was written without a WriteResult"""
        path = Path(path)
        self.record_output(
            WriteResult(
                path=path,
                sha256=hash_file(path),
                size_bytes=path.stat().st_size,
                wrote=True,
                reason="created",
            )
        )

    def record_volatile(self, path: Union[str, Path]) -> None:
        """Record a file whose bytes carry wall-clock fields; no hash is kept"""
        path = Path(path)
        try:
            relative = path.relative_to(self.run_dir)
        except ValueError:
            relative = path
        self.outputs[str(relative)] = {"path": str(relative), "sha256": None, "volatile": True}

    def write(self, relative_path: Union[str, Path], content: Union[str, bytes]) -> WriteResult:
        """Write a file under the run directory and record it"""
        result = self.store.safe_write(relative_path, content)
        self.record_output(result)
        return result

    def write_manifest(
        self,
        config: dict[str, Any],
        seed: Optional[int] = None,
        extra: Optional[dict[str, Any]] = None,
    ) -> WriteResult:
        """
        Write manifest.json.

        Args:
            config: Full effective configuration (defaults materialized)
            seed: Master seed of the command
            extra: Command-specific summary values
        """
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": seed,
            "config": config,
            "inputs": self.inputs,
            "outputs": [self.outputs[key] for key in sorted(self.outputs)],
        }
        if extra:
            manifest["summary"] = extra
        content = json.dumps(manifest, indent=2, sort_keys=False, default=str) + "\n"
        return self.store.safe_write(self.manifest_name, content)

    def read_manifest(self) -> Optional[dict]:
        """
        Read manifest.json if it exists.

        Returns:
            Manifest dict or None if not found
        """
        if not self.manifest_path.exists():
            return None

        with open(self.manifest_path, "r") as f:
            return json.load(f)


def create_run(
    command: str,
    out_dir: Path,
    inputs: Iterable[Path] = (),
    manifest_name: str = MANIFEST_NAME,
) -> RunManager:
    """
    Create an output directory and register its input files.

    Returns:
        RunManager for this command
    """
    manager = RunManager(command, out_dir, manifest_name=manifest_name)
    manager.create_structure()
    for path in inputs:
        manager.add_input(path)
    return manager
