"""File formats: CSV matrices, dataset manifests, dictionaries, codes.

Matrix files are plain UTF-8 CSV without header, one row per ambient
dimension entry, one column per vector, written at 17 significant digits
so a round trip is bit-stable. All writes go through a temp file plus
rename, so readers never observe a half-written file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ManifestError
from .geometry import GrassmannPoint
from .kernels import KernelDictionary, KernelSubspace, parse_kernel
from .coding import GrassmannDictionary, build_dictionary
from .validation import check_subspace

FLOAT_FMT = "%.17g"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [",".join(FLOAT_FMT % v for v in row) for row in matrix]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix(path: str | Path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: matrix contains non-finite entries")
    return arr


def save_subspace(path: str | Path, point: GrassmannPoint) -> None:
    save_matrix(path, point.basis)


def load_subspace(path: str | Path) -> GrassmannPoint:
    """Load a d x p basis, verifying orthonormality within 1e-6."""
    try:
        return check_subspace(load_matrix(path))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# flat run configuration


def read_config(path: str | Path) -> dict[str, str]:
    """Flat key = value file; a leading [section] header is optional."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    merged: dict[str, str] = {}
    for section in parser.sections():
        merged.update(parser.items(section))
    return merged


def config_hash(cfg: dict) -> str:
    canon = json.dumps({k: str(v) for k, v in sorted(cfg.items())}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# dataset manifests


@dataclass
class ManifestEntry:
    sample_id: str
    path: Path
    label: str
    split: str


@dataclass
class Manifest:
    root: Path
    entries: list[ManifestEntry]
    d: int | None = None
    center: bool = False
    scale: bool = False

    def subset(self, split: str | None) -> list[ManifestEntry]:
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a dataset manifest.

    Format::

        [global]
        d = 20          ; optional, checked against the files
        center = false  ; subtract the mean column at load
        scale = false   ; normalize to unit variance after centering

        [samples]
        sample01 = relative/path.csv, label[, split]

    Every referenced file must exist; labels must be nonempty.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str            # sample ids are case-sensitive
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if "samples" not in parser:
        raise ManifestError(f"{path}: missing [samples] section")

    glob = parser["global"] if "global" in parser else {}
    root_value = glob.get("root")
    if root_value is None:
        root = path.parent
    else:
        root = Path(root_value)
        if not root.is_absolute():
            root = path.parent / root
    d = int(glob["d"]) if "d" in glob else None
    center = str(glob.get("center", "false")).lower() in ("1", "true", "yes")
    scale = str(glob.get("scale", "false")).lower() in ("1", "true", "yes")

    entries = []
    for sample_id, value in parser.items("samples"):
        parts = [v.strip() for v in value.split(",")]
        if len(parts) < 2 or not parts[0] or not parts[1]:
            raise ManifestError(
                f"{path}: entry {sample_id!r} needs 'path, label[, split]'"
            )
        file_path = root / parts[0]
        if not file_path.exists():
            raise ManifestError(f"{path}: entry {sample_id!r} missing file {file_path}")
        split = parts[2] if len(parts) > 2 else ""
        entries.append(ManifestEntry(sample_id, file_path, parts[1], split))
    if not entries:
        raise ManifestError(f"{path}: manifest has no samples")
    return Manifest(root=root, entries=entries, d=d, center=center, scale=scale)


def save_manifest(path: str | Path, manifest: Manifest) -> None:
    lines = ["[global]"]
    if manifest.d is not None:
        lines.append(f"d = {manifest.d}")
    lines.append(f"center = {str(manifest.center).lower()}")
    lines.append(f"scale = {str(manifest.scale).lower()}")
    lines.append("")
    lines.append("[samples]")
    root = Path(path).parent
    for e in manifest.entries:
        rel = os.path.relpath(e.path, root)
        split = f", {e.split}" if e.split else ""
        lines.append(f"{e.sample_id} = {rel}, {e.label}{split}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_entry_matrix(manifest: Manifest, entry: ManifestEntry) -> np.ndarray:
    """Load one sample with the manifest preprocessing flags applied."""
    data = load_matrix(entry.path)
    if manifest.d is not None and data.shape[0] != manifest.d:
        raise ManifestError(
            f"{entry.path}: expected ambient dimension {manifest.d}, got {data.shape[0]}"
        )
    if manifest.center:
        data = data - data.mean(axis=1, keepdims=True)
    if manifest.scale:
        std = data.std()
        if std > 0:
            data = data / std
    return data


# ---------------------------------------------------------------------------
# dictionary persistence


def save_dictionary(
    out_dir: str | Path, dictionary: GrassmannDictionary | KernelDictionary
) -> None:
    """Directory layout: meta.ini plus one (or two) matrix files per atom."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kernelized = isinstance(dictionary, KernelDictionary)
    lines = ["[dictionary]"]
    lines.append(f"n_atoms = {len(dictionary)}")
    lines.append(f"p = {dictionary.p}")
    lines.append(f"kind = {'kernel' if kernelized else 'explicit'}")
    if kernelized:
        lines.append(f"kernel = {dictionary.kernel.spec()}")
        lines.append(f"d = {dictionary.atoms[0].d}")
    else:
        lines.append(f"d = {dictionary.d}")
    if dictionary.labels is not None:
        lines.append("labels = " + ",".join(str(v) for v in dictionary.labels))
    atomic_write_text(out / "meta.ini", "\n".join(lines) + "\n")

    for i, atom in enumerate(dictionary.atoms):
        if kernelized:
            save_matrix(out / f"atom_{i:04d}_samples.csv", atom.samples)
            save_matrix(out / f"atom_{i:04d}_coeff.csv", atom.coeff)
        else:
            save_matrix(out / f"atom_{i:04d}.csv", atom.basis)


def load_dictionary(in_dir: str | Path) -> GrassmannDictionary | KernelDictionary:
    in_dir = Path(in_dir)
    meta_path = in_dir / "meta.ini"
    if not meta_path.exists():
        raise ManifestError(f"dictionary meta file not found: {meta_path}")
    parser = configparser.ConfigParser()
    parser.read(meta_path, encoding="utf-8")
    meta = parser["dictionary"]
    n_atoms = int(meta["n_atoms"])
    p = int(meta["p"])
    labels = None
    if "labels" in meta:
        labels = np.array(meta["labels"].split(","))

    if meta.get("kind", "explicit") == "kernel":
        kernel = parse_kernel(meta["kernel"])
        atoms = []
        for i in range(n_atoms):
            samples = load_matrix(in_dir / f"atom_{i:04d}_samples.csv")
            coeff = load_matrix(in_dir / f"atom_{i:04d}_coeff.csv")
            atoms.append(KernelSubspace(samples, coeff, np.array([]), kernel))
        return KernelDictionary(atoms, labels)

    points = [load_subspace(in_dir / f"atom_{i:04d}.csv") for i in range(n_atoms)]
    if any(pt.p != p for pt in points):
        raise ManifestError(f"{in_dir}: atom order disagrees with meta p={p}")
    return build_dictionary(points, labels)


# ---------------------------------------------------------------------------
# codes and results


def write_codes_csv(
    path: str | Path,
    sample_ids,
    codes: np.ndarray,
    converged,
) -> None:
    """One row per query: id, converged flag, then the dense coefficients."""
    codes = np.atleast_2d(codes)
    lines = []
    for sid, flag, row in zip(sample_ids, converged, codes):
        coeffs = ",".join(FLOAT_FMT % v for v in row)
        lines.append(f"{sid},{int(flag)},{coeffs}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_codes_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, flags, rows = [], [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split(",")
        ids.append(parts[0])
        flags.append(bool(int(parts[1])))
        rows.append([float(v) for v in parts[2:]])
    return ids, np.array(flags), np.array(rows)


def write_results_json(path: str | Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
