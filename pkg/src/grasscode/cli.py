"""Command line surface: model, learn, code, classify, synth, bench.

Run parameters come from a flat key = value config file plus command-line
overrides (flags win). Exit codes: 0 success, 2 usage or validation
problems, 3 numerical failures. Set GRASS_LOG=debug|info|warn to control
verbosity.
"""

from __future__ import annotations

import functools
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import io as gio
from .coding import build_dictionary
from .errors import (
    AllZeroCode,
    ConfigError,
    CutLocus,
    DimensionMismatch,
    GrasscodeError,
    ManifestError,
    NotPSD,
    RankDeficient,
    Singular,
)
from .evaluation import (
    KERNEL_METHODS,
    SIGMA_PRESETS,
    CodingSpec,
    SyntheticSpec,
    class_residuals,
    encode_dataset,
    generate_synthetic,
)
from .kernels import build_kernel_dictionary, parse_kernel
from .learning import DLConfig, gdl_learn, kgdl_learn
from .modeling import appearance_subspace, fit_arma, observability_subspace
from .solvers import SolverConfig

log = logging.getLogger("grasscode")

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_USAGE_ERRORS = (ConfigError, ManifestError, DimensionMismatch, ValueError)
_NUMERICAL_ERRORS = (
    Singular,
    RankDeficient,
    CutLocus,
    NotPSD,
    AllZeroCode,
    np.linalg.LinAlgError,
)


def _setup_logging() -> None:
    level = os.environ.get("GRASS_LOG", "warn").lower()
    mapping = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}
    logging.basicConfig(
        level=mapping.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _NUMERICAL_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except _USAGE_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except GrasscodeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


class RunSettings:
    """Typed view over the merged config-file + flag key/value map."""

    def __init__(self, raw: dict):
        self.raw = {k: v for k, v in raw.items() if v is not None}

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def get_float(self, key, default):
        try:
            return float(self.raw.get(key, default))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} must be a number") from exc

    def get_int(self, key, default):
        try:
            return int(self.raw.get(key, default))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} must be an integer") from exc

    def get_bool(self, key, default=False):
        val = str(self.raw.get(key, default)).lower()
        return val in ("1", "true", "yes", "on")

    @property
    def method(self) -> str:
        return str(self.raw.get("method", "gsc")).lower()

    def solver(self) -> SolverConfig:
        return SolverConfig(
            max_iter=self.get_int("max_iter", 10000),
            tol=self.get_float("tol", 1e-8),
        )

    def kernel(self):
        spec = self.get("kernel")
        if self.method in KERNEL_METHODS:
            if not spec:
                raise ConfigError(f"method {self.method!r} requires a kernel spec")
            return parse_kernel(str(spec))
        if spec:
            raise ConfigError(
                f"kernel spec given but method {self.method!r} is not kernelized"
            )
        return None

    def coding_spec(self) -> CodingSpec:
        return CodingSpec(
            method=self.method,
            lam=self.get_float("lambda", 0.1),
            n_neighbors=self.get_int("nlc", 5),
            ridge=self.get_float("ridge", 1e-6),
            base=str(self.get("base", "canonical")),
            kernel=self.kernel(),
            p=self.get_int("p", 0) or None,
            solver=self.solver(),
        )


def load_settings(config_path: str | None, **overrides) -> RunSettings:
    raw: dict = {}
    if config_path:
        raw.update(gio.read_config(config_path))
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return RunSettings(raw)


def config_option(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="Flat key = value run config.")(fn)
    return fn


def common_overrides(fn):
    for decorator in (
        click.option("--method", default=None,
                     help="gsc | glc | kgsc | kglc | loge."),
        click.option("--lambda", "lam", type=float, default=None,
                     help="l1 weight for the sparse methods."),
        click.option("--nlc", type=int, default=None,
                     help="Neighbor count for the locality methods."),
        click.option("--kernel", default=None,
                     help="Kernel spec: gaussian:GAMMA | linear | polynomial:DEG[:OFFSET]."),
        click.option("--p", type=int, default=None, help="Subspace order."),
        click.option("--seed", type=int, default=None, help="RNG seed."),
        click.option("--threads", type=int, default=None,
                     help="Worker cap for per-sample parallelism."),
    ):
        fn = decorator(fn)
    return fn


def _overrides_dict(method, lam, nlc, kernel, p, seed, threads) -> dict:
    return {
        "method": method,
        "lambda": lam,
        "nlc": nlc,
        "kernel": kernel,
        "p": p,
        "seed": seed,
        "threads": threads,
    }


@click.group()
def main():
    """Coding, dictionary learning and classification on Grassmann manifolds."""
    _setup_logging()


# ---------------------------------------------------------------------------
# model


@main.command()
@config_option
@common_overrides
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True), help="Dataset manifest.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for subspace files.")
@guarded
def model(config_path, manifest_path, out_dir, **overrides):
    """Turn raw sample matrices into subspace files plus an index manifest."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    manifest = gio.load_manifest(manifest_path)
    kind = str(settings.get("modeling", "appearance")).lower()
    p = settings.get_int("p", 5)
    n_state = settings.get_int("n", 10)
    m_obs = settings.get_int("m_obs", 5)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    index_entries = []
    for entry in manifest.entries:
        try:
            data = gio.load_entry_matrix(manifest, entry)
            if kind == "appearance":
                point = appearance_subspace(data, p)
            elif kind == "arma":
                point = observability_subspace(fit_arma(data, n_state), m_obs)
            else:
                raise ConfigError(f"unknown modeling kind {kind!r}")
            target = out / f"{entry.sample_id}.csv"
            gio.save_subspace(target, point)
            index_entries.append(
                gio.ManifestEntry(entry.sample_id, target, entry.label, entry.split)
            )
        except ConfigError:
            raise
        except Exception as exc:       # per-entry failure: log, keep going
            failures += 1
            log.error("entry %s failed: %s", entry.sample_id, exc)
            click.echo(f"entry {entry.sample_id} failed: {exc}", err=True)
    if index_entries:
        gio.save_manifest(
            out / "index.ini",
            gio.Manifest(root=out, entries=index_entries),
        )
    click.echo(f"modeled {len(index_entries)}/{len(manifest.entries)} entries -> {out}")
    if failures:
        sys.exit(EXIT_NUMERICAL)


# ---------------------------------------------------------------------------
# learn


def _load_index_points(manifest: gio.Manifest):
    ids, points, labels = [], [], []
    for entry in manifest.entries:
        ids.append(entry.sample_id)
        points.append(gio.load_subspace(entry.path))
        labels.append(entry.label)
    return ids, points, labels


def _write_trace_csv(path: Path, traces: list[tuple[str, "DLTrace"]]) -> None:
    lines = ["class,iteration,objective,max_atom_change"]
    for tag, trace in traces:
        for it in range(trace.n_iter_run):
            lines.append(
                f"{tag},{it},{gio.FLOAT_FMT % trace.update_objective[it]},"
                f"{gio.FLOAT_FMT % trace.atom_change[it]}"
            )
    gio.atomic_write_text(path, "\n".join(lines) + "\n")


@main.command()
@config_option
@common_overrides
@click.option("--index", "index_path", required=True, type=click.Path(exists=True),
              help="Manifest of training matrices (subspaces, or raw sets for kernels).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output dictionary directory.")
@click.option("--from-atoms", is_flag=True,
              help="Skip learning: every training entry becomes a labeled atom.")
@click.option("--per-class", is_flag=True,
              help="Learn one dictionary per class and concatenate (labeled atoms).")
@guarded
def learn(config_path, index_path, out_dir, from_atoms, per_class, **overrides):
    """Learn a dictionary (or snapshot the training atoms) and save it."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    manifest = gio.load_manifest(index_path)
    method = settings.method
    kernel = settings.kernel()
    out = Path(out_dir)

    if method in KERNEL_METHODS:
        sets = [gio.load_entry_matrix(manifest, e) for e in manifest.entries]
        labels = [e.label for e in manifest.entries]
        p = settings.get_int("p", 2)
        if from_atoms:
            dictionary = build_kernel_dictionary(sets, p, kernel, labels)
            gio.save_dictionary(out, dictionary)
            click.echo(f"saved {len(dictionary)} kernel atoms -> {out}")
            return
        cfg = _dl_config(settings, p=p)
        groups = _group_by_label(sets, labels) if per_class else {None: (sets, None)}
        atoms, atom_labels, traces = [], [], []
        for tag, (subset, _) in groups.items():
            kdict, trace = kgdl_learn(subset, kernel, cfg)
            atoms.extend(kdict.atoms)
            if tag is not None:
                atom_labels.extend([tag] * len(kdict))
            traces.append((str(tag) if tag is not None else "all", trace))
        from .kernels import KernelDictionary

        dictionary = KernelDictionary(atoms, atom_labels if per_class else None)
    else:
        _, points, labels = _load_index_points(manifest)
        if from_atoms:
            dictionary = build_dictionary(points, labels)
            gio.save_dictionary(out, dictionary)
            click.echo(f"saved {len(dictionary)} atoms -> {out}")
            return
        cfg = _dl_config(settings)
        groups = _group_by_label(points, labels) if per_class else {None: (points, None)}
        atoms, atom_labels, traces = [], [], []
        for tag, (subset, _) in groups.items():
            gdict, trace = gdl_learn(subset, cfg)
            atoms.extend(gdict.atoms)
            if tag is not None:
                atom_labels.extend([tag] * len(gdict))
            traces.append((str(tag) if tag is not None else "all", trace))
        dictionary = build_dictionary(atoms, atom_labels if per_class else None)

    gio.save_dictionary(out, dictionary)
    _write_trace_csv(out / "trace.csv", traces)
    final = traces[-1][1].final_objective
    click.echo(f"learned {len(dictionary)} atoms (final objective {final:.6g}) -> {out}")


def _group_by_label(items, labels):
    groups: dict = {}
    for item, label in zip(items, labels):
        groups.setdefault(label, ([], None))[0].append(item)
    return groups


def _dl_config(settings: RunSettings, p: int | None = None) -> DLConfig:
    method = settings.method
    coding = method[1:] if method.startswith("k") else method
    if coding == "loge":
        raise ConfigError("dictionary learning supports gsc/glc coding only")
    return DLConfig(
        n_atoms=settings.get_int("n_atoms", 8),
        n_iter=settings.get_int("n_iter", 15),
        lam=settings.get_float("lambda", 0.1),
        method=coding,
        n_neighbors=settings.get_int("nlc", 5),
        ridge=settings.get_float("ridge", 1e-6),
        seed=settings.get_int("seed", 0),
        tol=settings.get_float("dl_tol", 1e-6),
        p=p,
        solver=settings.solver(),
    )


# ---------------------------------------------------------------------------
# code and classify


def _encode_index(dictionary, manifest: gio.Manifest, settings: RunSettings):
    """Code every manifest entry; rows ordered by sample id."""
    entries = sorted(manifest.entries, key=lambda e: e.sample_id)
    spec = settings.coding_spec()
    from .kernels import KernelDictionary

    if spec.method in KERNEL_METHODS:
        if not isinstance(dictionary, KernelDictionary):
            raise ConfigError("kernel coding method needs a kernel dictionary")
        queries = [gio.load_entry_matrix(manifest, e) for e in entries]
    else:
        if isinstance(dictionary, KernelDictionary):
            raise ConfigError(
                f"method {spec.method!r} needs an explicit dictionary, "
                "but a kernel dictionary was given"
            )
        queries = [gio.load_subspace(e.path) for e in entries]

    threads = settings.get_int("threads", 1)
    if spec.method in KERNEL_METHODS:
        from .kernels import gram_basis

        p = spec.p or dictionary.p
        kq = [gram_basis(q, p, dictionary.kernel) for q in queries]
        codes, flags, sims = _encode_chunked(dictionary, kq, spec, threads, kernel=True)
    else:
        codes, flags, sims = _encode_chunked(dictionary, queries, spec, threads)
    ids = [e.sample_id for e in entries]
    labels = [e.label for e in entries]
    return ids, labels, codes, flags, sims


def _encode_chunked(dictionary, queries, spec, threads, kernel=False):
    """Split the query list across workers; concatenation preserves order."""

    def run(chunk):
        if kernel:
            from .kernels import kglc_encode, kgsc_encode_many

            if spec.method == "kgsc":
                codes, flags = kgsc_encode_many(dictionary, chunk, spec.lam, spec.solver)
            else:
                codes = np.stack(
                    [
                        kglc_encode(
                            dictionary, q, spec.n_neighbors, spec.ridge, spec.solver
                        ).coeffs
                        for q in chunk
                    ]
                )
                flags = np.ones(len(chunk), dtype=bool)
            sims = dictionary.similarity_matrix(chunk)
            return codes, flags, sims
        return encode_dataset(dictionary, chunk, spec)

    if threads <= 1 or len(queries) < 2 * threads:
        return run(list(queries))
    chunks = np.array_split(np.arange(len(queries)), threads)
    parts = [[queries[i] for i in chunk] for chunk in chunks if len(chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, parts))
    codes = np.vstack([r[0] for r in results])
    flags = np.concatenate([r[1] for r in results])
    sims = np.vstack([r[2] for r in results])
    return codes, flags, sims


@main.command()
@config_option
@common_overrides
@click.option("--dict", "dict_dir", required=True, type=click.Path(exists=True),
              help="Dictionary directory from `learn`.")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True),
              help="Manifest of query matrices.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output codes CSV.")
@guarded
def code(config_path, dict_dir, index_path, out_path, **overrides):
    """Code every query in the index against a saved dictionary."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    dictionary = gio.load_dictionary(dict_dir)
    manifest = gio.load_manifest(index_path)
    ids, _, codes, flags, _ = _encode_index(dictionary, manifest, settings)
    if codes.shape[1] != len(dictionary):
        raise DimensionMismatch("code length mismatch")
    gio.write_codes_csv(out_path, ids, codes, flags)
    n_zero = int(np.sum(~codes.any(axis=1)))
    if n_zero:
        click.echo(f"warning: {n_zero} all-zero code rows", err=True)
    click.echo(f"coded {len(ids)} queries -> {out_path}")


@main.command()
@config_option
@common_overrides
@click.option("--dict", "dict_dir", required=True, type=click.Path(exists=True),
              help="Labeled dictionary directory.")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True),
              help="Manifest of query matrices (labels used as ground truth).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for predictions and metrics.")
@guarded
def classify(config_path, dict_dir, index_path, out_dir, **overrides):
    """Residual-error classification of coded queries."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    dictionary = gio.load_dictionary(dict_dir)
    if dictionary.labels is None:
        raise ConfigError("classification needs a labeled dictionary "
                          "(learn --from-atoms or --per-class)")
    manifest = gio.load_manifest(index_path)
    ids, truth, codes, flags, sims = _encode_index(dictionary, manifest, settings)

    classes, residuals = class_residuals(dictionary, sims, codes)
    predictions = classes[np.argmin(residuals, axis=1)]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["id,predicted,true"]
    for sid, pred, true in zip(ids, predictions, truth):
        lines.append(f"{sid},{pred},{true}")
    gio.atomic_write_text(out / "predictions.csv", "\n".join(lines) + "\n")
    gio.write_codes_csv(out / "codes.csv", ids, codes, flags)

    truth_arr = np.array(truth)
    known = np.isin(truth_arr, classes)
    accuracy = float(np.mean(predictions[known] == truth_arr[known])) if known.any() else float("nan")
    payload = {
        "accuracy": accuracy,
        "n_queries": len(ids),
        "config_hash": gio.config_hash(settings.raw),
        "method": settings.method,
        "classes": [str(c) for c in classes],
    }
    gio.write_results_json(out / "results.json", payload)
    click.echo(f"accuracy = {accuracy:.4f} ({int(np.sum(predictions == truth_arr))}/{len(ids)})")


# ---------------------------------------------------------------------------
# synth


@main.command()
@config_option
@common_overrides
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output dataset directory.")
@guarded
def synth(config_path, out_dir, **overrides):
    """Materialize a synthetic labeled dataset of subspaces."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    preset = settings.get("preset")
    if preset is not None and str(preset) not in SIGMA_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; pick from {sorted(SIGMA_PRESETS)}")
    sigma = SIGMA_PRESETS[str(preset)] if preset else settings.get_float("sigma", 0.1)
    experiment = settings.get_int("experiment", 1)
    if experiment not in (1, 2):
        raise ConfigError("experiment must be 1 (canonical means) or 2 (random means)")
    spec = SyntheticSpec(
        n_classes=settings.get_int("classes", 4),
        d=settings.get_int("d", 6),
        p=settings.get_int("p", 2),
        mean_mode="canonical" if experiment == 1 else "random",
        sigma=sigma,
        n_dict_per_class=settings.get_int("samples_per_class", 8),
        n_query_per_class=settings.get_int("queries_per_class", 1000),
        seed=settings.get_int("seed", 0),
    )
    dataset = generate_synthetic(spec)

    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    dict_entries, query_entries = [], []
    for i, (pt, label) in enumerate(zip(dataset.dict_points, dataset.dict_labels)):
        sid = f"dict{i:05d}"
        path = out / "samples" / f"{sid}.csv"
        gio.save_subspace(path, pt)
        dict_entries.append(gio.ManifestEntry(sid, path, str(label), "dict"))
    for i, (pt, label) in enumerate(zip(dataset.query_points, dataset.query_labels)):
        sid = f"query{i:05d}"
        path = out / "samples" / f"{sid}.csv"
        gio.save_subspace(path, pt)
        query_entries.append(gio.ManifestEntry(sid, path, str(label), "query"))
    gio.save_manifest(out / "dict_manifest.ini",
                      gio.Manifest(root=out, entries=dict_entries, d=spec.d))
    gio.save_manifest(out / "query_manifest.ini",
                      gio.Manifest(root=out, entries=query_entries, d=spec.d))
    gio.write_results_json(out / "meta.json", {
        "classes": spec.n_classes, "d": spec.d, "p": spec.p,
        "mean_mode": spec.mean_mode, "sigma": spec.sigma,
        "samples_per_class": spec.n_dict_per_class,
        "queries_per_class": spec.n_query_per_class, "seed": spec.seed,
        "config_hash": gio.config_hash(settings.raw),
    })
    click.echo(
        f"wrote {len(dict_entries)} dictionary + {len(query_entries)} query samples -> {out}"
    )


# ---------------------------------------------------------------------------
# bench


@main.command()
@config_option
@common_overrides
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output timing CSV.")
@guarded
def bench(config_path, out_path, **overrides):
    """Time coding throughput per method across an ambient-dimension grid."""
    settings = load_settings(config_path, **_overrides_dict(**overrides))
    methods = [m.strip() for m in str(settings.get("bench_methods", "gsc,glc")).split(",")]
    d_grid = [int(v) for v in str(settings.get("bench_d_grid", "16,64,256")).split(",")]
    p = settings.get_int("p", 2)
    n_atoms = settings.get_int("n_atoms", 32)
    n_queries = settings.get_int("bench_queries", 50)
    seed = settings.get_int("seed", 0)

    from .geometry import random_point

    lines = ["method,d,p,n_atoms,n_queries,seconds_total,queries_per_sec"]
    for method in methods:
        for d in d_grid:
            if d <= p:
                raise ConfigError(f"bench grid dimension {d} must exceed p={p}")
            rng = np.random.default_rng(seed)
            atoms = [random_point(d, p, rng) for _ in range(n_atoms)]
            queries = [random_point(d, p, rng) for _ in range(n_queries)]
            kernel = settings.get("kernel")
            spec_kwargs = dict(
                method=method,
                lam=settings.get_float("lambda", 0.1),
                n_neighbors=settings.get_int("nlc", 5),
                ridge=settings.get_float("ridge", 1e-6),
                solver=settings.solver(),
            )
            if method in KERNEL_METHODS:
                if not kernel:
                    raise ConfigError(f"bench method {method!r} needs a kernel spec")
                spec_kwargs["kernel"] = parse_kernel(str(kernel))
            spec = CodingSpec(**spec_kwargs)
            from .evaluation import build_experiment_dictionary

            dictionary = build_experiment_dictionary(atoms, None, spec)
            start = time.perf_counter()
            encode_dataset(dictionary, queries, spec)
            elapsed = time.perf_counter() - start
            qps = n_queries / elapsed if elapsed > 0 else float("inf")
            lines.append(
                f"{method},{d},{p},{n_atoms},{n_queries},"
                f"{elapsed:.6f},{qps:.3f}"
            )
            log.info("bench %s d=%d: %.1f queries/s", method, d, qps)
    gio.atomic_write_text(out_path, "\n".join(lines) + "\n")
    click.echo(f"bench results -> {out_path}")


if __name__ == "__main__":
    main()
