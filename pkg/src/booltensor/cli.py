"""Command-line workflows: fit, complete, simulate, select-rank, encode, bench.

Every command resolves its configuration (drawing a seed if none was given),
computes all results, then writes outputs atomically (temp file + rename) so
a failing run leaves nothing behind.  A manifest.json recording the resolved
argument vector, seed, inputs, outputs and timestamps is written alongside
every output; re-running the argv from a manifest reproduces the data files
byte for byte, regardless of thread count.

Exit codes: 0 success, 2 argument error, 3 I/O or parse error, 4 runtime error.
"""

from __future__ import annotations

import functools
import io
import json
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .encode import read_continuous_csv, relational_encode, write_name_map, zscore_normalize
from .model import ModelState, write_factor_csv
from .modelselect import cv_select, occam_select
from .reconstruct import posterior_predictive
from .sampler import SamplerConfig, run_chain
from .simulate import SimSpec, benchmark_grid, density_for_target, generate, write_benchmark_csv
from .tensor import ObservedTensor, ParseError, load_tensor, save_dense

EXIT_ARGUMENT = 2
EXIT_IO = 3
EXIT_RUNTIME = 4


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ParseError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ARGUMENT)
        except Exception as exc:  # noqa: BLE001
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _resolve_seed(seed: int | None) -> int:
    return secrets.randbits(63) if seed is None else seed


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _tensor_bytes(t: ObservedTensor) -> bytes:
    buf = io.BytesIO()
    save_dense(t, buf)
    return buf.getvalue()


def _csv_bytes(values: np.ndarray) -> bytes:
    import tempfile

    with tempfile.NamedTemporaryFile("w+", suffix=".csv", delete=False) as fh:
        name = fh.name
    try:
        write_factor_csv(values, name)
        return Path(name).read_bytes()
    finally:
        os.unlink(name)


def _commit(out_dir: Path, files: dict[str, bytes], manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest["outputs"] = sorted(files)
    manifest["finished"] = _now()
    for name, data in files.items():
        _atomic_write(out_dir / name, data)
    _atomic_write(
        out_dir / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode()
    )


def _manifest(command: str, argv: list[str], seed: int, inputs: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "argv": argv,
        "inputs": {k: str(Path(v).resolve()) for k, v in inputs.items()},
        "started": _now(),
    }


def manifest_to_args(
    manifest: dict, out_dir: str | None = None, threads: int | None = None
) -> list[str]:
    """Rebuild the CLI argument vector from a manifest, optionally redirecting output."""
    argv = list(manifest["argv"])
    if out_dir is not None:
        i = argv.index("--out")
        argv[i + 1] = str(out_dir)
    if threads is not None:
        if "--threads" in argv:
            i = argv.index("--threads")
            argv[i + 1] = str(threads)
        else:
            argv += ["--threads", str(threads)]
    return argv


def _sampler_options(fn):
    opts = [
        click.option("--samples", default=50, show_default=True, help="Posterior sample count."),
        click.option("--seed", type=int, default=None, help="Master seed; drawn if omitted."),
        click.option("--alpha", default=1.0, show_default=True, help="Correct-prediction pseudo-count."),
        click.option("--beta", default=1.0, show_default=True, help="Incorrect-prediction pseudo-count."),
        click.option(
            "--threads",
            type=int,
            default=None,
            envvar="BOOLTENSOR_THREADS",
            help="Worker threads (default: all cores; env BOOLTENSOR_THREADS).",
        ),
        click.option("--max-burnin", default=500, show_default=True, help="Burn-in sweep cap."),
        click.option("--tol", default=1e-3, show_default=True, help="Convergence tolerance on sigma(lambda)."),
        click.option("--window", default=20, show_default=True, help="Convergence window in sweeps."),
        click.option("--lambda-init", default=0.5, show_default=True, help="Initial noise parameter."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _make_config(rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init):
    return SamplerConfig(
        rank=rank,
        max_burn_in_sweeps=max_burnin,
        convergence_window=window,
        convergence_tol=tol,
        n_samples=samples,
        seed=seed,
        threads=threads,
        lambda_init=lambda_init,
        alpha=alpha,
        beta=beta,
    )


def _sampler_argv(samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init):
    argv = [
        "--samples", str(samples), "--seed", str(seed),
        "--alpha", str(alpha), "--beta", str(beta),
        "--max-burnin", str(max_burnin), "--tol", str(tol),
        "--window", str(window), "--lambda-init", str(lambda_init),
    ]
    if threads is not None:
        argv += ["--threads", str(threads)]
    return argv


def _fit_outputs(acc, trace) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    means = acc.factor_means()
    for k, m in enumerate(means):
        files[f"factor_mean_mode{k}.csv"] = _csv_bytes(m)
        files[f"factor_map_mode{k}.csv"] = _csv_bytes((m > 0.5).astype(np.uint8))
    lines = [json.dumps(r) for r in trace.records()]
    files["trace.ndjson"] = ("\n".join(lines) + "\n").encode()
    return files


def _parse_int_list(text: str, name: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.BadParameter(f"{name} must be a comma-separated list of integers") from None


def _parse_float_list(text: str, name: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.BadParameter(f"{name} must be a comma-separated list of numbers") from None


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Probabilistic Boolean tensor decomposition."""


@main.command()
@click.argument("tensor", type=click.Path())
@click.option("--rank", required=True, type=int, help="Latent dimensionality to fit.")
@_sampler_options
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def fit(tensor, rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init, out):
    """Fit factor matrices to a tensor; write posterior means, MAPs, and a trace."""
    seed = _resolve_seed(seed)
    t = load_tensor(tensor)
    cfg = _make_config(rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    acc, _, trace = run_chain(t, cfg)
    if not trace.converged:
        click.echo(f"warning: burn-in did not converge within {max_burnin} sweeps", err=True)
    argv = ["fit", str(tensor), "--rank", str(rank)]
    argv += _sampler_argv(samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    argv += ["--out", str(out)]
    manifest = _manifest("fit", argv, seed, {"tensor": tensor})
    manifest["converged"] = trace.converged
    _commit(Path(out), _fit_outputs(acc, trace), manifest)


@main.command()
@click.argument("tensor", type=click.Path())
@click.option("--rank", required=True, type=int, help="Latent dimensionality to fit.")
@_sampler_options
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def complete(tensor, rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init, out):
    """Fit a tensor with missing entries and predict the missing values."""
    seed = _resolve_seed(seed)
    t = load_tensor(tensor)
    cfg = _make_config(rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    acc, _, trace = run_chain(t, cfg)
    recon = posterior_predictive(acc)
    missing = np.argwhere(t.data == 0)
    if missing.size == 0:
        click.echo("warning: tensor has no missing entries; nothing to complete", err=True)
    completed = t.data.copy()
    hard = recon.hard
    rows = [",".join(f"i{k}" for k in range(t.n_modes)) + ",probability"]
    for idx in missing:
        tup = tuple(int(i) for i in idx)
        completed[tup] = 1 if hard[tup] else -1
        rows.append(",".join(str(i) for i in tup) + f",{recon.probabilities[tup]!r}")
    files = _fit_outputs(acc, trace)
    files["completed.bt"] = _tensor_bytes(ObservedTensor(completed))
    files["completion_probabilities.csv"] = ("\n".join(rows) + "\n").encode()
    argv = ["complete", str(tensor), "--rank", str(rank)]
    argv += _sampler_argv(samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    argv += ["--out", str(out)]
    manifest = _manifest("complete", argv, seed, {"tensor": tensor})
    manifest["converged"] = trace.converged
    manifest["n_missing"] = int(missing.shape[0])
    _commit(Path(out), files, manifest)


@main.command()
@click.option("--dims", required=True, help="Tensor extents, e.g. 20,20,20.")
@click.option("--rank", required=True, type=int, help="True rank of the generated tensor.")
@click.option("--density", type=float, default=None, help="Factor density in (0,1).")
@click.option("--target-density", type=float, default=None, help="Expected tensor density to hit.")
@click.option("--noise", default=0.0, show_default=True, help="Bit-flip probability in [0, 0.5).")
@click.option("--seed", type=int, default=None, help="Master seed; drawn if omitted.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def simulate(dims, rank, density, target_density, noise, seed, out):
    """Generate a random Boolean-product tensor plus a noisy copy."""
    dims_list = _parse_int_list(dims, "--dims")
    if (density is None) == (target_density is None):
        raise click.UsageError("give exactly one of --density / --target-density")
    seed = _resolve_seed(seed)
    if density is None:
        density = density_for_target(target_density, rank, len(dims_list))
    spec = SimSpec(tuple(dims_list), rank, density, noise, seed)
    clean, noisy, factors = generate(spec)
    files = {
        "clean.bt": _tensor_bytes(clean),
        "noisy.bt": _tensor_bytes(noisy),
    }
    for k, f in enumerate(factors):
        files[f"factor_true_mode{k}.csv"] = _csv_bytes(f.bits)
    argv = [
        "simulate", "--dims", dims, "--rank", str(rank), "--density", repr(float(density)),
        "--noise", str(noise), "--seed", str(seed), "--out", str(out),
    ]
    manifest = _manifest("simulate", argv, seed, {})
    manifest["factor_density"] = float(density)
    _commit(Path(out), files, manifest)


@main.command("select-rank")
@click.argument("tensor", type=click.Path())
@click.option("--method", type=click.Choice(["occam", "cv"]), required=True)
@click.option("--start-rank", type=int, default=None, help="Initial rank for occam pruning.")
@click.option("--ranks", default=None, help="Candidate ranks for cv, e.g. 2,3,4.")
@click.option("--holdout", default=0.2, show_default=True, help="Held-out fraction for cv.")
@_sampler_options
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def select_rank(tensor, method, start_rank, ranks, holdout, samples, seed, alpha, beta,
                threads, max_burnin, tol, window, lambda_init, out):
    """Choose the latent dimensionality by pruning or cross-validation."""
    seed = _resolve_seed(seed)
    t = load_tensor(tensor)
    argv = ["select-rank", str(tensor), "--method", method]
    if method == "occam":
        if start_rank is None:
            raise click.UsageError("--method occam requires --start-rank")
        cfg = _make_config(start_rank, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
        report = occam_select(t, start_rank, cfg)
        argv += ["--start-rank", str(start_rank)]
    else:
        if not ranks:
            raise click.UsageError("--method cv requires --ranks")
        rank_list = _parse_int_list(ranks, "--ranks")
        cfg = _make_config(max(rank_list), samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
        report = cv_select(t, rank_list, holdout, cfg)
        argv += ["--ranks", ranks, "--holdout", str(holdout)]
    argv += _sampler_argv(samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    argv += ["--out", str(out)]
    files = {
        "report.txt": report.to_table().encode(),
        "report.ndjson": report.to_records().encode(),
    }
    manifest = _manifest("select-rank", argv, seed, {"tensor": tensor})
    manifest["chosen_rank"] = report.chosen_rank
    _commit(Path(out), files, manifest)
    click.echo(f"chosen rank: {report.chosen_rank}")


@main.command()
@click.argument("csvfile", type=click.Path())
@click.option("--epsilon", default=0.0, show_default=True, help="Tie tolerance after normalization.")
@click.option("--normalize/--no-normalize", default=True, show_default=True,
              help="Z-score attributes before encoding.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def encode(csvfile, epsilon, normalize, out):
    """Encode a continuous object x attribute CSV into a relation tensor."""
    m = read_continuous_csv(csvfile)
    if normalize:
        m = zscore_normalize(m)
    t = relational_encode(m, tie_epsilon=epsilon)
    import tempfile

    with tempfile.NamedTemporaryFile("w+", delete=False) as fh:
        name = fh.name
    try:
        write_name_map(m, name)
        names_bytes = Path(name).read_bytes()
    finally:
        os.unlink(name)
    files = {"tensor.bt": _tensor_bytes(t), "names.tsv": names_bytes}
    argv = ["encode", str(csvfile), "--epsilon", str(epsilon),
            "--normalize" if normalize else "--no-normalize", "--out", str(out)]
    manifest = _manifest("encode", argv, seed=0, inputs={"csv": csvfile})
    manifest["dims"] = list(t.dims)
    _commit(Path(out), files, manifest)


@main.command()
@click.option("--dims", default="20,20,20", show_default=True)
@click.option("--ranks", default="5", show_default=True, help="True ranks, comma-separated.")
@click.option("--target-densities", default="0.3", show_default=True)
@click.option("--noises", default="0.0,0.1", show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@_sampler_options
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def bench(dims, ranks, target_densities, noises, seeds, samples, seed, alpha, beta,
          threads, max_burnin, tol, window, lambda_init, out):
    """Run the synthetic benchmark grid and write one CSV row per cell and estimator."""
    dims_list = _parse_int_list(dims, "--dims")
    rank_list = _parse_int_list(ranks, "--ranks")
    density_list = _parse_float_list(target_densities, "--target-densities")
    noise_list = _parse_float_list(noises, "--noises")
    seed_list = _parse_int_list(seeds, "--seeds")
    seed = _resolve_seed(seed)
    cfg = _make_config(1, samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    rows = list(benchmark_grid(dims_list, rank_list, density_list, noise_list, seed_list, cfg))
    import tempfile

    with tempfile.NamedTemporaryFile("w+", delete=False) as fh:
        name = fh.name
    try:
        write_benchmark_csv(rows, name)
        csv_bytes = Path(name).read_bytes()
    finally:
        os.unlink(name)
    argv = ["bench", "--dims", dims, "--ranks", ranks, "--target-densities", target_densities,
            "--noises", noises, "--seeds", seeds]
    argv += _sampler_argv(samples, seed, alpha, beta, threads, max_burnin, tol, window, lambda_init)
    argv += ["--out", str(out)]
    manifest = _manifest("bench", argv, seed, {})
    _commit(Path(out), {"results.csv": csv_bytes}, manifest)


if __name__ == "__main__":
    main()
