"""Command line: ``cryptorisk detect | assess | fleet cluster | fleet mine | report``.

Exit status is 0 on success, 1 for bad input (unreadable or invalid files,
arguments out of range) and 2 when an internal consistency check fails.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from cryptorisk import pipeline
from cryptorisk.adapters import validate_chain
from cryptorisk.dataflow import DEFAULT_DEPTH
from cryptorisk.errors import CryptoRiskError, InvariantViolation, ParseError
from cryptorisk.fleet.mining import DEFAULT_MIN_CONF, DEFAULT_MIN_SUPPORT_APPS
from cryptorisk.risk import DEFAULT_RISK_CHAIN
from cryptorisk.taxonomy import load_taxonomy

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVARIANT = 2


def _ids(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _k_range(text: str | None) -> list[int]:
    if not text:
        return []
    ks: set[int] = set()
    try:
        for part in text.split(","):
            lo, _, hi = part.partition("-")
            ks.update(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise click.BadParameter(f"expected e.g. '2-10' or '2,4,7', got {text!r}", param_hint="--k-range") from None
    return sorted(ks)


catalog_option = click.option(
    "--catalog",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON catalog merged over the built-in API table and weights.",
)
jobs_option = click.option("--jobs", "-j", type=click.IntRange(min=1), default=1, show_default=True, help="Apps processed in parallel.")


@click.group()
@click.version_option(package_name="artifact")
def cli() -> None:
    """Crypto-misuse detection, flow tracing and risk scoring for CEIR programs."""


@cli.command()
@click.argument("programs", type=click.Path(path_type=Path))
@click.option("--reports", type=click.Path(path_type=Path), default=None, help="File or directory of CG/CC/BS report envelopes.")
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--builtin/--no-builtin", default=True, show_default=True, help="Run the built-in rule set (detector BI).")
@catalog_option
@jobs_option
def detect(programs: Path, reports: Path | None, out: Path, builtin: bool, catalog: str | None, jobs: int) -> None:
    """Find misuses in PROGRAMS (a CEIR file or directory) and merge external reports."""
    results = pipeline.run_detect(programs, out, reports, catalog=catalog, builtin=builtin, jobs=jobs)
    for r in results:
        click.echo(f"{r.app_id}: {r.tuples} misuse(s) from {','.join(r.detectors) or '-'}; {r.unmapped} unmapped")
    click.echo(f"wrote {len(results)} app(s) to {out}")


@cli.command()
@click.argument("programs", type=click.Path(path_type=Path))
@click.argument("detected", type=click.Path(path_type=Path))
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--chain", default=",".join(DEFAULT_RISK_CHAIN), show_default=True, help="Detectors counted in R_x.")
@click.option("--vote-chain", default=None, help="Detectors that vote on each misuse [default: those that ran].")
@click.option("--depth", type=click.IntRange(min=1), default=DEFAULT_DEPTH, show_default=True, help="Call depth for taint tracking.")
@click.option("--require-valid-chain", is_flag=True, help="Fail unless the vote chain covers every misuse type.")
@catalog_option
@jobs_option
def assess(
    programs: Path,
    detected: Path,
    out: Path,
    chain: str,
    vote_chain: str | None,
    depth: int,
    require_valid_chain: bool,
    catalog: str | None,
    jobs: int,
) -> None:
    """Trace flows from each detected misuse and score every app.

    DETECTED is the output directory of ``detect``.
    """
    reports = pipeline.run_assess(
        programs,
        detected,
        out,
        chain=_ids(chain),
        vote_chain=_ids(vote_chain),
        depth=depth,
        catalog=catalog,
        require_valid_chain=require_valid_chain,
        jobs=jobs,
    )
    click.echo(pipeline.summarize(reports), nl=False)


@cli.group()
def fleet() -> None:
    """Fleet-wide clustering and association rules over risk reports."""


@fleet.command("cluster")
@click.argument("risk_dir", type=click.Path(path_type=Path))
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--k", "k", type=click.IntRange(min=1), default=7, show_default=True)
@click.option("--k-range", default=None, help="Also sweep these k values, e.g. '2-10'.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--top-n", type=click.IntRange(min=1), default=3, show_default=True, help="Labels listed per cluster.")
@click.option("--nu-only", is_flag=True, help="Cluster on flow counts only, ignoring detectability.")
def fleet_cluster(risk_dir: Path, out: Path, k: int, k_range: str | None, seed: int, top_n: int, nu_only: bool) -> None:
    """Cluster the apps in RISK_DIR by their detection and flow counts."""
    res = pipeline.run_cluster(risk_dir, out, k=k, k_range=_k_range(k_range), seed=seed, top_n=top_n, nu_only=nu_only)
    dbi = "n/a" if res.dbi is None else f"{res.dbi:.4f}"
    click.echo(f"k={res.k} sizes={res.sizes} DBI={dbi}")
    for row in res.sweep:
        d = "n/a" if row["dbi"] is None else f"{row['dbi']:.4f}"
        click.echo(f"  k={row['k']:<3} DBI={d:<8} distinct top labels={row['distinct_top_labels']}")


@fleet.command("mine")
@click.argument("risk_dir", type=click.Path(path_type=Path))
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--min-support-apps", type=click.IntRange(min=0), default=DEFAULT_MIN_SUPPORT_APPS, show_default=True)
@click.option("--min-conf", type=click.FloatRange(0, 1, min_open=True), default=DEFAULT_MIN_CONF, show_default=True)
def fleet_mine(risk_dir: Path, out: Path, min_support_apps: int, min_conf: float) -> None:
    """Mine label => label rules across the apps in RISK_DIR."""
    n = pipeline.run_mine(risk_dir, out, min_support_apps=min_support_apps, min_conf=min_conf)
    click.echo(f"{n} rule(s) written to {out / 'rules.csv'}")


@cli.command()
@click.argument("risk_dir", type=click.Path(path_type=Path))
def report(risk_dir: Path) -> None:
    """Print a risk table for the reports in RISK_DIR."""
    click.echo(pipeline.summarize(pipeline.load_risk_reports(risk_dir)), nl=False)


@cli.command("check-chain")
@click.argument("chain")
@catalog_option
def check_chain(chain: str, catalog: str | None) -> int:
    """Report whether CHAIN (e.g. CG,CC,BS) can detect every misuse type."""
    v = validate_chain(_ids(chain), load_taxonomy(catalog))
    click.echo(str(v))
    return EXIT_OK if v.valid else EXIT_INPUT


@cli.command()
@click.argument("root", type=click.Path(file_okay=False, path_type=Path))
@click.option("--apps", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth(root: Path, apps: int, seed: int) -> None:
    """Write a synthetic corpus (programs/ and reports/) under ROOT."""
    from cryptorisk.synth import make_corpus

    layout = make_corpus(root, apps, seed)
    click.echo(f"programs: {layout.programs}\nreports:  {layout.reports}")


def main(argv: list[str] | None = None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="cryptorisk", standalone_mode=False)
    except InvariantViolation as exc:
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_INVARIANT
    except ParseError as exc:
        click.echo("error: invalid input", err=True)
        for e in exc.errors:
            click.echo(f"  {exc.source + ': ' if exc.source else ''}{e}", err=True)
        return EXIT_INPUT
    except (CryptoRiskError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.exceptions.Exit as exc:
        return exc.exit_code
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
