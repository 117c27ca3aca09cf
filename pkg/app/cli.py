import asyncio
import functools
import json
import logging
from pathlib import Path

import click

from app.clients import pgm_client
from app.config import active_config
from app.errors import InpaintingError
from app.services import balanced_service, experiment_service, filterbank_service
from app.services.experiment_service import ExperimentSpec
from app.utils.calculations import psnr
from app.utils.helpers import format_psnr

IDENTITY_GRIDS = (16, 64, 256)
IDENTITY_TOLERANCE = 1e-12
ROUNDTRIP_TOLERANCE = 1e-10
KKT_TOLERANCE = 1e-6
ELASTIC_NET_INSTANCES = 20


def _report_errors(command):
    """Turn service errors into a one-line diagnostic and exit status 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except InpaintingError as error:
            raise click.ClickException(str(error)) from error
        except OSError as error:
            raise click.ClickException(f"{error.filename or 'file'}: {error.strerror}") from error

    return wrapper


@click.group(name="inpainting")
@click.option("--verbose", is_flag=True, help="Log every iteration.")
def cli(verbose: bool):
    """Framelet image inpainting toolkit."""
    level = logging.DEBUG if verbose else getattr(logging, active_config().LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command("inpaint")
@click.option("--image", required=True, help="PGM file or fixture:<name>.")
@click.option("--mask", "mask_path", default=None, help="PGM mask, >= 128 marks observed pixels.")
@click.option("--rate", type=float, default=None, help="Random missing rate instead of a mask file.")
@click.option("--sigma", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--levels", type=int, default=None)
@click.option("--algorithm", type=click.Choice(["tpctf6", "spline", "dct"]), default="tpctf6", show_default=True)
@click.option("--paste-observed", is_flag=True, help="Copy observed pixels into the output.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False), default=None, help="Append the report line here.")
@click.option("--no-timing", is_flag=True, help="Write '-' instead of the wall time.")
@_report_errors
def inpaint_command(image, mask_path, rate, sigma, seed, levels, algorithm, paste_observed, out, report, no_timing):
    spec = ExperimentSpec(
        image=image,
        mask=mask_path,
        rate=rate,
        sigma=sigma,
        seed=seed,
        algorithm=algorithm,
        levels=levels,
        paste_observed=paste_observed or None,
        output=out,
    )
    result = experiment_service.run_experiment(spec)
    line = experiment_service.format_report_line(result, include_timing=not no_timing)
    if report:
        with open(report, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
    click.echo(line)
    if not result.converged:
        click.echo("warning: iteration cap reached before the last threshold converged", err=True)


@cli.command("gen-mask")
@click.option("--width", type=int, required=True)
@click.option("--height", type=int, required=True)
@click.option("--rate", type=float, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_report_errors
def gen_mask_command(width, height, rate, seed, out):
    mask = experiment_service.gen_random_mask(width, height, rate, seed)
    pgm_client.save_mask(mask, out)
    click.echo(f"missing {mask.missing_ratio:.6f}")


@cli.command("add-noise")
@click.option("--image", required=True)
@click.option("--sigma", type=float, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_report_errors
def add_noise_command(image, sigma, seed, out):
    noisy = experiment_service.add_gaussian_noise(experiment_service.load_image(image), sigma, seed)
    pgm_client.save_pgm(noisy, out)


@cli.command("psnr")
@click.option("--ref", "reference", required=True)
@click.option("--test", "candidate", required=True)
@_report_errors
def psnr_command(reference, candidate):
    click.echo(format_psnr(psnr(pgm_client.load_pgm(reference), pgm_client.load_pgm(candidate))))


@cli.command("describe-bank")
@click.argument("name", default="tpctf6")
@_report_errors
def describe_bank_command(name):
    click.echo(filterbank_service.describe_bank(filterbank_service.resolve_bank(name)), nl=False)


@cli.command("batch")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--report", required=True, type=click.Path(dir_okay=False))
@click.option("--no-timing", is_flag=True)
@_report_errors
def batch_command(spec_file, report, no_timing):
    """Run a JSON list of experiment specs concurrently."""
    specs = [ExperimentSpec(**entry) for entry in json.loads(Path(spec_file).read_text(encoding="utf-8"))]
    reports = asyncio.run(experiment_service.run_batch(specs, report, include_timing=not no_timing))
    click.echo(f"{len(reports)} experiments written to {report}")


@cli.group("verify")
def verify():
    """Numerical self-checks."""


@verify.command("bank")
@click.option("--name", default="tpctf6", show_default=True)
@_report_errors
def verify_bank_command(name):
    bank = filterbank_service.resolve_bank(name)
    failed = False
    for size in IDENTITY_GRIDS:
        report = filterbank_service.verify_bank_identities(filterbank_service.sample_bank(bank, size))
        failed |= not report.passed(IDENTITY_TOLERANCE)
        click.echo(
            f"N={size} partition={report.partition_of_unity:.3e} "
            f"shift={report.shift_orthogonality:.3e}"
        )
    if failed:
        raise click.ClickException(f"bank {name} misses the identities by more than {IDENTITY_TOLERANCE:g}")


@verify.command("transform")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=100, show_default=True)
@_report_errors
def verify_transform_command(seed, count):
    checks = experiment_service.verify_transforms(filterbank_service.resolve_bank("tpctf6"), seed, count)
    worst = max(checks, key=lambda check: check.sup_error / check.scale)
    click.echo(
        f"{len(checks)} images worst roundtrip {worst.sup_error / worst.scale:.3e} "
        f"(N={worst.size} levels={worst.levels})"
    )
    failures = [c for c in checks if not c.passed(ROUNDTRIP_TOLERANCE)]
    if failures:
        raise click.ClickException(f"{len(failures)} of {len(checks)} images failed reconstruction")


@verify.command("grouping")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=200, show_default=True)
@_report_errors
def verify_grouping_command(seed, count):
    failed = 0
    for instance_seed, problem in balanced_service.grouping_corpus(seed, count):
        report = balanced_service.verify_grouping(problem, seed=instance_seed)
        if not report.passed or report.kkt > KKT_TOLERANCE:
            failed += 1
            click.echo(report.format_line(), err=True)
    click.echo(f"{count - failed}/{count} instances satisfy the grouping bounds")
    for instance_seed in range(seed, seed + ELASTIC_NET_INSTANCES):
        check = balanced_service.verify_elastic_net(instance_seed)
        if not check.passed():
            failed += 1
            click.echo(
                f"elastic net seed={instance_seed} disagreement={check.disagreement:.3e} "
                f"violations={check.bound_violations}",
                err=True,
            )
    if failed:
        raise click.ClickException(f"{failed} grouping checks failed")


def main():
    cli(prog_name="python -m app")
