import functools
import logging
import sys
from typing import Any, Callable, Dict, Mapping, Optional

import click

from ..classes.configs import SyntheticSpec
from ..classes.element_types import SplitRole
from ..classes.errors import FotError, StageError
from ..logger.logger import LoggerManager
from ..synthetic.shapes import gen_synthetic
from ..utils.config_manager import ConfigMngr
from .gallery import GalleryWriter
from .tool import ABLATE, EVAL, EXTRACT, MINE, TRAIN_BASE, TRAIN_GEN, PipelineTool


def fail(stage: str, reason: str):
    """Reports exactly one machine-parsable line and exits nonzero."""
    reason = " ".join(str(reason).split())
    click.echo(f"error: {stage}: {reason}", err=True)
    sys.exit(1)


def guarded(stage: str) -> Callable:
    def decorator(command: Callable) -> Callable:
        @functools.wraps(command)
        def wrapper(*args, **kwargs):
            try:
                return command(*args, **kwargs)
            except StageError as error:
                fail(error.stage, error.reason)
            except (FotError, ValueError, LookupError, OSError) as error:
                fail(stage, str(error))

        return wrapper

    return decorator


def config_options(command: Callable) -> Callable:
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="key = value (or YAML) config file."),
        click.option("--seed", type=int, default=None, help="Overrides the config seed."),
        click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE",
                     help="Overrides any config key; repeatable."),
        click.option("--verbose", "-v", is_flag=True, help="Debug logging."),
        click.option("--quiet", "-q", is_flag=True, help="Warnings and errors only."),
        click.option("--log-file", type=click.Path(dir_okay=False), default=None,
                     help="Also write the log to this file."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def common_options(command: Callable) -> Callable:
    command = config_options(command)
    return click.option("--out", type=click.Path(file_okay=False), default=None,
                        help="Work directory for stage outputs.")(command)


def setup_logging(verbose: bool, quiet: bool, log_file: Optional[str]):
    manager = LoggerManager()
    if verbose:
        manager.setLevelForAll(logging.DEBUG)
    elif quiet:
        manager.setLevelForAll(logging.WARNING)
    if log_file:
        manager.attachFile(log_file)


def build_tool(
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    assignments,
    verbose: bool,
    quiet: bool,
    log_file: Optional[str],
    flag_overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineTool:
    """`flag_overrides` come from dedicated command flags and win over `--set`; None values are ignored."""
    setup_logging(verbose, quiet, log_file)
    overrides: Dict[str, Any] = {}
    for assignment in assignments:
        if "=" not in assignment:
            raise FotError(f"--set expects KEY=VALUE, got {assignment!r}")
        key, value = assignment.split("=", 1)
        overrides[key.strip()] = value.strip()
    overrides.update(flag_overrides or {})
    overrides["seed"] = seed
    overrides["work_dir"] = out
    return PipelineTool(ConfigMngr().load(config_path, overrides))


@click.group()
def cli():
    """Foreground object transformation pipeline for fine-grained few-shot classification."""


def stage_command(name: str, stage: str, help_text: str):
    @cli.command(name=name, help=help_text)
    @click.option("--force", is_flag=True, help="Recompute even when the stage is done.")
    @common_options
    @guarded(stage)
    def command(force: bool, **options):
        tool = build_tool(**options)
        path = tool.run_single(stage, force)
        if stage in (EVAL, ABLATE):
            click.echo(tool.read_table(stage))
        else:
            click.echo(path)

    return command


stage_command("train-base", TRAIN_BASE, "Train the feature extractor and base classifier.")
stage_command("train-gen", TRAIN_GEN, "Train the posture generator on the mined quadruplets.")
stage_command("eval", EVAL, "Episodic evaluation of the configured variant.")
stage_command("ablate", ABLATE, "Evaluate baseline, +RB, +RB&RF and full variants on shared episodes.")


def dataset_options(command: Callable) -> Callable:
    options = [
        click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None,
                     help="Image root, <class>/<file> layout."),
        click.option("--saliency", "saliency_dir", type=click.Path(file_okay=False), default=None,
                     help="Saliency cache mirroring the image root."),
        click.option("--work", "work_dir", type=click.Path(file_okay=False), default=None,
                     help="Work directory for stage outputs."),
        click.option("--force", is_flag=True, help="Recompute even when the stage is done."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@cli.command(name="extract")
@dataset_options
@click.option("--beta", type=float, default=None, help="Saliency threshold in [0, 255].")
@click.option("--size", "image_size", type=int, default=None, help="Side of the processed images.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Write processed images of every split here instead of a stage directory.")
@config_options
@guarded(EXTRACT)
def extract(data_dir, saliency_dir, work_dir, force, beta, image_size, out, **options):
    """Process images through the foreground extractor."""
    flags = dict(data_dir=data_dir, saliency_dir=saliency_dir, beta=beta, image_size=image_size)
    tool = build_tool(out=work_dir, flag_overrides=flags, **options)
    if out:
        tool.extract_to(out)
        click.echo(out)
    else:
        click.echo(tool.run_single(EXTRACT, force))


@cli.command(name="mine")
@dataset_options
@click.option("--count", "target_count", type=int, default=None, help="Target number of quadruplets.")
@click.option("--topm", "top_m", type=int, default=None, help="Nearest saliency maps considered per sample.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the quadruplet manifest to this file instead of a stage directory.")
@config_options
@guarded(MINE)
def mine(data_dir, saliency_dir, work_dir, force, target_count, top_m, out, **options):
    """Mine saliency-matched quadruplets from the base classes."""
    flags = dict(data_dir=data_dir, saliency_dir=saliency_dir, target_count=target_count, top_m=top_m)
    tool = build_tool(out=work_dir, flag_overrides=flags, **options)
    if out:
        tool.mine_to(out)
        click.echo(out)
    else:
        click.echo(tool.run_single(MINE, force))


@cli.command(name="run")
@common_options
@guarded("run")
def run(**options):
    """Run every stage not yet done for the config and print the report."""
    tool = build_tool(**options)
    click.echo(tool.run_pipeline())


@cli.command(name="augment")
@click.option("--episode", "episode_seed", type=int, default=0, help="Episode seed.")
@click.option("--dest", type=click.Path(file_okay=False), required=True,
              help="Directory receiving the augmented support images.")
@common_options
@guarded("augment")
def augment(episode_seed: int, dest: str, **options):
    """Write the generator-augmented support set of one episode."""
    tool = build_tool(**options)
    samples = tool.augment_episode(episode_seed, dest)
    click.echo(f"{len(samples)} support samples written to {dest}")


@cli.command(name="finetune")
@click.option("--episode", "episode_seed", type=int, default=0, help="Episode seed.")
@common_options
@guarded("finetune")
def finetune(episode_seed: int, **options):
    """Fine-tune on one episode and print its query accuracy."""
    tool = build_tool(**options)
    accuracy = tool.finetune_episode(episode_seed)
    click.echo(f"{100 * accuracy:.2f}")


@cli.command(name="gen-synth")
@click.option("--classes", "n_classes", type=int, default=SyntheticSpec.n_classes)
@click.option("--samples", "samples_per_class", type=int, default=SyntheticSpec.samples_per_class)
@click.option("--size", "image_size", type=int, default=SyntheticSpec.image_size)
@click.option("--clutter", "clutter_shapes", type=int, default=SyntheticSpec.clutter_shapes)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--force", is_flag=True, help="Overwrite a non-empty output directory.")
@click.option("--verbose", "-v", is_flag=True)
@guarded("gen-synth")
def gen_synth(n_classes, samples_per_class, image_size, clutter_shapes, seed, out, force, verbose):
    """Write the posed-shapes dataset and its oracle saliency cache."""
    setup_logging(verbose, False, None)
    spec = SyntheticSpec(
        n_classes=n_classes,
        samples_per_class=samples_per_class,
        image_size=image_size,
        clutter_shapes=clutter_shapes,
        seed=seed,
    )
    dataset = gen_synthetic(spec, out, force)
    click.echo(dataset.config_file)


@cli.command(name="gallery")
@click.option("--dest", type=click.Path(file_okay=False), required=True)
@click.option("--limit", type=int, default=8, help="Samples and quadruplets to dump.")
@common_options
@guarded("gallery")
def gallery(dest: str, limit: int, **options):
    """Dump extractor stages of a few base samples and mined quadruplets."""
    tool = build_tool(**options)
    writer = GalleryWriter(dest)
    samples = tool.registry().getSamplesOfRole(SplitRole.BASE)[:limit]
    writer.extractor_stages(samples, tool.saliency(), tool.cfg.extractor_config())
    if tool.cfg.use_generator and tool.is_done(MINE):
        base, _ = tool.processed_base()
        generator = tool.load_generator() if tool.is_done(TRAIN_GEN) else None
        writer.quadruplets(
            tool.load_quadruplets()[:limit],
            {sample.identifier: sample.pixels for sample in base},
            generator,
        )
    click.echo(dest)


def main():
    cli(prog_name="fot")
