import logging
from pathlib import Path
import click
from multiseg import train as training
from multiseg.config import load_run_config
from multiseg.dataset import load_records
from multiseg.errors import ConfigError
from multiseg.evaluate import evaluate_corpus, format_report
from multiseg.scripts import options
from multiseg.unet import build_unet, load_weights

logger = logging.getLogger(__name__)


def _data_config(ctx, param, value):
    """Default --config to the config.json written by `multiseg prepare`."""
    if value is None:
        candidate = Path(ctx.params.get("datadir", ".")) / "config.json"
        if candidate.is_file():
            return str(candidate)
    return value


def _load(datadir, config_path, overrides, seed, **flags):
    cfg = load_run_config(config_path, overrides, seed, **flags)
    train_records, class_set = load_records(Path(datadir) / "train.npz")
    val_records, _ = load_records(Path(datadir) / "val.npz")
    if class_set != cfg.class_set:
        raise ConfigError(
            "Records hold classes %s, configuration has %s" % (list(class_set), list(cfg.class_set))
        )
    return cfg, train_records, val_records


prepared_arg = click.argument(
    "datadir", type=click.Path(exists=True, file_okay=False), nargs=1, is_eager=True
)
runs_arg = click.argument("runroot", type=click.Path(file_okay=False), nargs=1)
config_default_opt = click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    callback=_data_config,
    help="JSON run configuration file. Defaults to DATADIR/config.json when present.",
)
training_flags = [
    click.option("--depth", type=int, default=None, help="Pooling stages (unet.depth)"),
    click.option("--width", type=int, default=None, help="First stage width (unet.base_width)"),
    click.option("--epochs", type=int, default=None, help="Maximum epochs (train.max_epochs)"),
    click.option("--patience", type=int, default=None, help="Early-stop patience (train.patience)"),
    click.option("--batch-size", type=int, default=None, help="Mini-batch size (train.batch_size)"),
]


def training_opts(f):
    for option in reversed(training_flags):
        f = option(f)
    return f


@click.command()
@prepared_arg
@runs_arg
@config_default_opt
@options.set_opt
@options.seed_opt
@options.jobs_opt
@click.option("--lr", type=float, default=None, help="Learning rate (train.learning_rate)")
@click.option(
    "--resume",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Start from this weights file instead of a fresh initialization",
)
@training_opts
def train(
    datadir, runroot, config_path, overrides, seed, jobs, lr, resume, depth, width, epochs,
    patience, batch_size,
):
    r"""Train a U-Net with early stopping on prepared records.

    Reads DATADIR/train.npz and DATADIR/val.npz and writes a new numbered run directory under
    RUNROOT holding config.json, curves.csv, weights.mssw and summary.json. Existing runs are
    never overwritten.

    Example:

    multiseg train --depth 2 --width 8 --epochs 20 prepared/ runs/

    """
    cfg, train_records, val_records = _load(
        datadir,
        config_path,
        overrides,
        seed,
        jobs=jobs,
        train__learning_rate=lr,
        train__max_epochs=epochs,
        train__patience=patience,
        train__batch_size=batch_size,
        unet__depth=depth,
        unet__base_width=width,
    )
    if resume:
        model = load_weights(resume, cfg.unet)
        logger.info("Resuming from %s", resume)
    else:
        model = build_unet(cfg.unet, cfg.train.seed)
    result = training.fit(model, train_records, val_records, cfg.train)
    evaluation = evaluate_corpus(
        result.model, val_records, cfg.threshold, cfg.train.batch_size, cfg.class_set
    )

    run = training.RunDirectory.create(runroot)
    run.write_config(cfg.to_dict())
    run.write_curves(result.curves)
    run.save_weights(result.model)
    run.write_summary(
        {
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "epochs": len(result.curves),
            "learning_rate": cfg.train.learning_rate,
            "resumed_from": str(resume) if resume else None,
            "validation": evaluation.suite.to_dict(),
        }
    )
    click.echo("Run written to %s (best epoch %d)" % (run.path, result.best_epoch))
    click.echo(format_report(evaluation.suite), nl=False)


@click.command()
@prepared_arg
@runs_arg
@config_default_opt
@options.set_opt
@options.seed_opt
@options.jobs_opt
@click.option("--folds", type=int, default=None, help="Outer folds (train.outer_folds)")
@click.option("--inner-folds", type=int, default=None, help="Inner folds (train.inner_folds)")
@training_opts
def cv(
    datadir, runroot, config_path, overrides, seed, jobs, folds, inner_folds, depth, width,
    epochs, patience, batch_size,
):
    r"""Nested cross-validation with a learning-rate grid search in every outer fold.

    Folds are assigned on the base images of DATADIR (train and validation together) and
    augmented afterwards. Writes config.json, folds.json and summary.json to a new run
    directory under RUNROOT.

    Example:

    multiseg cv --folds 5 --depth 2 --width 4 prepared/ runs/

    """
    cfg, train_records, val_records = _load(
        datadir,
        config_path,
        overrides,
        seed,
        jobs=jobs,
        train__outer_folds=folds,
        train__inner_folds=inner_folds,
        train__max_epochs=epochs,
        train__patience=patience,
        train__batch_size=batch_size,
        unet__depth=depth,
        unet__base_width=width,
    )
    bases = [r for r in train_records + val_records if r.variant == "none"]
    result = training.nested_cv(
        bases, cfg.unet, cfg.train, cfg.threshold, cfg.class_set, cfg.jobs
    )
    run = training.RunDirectory.create(runroot)
    run.write_config(cfg.to_dict())
    run.write_json("folds.json", [f.to_dict() for f in result.folds])
    run.write_summary(result.summary)
    for fold in result.folds:
        click.echo(
            "fold %d: lr %s, accuracy %.6f, dice %.6f"
            % (fold.fold, fold.learning_rate, fold.metrics.macro["accuracy"], fold.metrics.macro["dice"])
        )
    accuracy = result.summary["accuracy"]
    click.echo(
        "%d-fold CV accuracy %.6f +- %.6f, selected lr %s"
        % (len(result.folds), accuracy["mean"], accuracy["sd"], result.summary["selected_lr"])
    )
    click.echo("Run written to %s" % run.path)
