import logging
from collections import OrderedDict
from pathlib import Path
import click
from multiseg.errors import DatasetError, EXIT_STORAGE, MultisegError
from multiseg.masks import load_mask

ERROR_PREFIX = "multiseg-error"


class ClickColoredLoggingFormatter(logging.Formatter):
    default_colors = {
        "error": dict(fg="red"),
        "exception": dict(fg="red"),
        "critical": dict(fg="red"),
        "debug": dict(fg="blue"),
        "warning": dict(fg="yellow"),
    }

    def __init__(self, fmt=None, datefmt=None, colors=None):
        super().__init__(fmt, datefmt)
        self.colors = colors or ClickColoredLoggingFormatter.default_colors

    def format(self, record):
        if record.exc_info:
            return logging.Formatter.format(self, record)
        level = record.levelname.lower()
        msg = logging.Formatter.format(self, record)
        if level in self.colors:
            msg = click.style("{}: ".format(level), **self.colors[level]) + msg
        return msg


class ClickLoggingHandler(logging.Handler):
    _use_stderr = True

    def emit(self, record):
        try:
            click.echo(self.format(record), err=self._use_stderr)
        except Exception:
            self.handleError(record)


def error_line(exc):
    """One machine-parseable line `multiseg-error:<kind>: <message>`."""
    if isinstance(exc, MultisegError):
        kind = exc.kind
    else:
        kind = "io"
    message = " ".join(str(exc).split())
    return "%s:%s: %s" % (ERROR_PREFIX, kind, message)


def exit_code_of(exc):
    return exc.exit_code if isinstance(exc, MultisegError) else EXIT_STORAGE


def read_mask_dir(directory, class_set=None, suffix=".mssm"):
    """All mask containers of a directory keyed by file stem, sorted by stem."""
    directory = Path(directory)
    paths = sorted(directory.glob("*" + suffix))
    if not paths:
        raise DatasetError("No %s files in %s" % (suffix, directory))
    return OrderedDict(
        (p.name[: -len(suffix)], load_mask(p, class_set).mask) for p in paths
    )


def parse_named_dir(ctx, param, value):
    """Callback turning NAME=DIR options into an ordered dict."""
    named = OrderedDict()
    for item in value:
        name, sep, directory = item.partition("=")
        if not sep or not name or not directory:
            raise click.BadParameter("expected NAME=DIR, got %r" % item)
        if name in named:
            raise click.BadParameter("model name %r given twice" % name)
        named[name] = Path(directory)
    return named
