"""Multi-label U-Net segmentation of electroluminescence images of PV cells."""

__version__ = "0.1.0"
__description__ = "Pixel-level multi-label defect segmentation of PV electroluminescence images"
__author__ = "Multiseg developers"
__email__ = ""
__uri__ = ""
__license__ = "Licensed under the MIT license"

from multiseg.errors import ConfigError, UnknownClassError  # noqa: E402

#: Mask channel order used everywhere (dark, busbar, crack, non-cell).
DEFAULT_CLASS_NAMES = ("dark", "busbar", "crack", "non-cell")


class ClassSet:
    """Ordered, unique defect class names. The order defines mask channel indices."""

    def __init__(self, names=DEFAULT_CLASS_NAMES):
        names = tuple(str(n) for n in names)
        if not names:
            raise ConfigError("A class set needs at least one class")
        if len(set(names)) != len(names):
            raise ConfigError("Class names must be unique: %s" % (names,))
        self.names = names

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self.names

    def __eq__(self, other):
        return isinstance(other, ClassSet) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return "ClassSet(%s)" % (list(self.names),)

    def index(self, name):
        """Channel index of `name`.

        Raises:
            UnknownClassError: If `name` is not part of the set.

        """
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownClassError(
                "Unknown class '%s'. Known classes: %s" % (name, list(self.names))
            ) from None
