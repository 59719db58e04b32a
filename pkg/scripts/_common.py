import tempfile
import warnings
from pathlib import Path

from scadafusion.fusion import assign_labels, encode, fuse_bundle, scale
from scadafusion.scenario import ScenarioSpec, generate_scenario


def bundle(root: Path, name: str, **spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_scenario(ScenarioSpec(**spec), Path(root) / name)


def fused(b):
    """Fused table, scaled feature matrix and attack-window labels of a bundle."""
    table = fuse_bundle(b.directory)
    return table, scale(encode(table)), assign_labels(table, "attack_window", b.windows).labels


def workdir(arg):
    return Path(arg) if arg else Path(tempfile.mkdtemp(prefix="scadafusion-"))
