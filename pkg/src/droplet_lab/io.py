"""CSV/JSON persistence, content digests and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> Path:
    """RFC-4180 CSV with a header row, LF line endings and round-trip float text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int
    version: str
    outputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    root: str = "."

    def add_output(self, path) -> None:
        rel = Path(os.path.relpath(path, self.root)).as_posix()
        self.outputs[rel] = sha256_file(path)

    def write(self) -> Path:
        return write_json(Path(self.root) / "manifest.json", {
            "command": self.command, "config": self.config, "seed": self.seed, "version": self.version,
            "outputs": self.outputs, "verdicts": self.verdicts, "timing": self.timing, "notes": self.notes,
        })


PLOT_TEMPLATE = '''"""Plot {title} from {csv_name}."""
import csv
import sys

import matplotlib.pyplot as plt

with open("{csv_name}", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in {ys!r}:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("{x}")
{yscale}ax.legend()
ax.set_title("{title}")
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{png}", dpi=150)
'''


def write_plot_script(path, csv_name: str, x: str, ys, title: str, logy: bool = False) -> Path:
    path = Path(path)
    text = PLOT_TEMPLATE.format(csv_name=csv_name, x=x, ys=list(ys), title=title,
                                yscale='ax.set_yscale("log")\n' if logy else "", png=path.stem + ".png")
    path.write_text(text, encoding="utf-8")
    return path
