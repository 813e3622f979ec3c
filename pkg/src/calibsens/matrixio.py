"""Matrix manifests for externally solved models, and report tables.

A manifest is a TOML file naming the parameters and moments, giving point
values, and pointing at one CSV file per matrix (or holding the matrix
inline as a list of rows)::

    [names]
    theta = ["a", "b"]
    gamma = ["c"]
    moments = ["m1", "m2", "m3"]
    h = ["delta"]            # optional

    [values]
    theta_hat = [0.5, 1.2]
    gamma_hat = [0.04]
    h_hat = [19.2]           # with h

    [matrices]
    g = "g.csv"
    G = "G.csv"
    D = "D.csv"
    W = "W.csv"
    A = "A.csv"              # optional, with B
    B = "B.csv"
    C_theta = "C_theta.csv"  # optional, with C_gamma
    C_gamma = "C_gamma.csv"

Each CSV has a header row of column names and a leading column of row
names, both in manifest order. Vectors are single-column files.
"""

import csv
import io
import sys
from pathlib import Path

import numpy as np
import tomli_w

from .sensitivity import MomentBundle, QoIJacobians, extrapolate_percent

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ManifestError",
    "load_manifest",
    "emit_manifest",
    "format_number",
    "ElasticityPanel",
    "emit_elasticity_table",
    "emit_extrapolation_table",
    "percent_header",
]

SYMMETRY_TOL = 1e-8
FORMATS = ("csv", "markdown")


class ManifestError(ValueError):
    """A manifest or one of its matrix files is malformed."""


# ---------------------------------------------------------------------------
# labels of matrix rows and columns


def _second_order_rows(moments, theta):
    # vec(G') order: the estimated-parameter index runs fastest
    return [f"{m}|{t}" for m in moments for t in theta]


def _labels(names):
    th, ga, mo, h = names["theta"], names["gamma"], names["moments"], names.get("h")
    return {
        "g": (mo, ["g"]),
        "G": (mo, th),
        "D": (mo, ga),
        "W": (mo, mo),
        "C_theta": (_second_order_rows(mo, th), th),
        "C_gamma": (_second_order_rows(mo, th), ga),
        "A": (h, ga),
        "B": (h, th),
    }


# ---------------------------------------------------------------------------
# reading


def _read_csv(path, rows, cols, what):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{what}: cannot read {path}: {exc.strerror}") from exc
    table = [r for r in csv.reader(io.StringIO(text)) if r]
    if not table:
        raise ManifestError(f"{path}: empty file")
    header = table[0][1:]
    if header != list(cols):
        raise ManifestError(f"{path}: header {header} does not match the expected columns {list(cols)}")
    body = table[1:]
    if len(body) != len(rows):
        raise ManifestError(f"{path}: {len(body)} data rows, expected {len(rows)}")
    out = np.empty((len(rows), len(cols)))
    for i, line in enumerate(body):
        row_no = i + 2
        if line[0] != rows[i]:
            raise ManifestError(f"{path}: row {row_no} is named {line[0]!r}, expected {rows[i]!r}")
        if len(line) != len(cols) + 1:
            raise ManifestError(f"{path}: row {row_no} has {len(line) - 1} values, expected {len(cols)}")
        for j, cell in enumerate(line[1:]):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ManifestError(f"{path}: row {row_no}, column {j + 2}: cannot parse {cell!r}") from None
    return out


def _inline(block, rows, cols, what, manifest):
    try:
        arr = np.array(block, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"{manifest}: inline matrix {what} is not numeric: {exc}") from None
    if arr.ndim == 1 and len(cols) == 1:
        arr = arr[:, None]
    if arr.shape != (len(rows), len(cols)):
        expected = (len(rows), len(cols))
        raise ManifestError(f"{manifest}: inline matrix {what} has shape {arr.shape}, expected {expected}")
    return arr


def _unique(names, what, manifest):
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ManifestError(f"{manifest}: names.{what} must be a list of strings")
    if len(set(names)) != len(names):
        raise ManifestError(f"{manifest}: names.{what} are not unique")
    return names


def _vector(values, key, n, manifest):
    if key not in values:
        raise ManifestError(f"{manifest}: values.{key} is missing")
    try:
        v = np.array(values[key], dtype=float)
    except (TypeError, ValueError):
        raise ManifestError(f"{manifest}: values.{key} is not numeric") from None
    if v.shape != (n,):
        raise ManifestError(f"{manifest}: values.{key} has {v.size} entries, expected {n}")
    return v


def load_manifest(path):
    """Read a manifest and its matrices; returns ``(bundle, qoi_or_None)``."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from exc

    names = doc.get("names", {})
    for key in ("theta", "gamma", "moments"):
        if key not in names:
            raise ManifestError(f"{path}: names.{key} is missing")
        _unique(names[key], key, path)
    if "h" in names:
        _unique(names["h"], "h", path)
    labels = _labels(names)

    mats = doc.get("matrices", {})
    unknown = sorted(set(mats) - set(labels))
    if unknown:
        raise ManifestError(f"{path}: unknown matrices {unknown}")
    for key in ("g", "G", "D", "W"):
        if key not in mats:
            raise ManifestError(f"{path}: matrices.{key} is missing")
    if ("A" in mats or "B" in mats) and "h" not in names:
        raise ManifestError(f"{path}: A and B need names.h")
    if ("A" in mats) != ("B" in mats):
        raise ManifestError(f"{path}: A and B must be given together")

    loaded = {}
    for key, ref in mats.items():
        rows, cols = labels[key]
        if isinstance(ref, str):
            loaded[key] = _read_csv(path.parent / ref, rows, cols, f"{path}: matrices.{key}")
        else:
            loaded[key] = _inline(ref, rows, cols, key, path)

    W = loaded["W"]
    diag = np.diag(W)
    if np.any(diag < 0):
        i = int(np.flatnonzero(diag < 0)[0])
        raise ManifestError(f"{path}: W has a negative diagonal entry at row {i + 1}, column {i + 1} ({diag[i]})")
    asym = np.abs(W - W.T)
    if asym.max() > SYMMETRY_TOL:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise ManifestError(f"{path}: W is not symmetric at row {i + 1}, column {j + 1} (difference {asym[i, j]:.3e})")
    # exact symmetry for the bundle; the deviation allowed here is below its own check
    W = 0.5 * (W + W.T) if asym.max() > 0 else W

    values = doc.get("values", {})
    theta_hat = _vector(values, "theta_hat", len(names["theta"]), path)
    gamma_hat = _vector(values, "gamma_hat", len(names["gamma"]), path)
    try:
        bundle = MomentBundle(
            g=loaded["g"][:, 0],
            G=loaded["G"],
            D=loaded["D"],
            W=W,
            theta_hat=theta_hat,
            gamma_hat=gamma_hat,
            C_theta=loaded.get("C_theta"),
            C_gamma=loaded.get("C_gamma"),
            theta_names=names["theta"],
            gamma_names=names["gamma"],
            moment_names=names["moments"],
        )
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from exc

    qoi = None
    if "A" in loaded:
        h_hat = _vector(values, "h_hat", len(names["h"]), path)
        qoi = QoIJacobians(A=loaded["A"], B=loaded["B"], h_hat=h_hat, h_names=names["h"])
    return bundle, qoi


# ---------------------------------------------------------------------------
# writing


def format_number(x):
    """17 significant digits: enough to read back the same double."""
    return format(float(x), ".17g")


def _write_csv(path, matrix, rows, cols):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([""] + list(cols))
    for name, line in zip(rows, np.atleast_2d(matrix)):
        writer.writerow([name] + [format_number(x) for x in line])
    path.write_text(buf.getvalue())


def emit_manifest(bundle, directory, qoi=None, name="manifest.toml"):
    """Write ``bundle`` (and optional QoI Jacobians) as manifest plus CSVs.

    Returns the manifest path. Existing files of the same names are replaced.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = {
        "theta": list(bundle.theta_names),
        "gamma": list(bundle.gamma_names),
        "moments": list(bundle.moment_names),
    }
    values = {"theta_hat": bundle.theta_hat.tolist(), "gamma_hat": bundle.gamma_hat.tolist()}
    mats = {"g": bundle.g[:, None], "G": bundle.G, "D": bundle.D, "W": bundle.W}
    if bundle.has_second_order:
        mats["C_theta"] = bundle.C_theta
        mats["C_gamma"] = bundle.C_gamma
    if qoi is not None:
        names["h"] = list(qoi.h_names)
        values["h_hat"] = qoi.h_hat.tolist()
        mats["A"] = qoi.A
        mats["B"] = qoi.B

    labels = _labels(names)
    refs = {}
    for key, matrix in mats.items():
        rows, cols = labels[key]
        fname = f"{key}.csv"
        _write_csv(directory / fname, matrix, rows, cols)
        refs[key] = fname

    path = directory / name
    path.write_text(tomli_w.dumps({"names": names, "values": values, "matrices": refs}))
    return path


# ---------------------------------------------------------------------------
# report tables


class ElasticityPanel:
    """One block of a side-by-side elasticity table.

    ``E`` is ``rows x cols``; masked entries print as "n/a".
    """

    def __init__(self, E, row_names, col_names, label=""):
        self.E = np.ma.atleast_2d(np.ma.asarray(E, dtype=float))
        self.row_names = tuple(row_names)
        self.col_names = tuple(col_names)
        self.label = label
        if self.E.shape != (len(self.row_names), len(self.col_names)):
            raise ValueError(f"E has shape {self.E.shape}, names give {(len(self.row_names), len(self.col_names))}")

    @classmethod
    def from_result(cls, result, label=None):
        return cls(result.E, result.theta_names, result.gamma_names, result.method if label is None else label)


def _cell(x, masked):
    return "n/a" if masked else f"{float(x):.3f}"


def _render(header, rows, fmt):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}; use one of {FORMATS}")


def emit_elasticity_table(panels, fmt="csv", corner="parameter"):
    """Elasticities with rows = estimates (or statistics), columns = calibrated
    parameters; several panels are placed side by side.

    ``panels`` is an ``ElasticityPanel``, a result with ``E``/names/``method``,
    or a list of these. All panels must share row names. With more than one
    panel, column headers read ``label:name``.
    """
    if not isinstance(panels, (list, tuple)):
        panels = [panels]
    panels = [p if isinstance(p, ElasticityPanel) else ElasticityPanel.from_result(p) for p in panels]
    if not panels:
        raise ValueError("no panels to emit")
    rows = panels[0].row_names
    for p in panels[1:]:
        if p.row_names != rows:
            raise ValueError("panels have different row names")
    multi = len(panels) > 1
    header = [corner]
    for p in panels:
        header += [f"{p.label}:{c}" if multi else c for c in p.col_names]
    body = []
    for i, name in enumerate(rows):
        line = [name]
        for p in panels:
            mask = np.ma.getmaskarray(p.E)
            line += [_cell(p.E.data[i, j], mask[i, j]) for j in range(len(p.col_names))]
        body.append(line)
    return _render(header, body, fmt)


def percent_header(percents):
    return [f"{float(p):g} pct." for p in percents]


def emit_extrapolation_table(
    row_names,
    percents,
    approx=None,
    robust=None,
    brute=None,
    fixed_theta=None,
    fmt="csv",
    fixed_row_names=None,
):
    """Percent changes from finite changes in one calibrated parameter.

    ``approx`` and ``robust`` are elasticity columns, extrapolated linearly;
    ``brute`` and ``fixed_theta`` are ``len(row_names) x len(percents)``
    percent changes computed elsewhere. Missing panels are left out. With no
    percents only the header is emitted.
    """
    percents = list(percents)
    header = ["panel", "row"] + percent_header(percents)
    if fmt == "markdown":
        header = [""] + percent_header(percents)
    panels = []
    if approx is not None:
        panels.append(("Approximate", row_names, extrapolate_percent(approx, percents)))
    if robust is not None:
        panels.append(("Robust", row_names, extrapolate_percent(robust, percents)))
    if brute is not None:
        panels.append(("Brute", row_names, np.ma.atleast_2d(np.ma.asarray(brute, dtype=float))))
    if fixed_theta is not None:
        names = row_names if fixed_row_names is None else fixed_row_names
        panels.append(("Fixed-theta", names, np.ma.atleast_2d(np.ma.asarray(fixed_theta, dtype=float))))

    body = []
    if percents:
        for label, names, table in panels:
            if table.shape != (len(names), len(percents)):
                raise ValueError(f"{label} panel has shape {table.shape}, expected {(len(names), len(percents))}")
            mask = np.ma.getmaskarray(table)
            if fmt == "markdown":
                body.append([f"*{label}*"] + [""] * len(percents))
            for i, name in enumerate(names):
                cells = [_cell(table.data[i, j], mask[i, j]) for j in range(len(percents))]
                body.append(([name] if fmt == "markdown" else [label, name]) + cells)
    return _render(header, body, fmt)
