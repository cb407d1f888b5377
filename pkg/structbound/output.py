import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from colorama import Fore, Style

from structbound.model import ENDS
from structbound.utils import format_float, timer

if TYPE_CHECKING:
    from structbound.energy import EnergyLedger
    from structbound.response import AdmittanceTable
    from structbound.solver1d import Trajectory1D
    from structbound.solver2d import Trajectory2D


class Table:
    columns: List[str]
    rows: List[List[float]]

    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        self.rows = []

    def __len__(self) -> int:
        return len(self.rows)

    @timer
    def add_row(self, values: Sequence[Any]):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append([float(v) for v in values])

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])


class BaseFormatter:
    name: str
    br = "\n"
    separator = ","

    @timer
    def render(self, table: Table) -> str:
        lines = [self.render_header(table.columns)]
        lines.extend(self.separator.join(self.render_value(v) for v in row) for row in table.rows)
        return self.br.join(lines) + self.br

    def render_header(self, columns: Sequence[str]) -> str:
        return self.separator.join(columns)

    def render_value(self, value: float) -> str:
        return format_float(value)


class CSVFormatter(BaseFormatter):
    name = "csv"


class ANSIFormatter(BaseFormatter):
    """
    Aligned columns with a coloured header, for summaries printed to the
    terminal. A single wide row is printed as one `name value` line per column.
    """
    name = "ansi"
    separator = "  "
    width = 14
    max_columns = 6

    def render(self, table):
        if len(table) != 1 or len(table.columns) <= self.max_columns:
            return super().render(table)
        name_width = max(len(c) for c in table.columns)
        lines = [
            Style.BRIGHT + Fore.CYAN + c.ljust(name_width) + Style.RESET_ALL + self.separator + self.render_value(v)
            for c, v in zip(table.columns, table.rows[0])
        ]
        return self.br.join(lines) + self.br

    def render_header(self, columns):
        return Style.BRIGHT + Fore.CYAN + self.separator.join(c.rjust(self.width) for c in columns) + Style.RESET_ALL

    def render_value(self, value):
        if not np.isfinite(value):
            return Fore.RED + ("%g" % value).rjust(self.width) + Fore.RESET
        return ("%.6g" % value).rjust(self.width)


FORMATTERS = {cls.name: cls for cls in (CSVFormatter, ANSIFormatter)}


def get_formatter(name: str = "csv") -> BaseFormatter:
    return FORMATTERS[name]()


### TABLES ####################################################################

def _components(prefix: str, end: str, k: int) -> List[str]:
    if k == 1:
        return [f"{prefix}_{end}"]
    return [f"{prefix}_{end}[{i}]" for i in range(k)]


def trajectory_table(trajectory: "Trajectory1D") -> Table:
    """`t, psi_B[...], psi_L[...], H_D, H_B, balance_residual`; energy columns only when ledgers were kept."""
    ends = [end for end in ENDS if trajectory.psi_B.get(end)]
    k = len(trajectory.psi_B[ends[0]][0]) if ends else 1
    columns = ["t"]
    for end in ends:
        columns += _components("psi_B", end, k)
    for end in ends:
        columns += _components("psi_L", end, k)
    with_energy = len(trajectory.ledgers) == len(trajectory.times) and bool(trajectory.ledgers)
    if with_energy:
        columns += ["H_D", "H_B", "balance_residual"]
    table = Table(columns)
    for idx, t in enumerate(trajectory.times):
        row: List[float] = [t]
        for end in ends:
            row.extend(trajectory.psi_B[end][idx])
        for end in ends:
            row.extend(trajectory.psi_L[end][idx])
        if with_energy:
            ledger = trajectory.ledgers[idx]
            row += [ledger.H_D_total, ledger.H_B_total, ledger.balance_residual_total]
        table.add_row(row)
    return table


def ring_table(trajectory: "Trajectory2D") -> Table:
    """`t, psi_B[theta_0..], H_B`."""
    n_theta = len(trajectory.psi_B[0]) if trajectory.psi_B else 0
    with_energy = len(trajectory.ledgers) == len(trajectory.times) and bool(trajectory.ledgers)
    columns = ["t"] + [f"psi_B[{j}]" for j in range(n_theta)] + (["H_B"] if with_energy else [])
    table = Table(columns)
    for idx, t in enumerate(trajectory.times):
        row = [t, *trajectory.psi_B[idx]]
        if with_energy:
            row.append(trajectory.ledgers[idx].H_B_total)
        table.add_row(row)
    return table


def ledger_table(ledgers: Sequence["EnergyLedger"]) -> Table:
    ends = sorted({end for ledger in ledgers for end in ledger.S_D})
    columns = ["t", "H_D", "H_B", "total", "external_power", "radiated_power", "friction_power"]
    for end in ends:
        columns += [f"S_D_{end}", f"interaction_power_{end}", f"balance_residual_{end}"]
    table = Table(columns)
    for ledger in ledgers:
        row = [
            ledger.time, ledger.H_D_total, ledger.H_B_total, ledger.total,
            ledger.external_power, ledger.radiated_power, ledger.friction_power,
        ]
        for end in ends:
            row += [
                ledger.S_D.get(end, 0.0),
                ledger.interaction_power.get(end, 0.0),
                ledger.balance_residual.get(end, 0.0),
            ]
        table.add_row(row)
    return table


def snapshot_table(values: np.ndarray, coordinates: Optional[np.ndarray] = None, label: str = "z") -> Table:
    """
    One field snapshot. 1D fields get a coordinate column and one column per
    component; disk fields are written as a matrix with rows r and columns theta.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    prefix = "psi" if label == "z" else "theta"
    columns = [label] + [f"{prefix}[{j}]" for j in range(values.shape[1])]
    if coordinates is None:
        coordinates = np.arange(values.shape[0], dtype=float)
    table = Table(columns)
    for coordinate, row in zip(coordinates, values):
        table.add_row([coordinate, *row])
    return table


def admittance_table(admittance: "AdmittanceTable") -> Table:
    table = Table(["re_zeta", "im_zeta", "re_val", "im_val", "err_bound"])
    for row in admittance.rows():
        table.add_row(row)
    return table


def error_table(rows: Sequence[Tuple[float, ...]], columns: Sequence[str]) -> Table:
    table = Table(columns)
    for row in rows:
        table.add_row(row)
    return table


def _numeric_items(prefix: str, value: Any) -> List[Tuple[str, float]]:
    """Flattens nested dicts and lists into dotted names; drops strings, flags and missing values."""
    if isinstance(value, dict):
        return [item for key, v in value.items() for item in _numeric_items(f"{prefix}.{key}" if prefix else key, v)]
    if isinstance(value, (list, tuple, np.ndarray)):
        return [item for idx, v in enumerate(value) for item in _numeric_items(f"{prefix}[{idx}]", v)]
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.integer, np.floating)):
        return []
    return [(prefix, float(value))]


def summary_table(summary: Dict[str, Any]) -> Table:
    """
    Terminal view of a command summary. Summaries with `rows` (sweeps) keep
    one table row per entry, everything else becomes a single row.
    """
    rows = summary.get("rows")
    if isinstance(rows, list) and rows and all(isinstance(row, dict) for row in rows):
        filled = [{k: np.nan if v is None else v for k, v in row.items()} for row in rows]
        columns = [name for name, _ in _numeric_items("", filled[0])]
        table = Table(columns)
        for row in filled:
            values = dict(_numeric_items("", row))
            table.add_row([values.get(c, np.nan) for c in columns])
        return table
    items = _numeric_items("", {k: v for k, v in summary.items() if k != "rows"})
    table = Table([name for name, _ in items])
    table.add_row([value for _, value in items])
    return table


### FILES #####################################################################

def write_table(table: Table, path: Union[str, Path], formatter: Optional[BaseFormatter] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text((formatter or CSVFormatter()).render(table))
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def dumps_json(data: Dict[str, Any]) -> str:
    """Python floats serialize with their shortest round-trip repr."""
    return json.dumps(_jsonable(data), indent=2, sort_keys=True)


def write_json(data: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data) + "\n")
    return path
