"""SDPA sparse (.dat-s) export and import of moment problems.

The file encodes the standard SDPA primal form

    minimize    c . x
    subject to  X = sum_k x_k F_k - F_0,   X >= 0 (block diagonal)

A MomentProblem (a maximization) maps onto it with x = y and c = -f:
block 1 carries the Gram matrix, block 2 is a diagonal block holding one
slack per inequality and a pair of opposing slacks per equality.  Entry
lines are `matno blockno i j value` with 1-indexed upper-triangle positions;
matno 0 addresses F_0.

The reader parses any conforming .dat-s file back into SdpaData, which
`solve_sdpa` feeds to the same conic backend — used to check that exported
files round-trip to the original optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import clarabel

from qpvbounds.npa import MomentProblem
from qpvbounds.backend import SolverSettings, _SQRT2


@dataclass
class SdpaData:
    nvars: int
    block_sizes: list[int]  # negative size = diagonal block
    c: np.ndarray
    # entries[(matno, blockno)] = list of (i, j, value), 0-indexed, i <= j
    entries: dict[tuple[int, int], list[tuple[int, int, float]]] = field(
        default_factory=dict
    )


def write_sdpa(problem: MomentProblem, path: str, comment: str | None = None) -> None:
    n = problem.nvars
    diag = 2 * len(problem.equalities) + len(problem.inequalities)
    c = np.zeros(n)
    for k, v in problem.objective.items():
        c[k] = -v

    lines: list[str] = []
    if comment:
        for part in comment.splitlines():
            lines.append(f'"{part}')
    lines.append(f"{n}")
    lines.append("2" if diag else "1")
    lines.append(f"{problem.dim} {-diag}" if diag else f"{problem.dim}")
    lines.append(" ".join(format(v, ".17g") for v in c))

    def entry(matno: int, blk: int, i: int, j: int, val: float) -> None:
        if val != 0.0:
            lines.append(f"{matno} {blk} {i + 1} {j + 1} {format(val, '.17g')}")

    for i, j, var in problem.gram:
        entry(var + 1, 1, i, j, 1.0)

    r = 0
    for eq in problem.equalities:
        # eq: sum a.y = e  ->  slack rows (sum a.y - e >= 0) and (e - sum a.y >= 0)
        for k, v in eq.coeffs.items():
            entry(k + 1, 2, r, r, v)
            entry(k + 1, 2, r + 1, r + 1, -v)
        entry(0, 2, r, r, eq.const)
        entry(0, 2, r + 1, r + 1, -eq.const)
        r += 2
    for ineq in problem.inequalities:
        # ineq: sum a.y <= u  ->  slack row (u - sum a.y >= 0)
        for k, v in ineq.coeffs.items():
            entry(k + 1, 2, r, r, -v)
        entry(0, 2, r, r, -ineq.const)
        r += 1

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path: str) -> SdpaData:
    raw: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith(('"', "*")):
                continue
            raw.append(line)

    def numbers(s: str) -> list[float]:
        for ch in ",(){}":
            s = s.replace(ch, " ")
        return [float(tok) for tok in s.split()]

    nvars = int(numbers(raw[0])[0])
    nblocks = int(numbers(raw[1])[0])
    block_sizes = [int(v) for v in numbers(raw[2])]
    if len(block_sizes) != nblocks:
        raise ValueError("block structure line does not match block count")
    c = np.asarray(numbers(raw[3]))
    if len(c) != nvars:
        raise ValueError("objective line does not match variable count")
    data = SdpaData(nvars=nvars, block_sizes=block_sizes, c=c)
    for line in raw[4:]:
        vals = numbers(line)
        if len(vals) != 5:
            raise ValueError(f"malformed entry line: {line!r}")
        matno, blk, i, j, val = int(vals[0]), int(vals[1]), int(vals[2]), int(vals[3]), vals[4]
        if not 0 <= matno <= nvars or not 1 <= blk <= nblocks:
            raise ValueError(f"entry indices out of range: {line!r}")
        i, j = i - 1, j - 1
        if i > j:
            i, j = j, i
        data.entries.setdefault((matno, blk), []).append((i, j, val))
    return data


def solve_sdpa(data: SdpaData, settings: SolverSettings | None = None) -> float:
    """Solve parsed SDPA data directly; returns the SDPA objective c.x."""
    settings = settings or SolverSettings()
    offsets = []
    r = 0
    for size in data.block_sizes:
        offsets.append(r)
        r += -size if size < 0 else size * (size + 1) // 2
    total = r

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b = np.zeros(total)

    def pos(blk: int, i: int, j: int) -> int:
        size = data.block_sizes[blk - 1]
        if size < 0:
            assert i == j
            return offsets[blk - 1] + i
        return offsets[blk - 1] + j * (j + 1) // 2 + i

    for (matno, blk), items in data.entries.items():
        diag_block = data.block_sizes[blk - 1] < 0
        for i, j, val in items:
            scale = 1.0 if (i == j or diag_block) else _SQRT2
            if matno == 0:
                # X = sum x_k F_k - F0: constant enters b with a minus sign
                b[pos(blk, i, j)] -= val * scale
            else:
                rows.append(pos(blk, i, j))
                cols.append(matno - 1)
                vals.append(-val * scale)

    A = sp.csc_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(total, data.nvars)
    )
    cones = []
    for size in data.block_sizes:
        if size < 0:
            cones.append(clarabel.NonnegativeConeT(-size))
        else:
            cones.append(clarabel.PSDTriangleConeT(size))

    cfg = clarabel.DefaultSettings()
    cfg.verbose = settings.verbose
    cfg.max_iter = settings.max_iter
    cfg.tol_gap_abs = settings.tol
    cfg.tol_gap_rel = settings.tol
    cfg.tol_feas = settings.tol
    cfg.static_regularization_constant = settings.static_reg
    P = sp.csc_matrix((data.nvars, data.nvars))
    solution = clarabel.DefaultSolver(P, data.c, A, b, cones, cfg).solve()
    if str(solution.status) not in ("Solved", "AlmostSolved"):
        raise RuntimeError(f"SDPA round-trip solve failed: {solution.status}")
    return float(np.dot(data.c, np.asarray(solution.x)))
