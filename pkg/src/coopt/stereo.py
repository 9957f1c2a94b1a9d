"""Stereo matching on a 4-connected pixel grid with the simple cooperative form.

Every pixel agent owns a horizontal and a vertical spanning tree of the grid.
Because the tree weights and the soft-decision input are the same for every
root, one set of four directional chain passes per tree family yields the
root profiles of all agents at once.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decomposition import GridCoefficients, check_grid
from .errors import (
    DisparityTooLarge,
    MalformedHeader,
    SizeMismatch,
    TruncatedData,
)
from .generators import grid_edges
from .problem import Problem, evaluate_energy
from .solver import RunTrace, TraceRow


# --- PGM io -----------------------------------------------------------------


@dataclass
class GrayImage:
    width: int
    height: int
    data: np.ndarray  # (height, width) unsigned ints
    maxval: int = 255

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != (self.height, self.width):
            raise SizeMismatch(
                f"data shape {self.data.shape} != ({self.height}, {self.width})"
            )


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise MalformedHeader("header ends early")
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    return tokens, pos


def parse_pgm(buf: bytes) -> GrayImage:
    tokens, pos = _header_tokens(buf, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise MalformedHeader(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from None
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise MalformedHeader(f"bad header values {width}x{height} maxval {maxval}")
    count = width * height
    if magic == b"P2":
        values = []
        for line in buf[pos:].splitlines():
            values += line.split(b"#", 1)[0].split()
        if len(values) < count:
            raise TruncatedData(f"{len(values)} of {count} samples")
        data = np.array([int(v) for v in values[:count]], dtype=np.uint16 if maxval > 255 else np.uint8)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(buf) - pos < need:
            raise TruncatedData(f"{len(buf) - pos} of {need} bytes")
        data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(
            np.uint16 if maxval > 255 else np.uint8
        )
    return GrayImage(width, height, data.reshape(height, width), maxval)


def load_pgm(path: str | os.PathLike) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(img: GrayImage, binary: bool = True) -> bytes:
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n{img.maxval}\n".encode()
    if binary:
        dtype = ">u2" if img.maxval > 255 else "u1"
        return header + np.asarray(img.data).astype(dtype).tobytes()
    rows = [" ".join(str(int(v)) for v in row) for row in np.asarray(img.data)]
    return header + ("\n".join(rows) + "\n").encode()


def save_pgm(img: "GrayImage | DisparityMap", path: str | os.PathLike, binary: bool = True) -> None:
    if isinstance(img, DisparityMap):
        img = img.to_image()
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, binary))


@dataclass
class DisparityMap:
    labels: np.ndarray  # (height, width) ints
    scale: int = 1
    maxval: int = 255

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def to_image(self) -> GrayImage:
        vals = np.clip(np.asarray(self.labels, dtype=np.int64) * self.scale, 0, self.maxval)
        dtype = np.uint16 if self.maxval > 255 else np.uint8
        return GrayImage(self.width, self.height, vals.astype(dtype), self.maxval)

    @classmethod
    def from_image(cls, img: GrayImage, scale: int = 1) -> "DisparityMap":
        return cls(np.asarray(img.data, dtype=np.int64) // max(scale, 1), scale, img.maxval)


# --- energy construction ----------------------------------------------------


@dataclass(frozen=True)
class StereoConfig:
    """Matching and smoothness constants.

    The truncation thresholds and smoothness weight are free parameters of
    the energy; the defaults are working values, not tuned results.
    """

    d_max: int = 8
    match_cost: str = "absolute"  # or "squared"
    tau_match: float = 20.0
    smoothness: float = 20.0
    tau_smooth: float = 2.0
    alpha: float = 0.16
    max_iter: int = 16
    threads: int = 1


def unary_costs(left: GrayImage, right: GrayImage, cfg: StereoConfig) -> np.ndarray:
    """``(rows, cols, d_max+1)`` truncated matching cost of left pixel vs right
    pixel shifted by the disparity; out-of-frame samples cost ``tau_match``."""
    if (left.width, left.height) != (right.width, right.height):
        raise SizeMismatch("left and right images differ in size")
    if cfg.d_max < 1 or cfg.d_max >= left.width:
        raise DisparityTooLarge(f"d_max={cfg.d_max} for width {left.width}")
    lf = np.asarray(left.data, dtype=float)
    rf = np.asarray(right.data, dtype=float)
    rows, cols = lf.shape
    cost = np.full((rows, cols, cfg.d_max + 1), float(cfg.tau_match))
    power = 2 if cfg.match_cost == "squared" else 1
    for d in range(cfg.d_max + 1):
        diff = np.abs(lf[:, d:] - rf[:, : cols - d]) ** power
        cost[:, d:, d] = np.minimum(cfg.tau_match, diff)
    return cost


def smoothness_table(cfg: StereoConfig) -> np.ndarray:
    d = np.arange(cfg.d_max + 1)
    return cfg.smoothness * np.minimum(cfg.tau_smooth, np.abs(d[:, None] - d[None, :])).astype(float)


def build_stereo_problem(left: GrayImage, right: GrayImage, cfg: StereoConfig) -> Problem:
    cost = unary_costs(left, right, cfg)
    rows, cols, labels = cost.shape
    pair = smoothness_table(cfg)
    unary = list(cost.reshape(rows * cols, labels))
    binary = {e: pair for e in grid_edges(rows, cols)}
    return Problem([labels] * (rows * cols), unary, binary)


@dataclass
class GridEnergy:
    """Dense arrays of a grid problem: unary (M, N, L), horizontal pair tables
    (M, N-1, L, L) indexed [left, right], vertical (M-1, N, L, L) indexed [top, bottom]."""

    unary: np.ndarray
    horizontal: np.ndarray
    vertical: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.unary.shape[:2]

    @classmethod
    def from_problem(cls, p: Problem, rows: int, cols: int) -> "GridEnergy":
        check_grid(p, rows, cols)
        sizes = set(p.domain_sizes)
        if len(sizes) != 1:
            raise SizeMismatch("grid sweeps need one label count for every pixel")
        L = sizes.pop()
        unary = np.array(p.unary).reshape(rows, cols, L)
        hor = np.zeros((rows, max(cols - 1, 0), L, L))
        ver = np.zeros((max(rows - 1, 0), cols, L, L))
        for r in range(rows):
            for c in range(cols - 1):
                i = r * cols + c
                hor[r, c] = p.binary[(i, i + 1)]
        for r in range(rows - 1):
            for c in range(cols):
                i = r * cols + c
                ver[r, c] = p.binary[(i, i + cols)]
        return cls(unary, hor, ver)

    def energy(self, labels: np.ndarray) -> float:
        return float(sum(self.energy_terms(labels)[:3]))

    def energy_terms(self, labels: np.ndarray):
        """Unary total, per-row horizontal totals, per-column vertical totals."""
        lab = np.asarray(labels).reshape(self.shape)
        rows, cols = self.shape
        u = np.take_along_axis(self.unary, lab[..., None], axis=2)[..., 0]
        h = self.horizontal[np.arange(rows)[:, None], np.arange(cols - 1)[None, :], lab[:, :-1], lab[:, 1:]]
        v = self.vertical[np.arange(rows - 1)[:, None], np.arange(cols)[None, :], lab[:-1, :], lab[1:, :]]
        return float(u.sum()), float(h.sum()), float(v.sum()), u, h.sum(axis=1), v.sum(axis=0)


# --- sweep solver -------------------------------------------------------------


def _chain_messages(pot: np.ndarray, tables: np.ndarray, coef: float):
    """Forward and backward min-sum messages along axis 0 of ``pot``.

    ``pot`` is (K, B, L) for K chain positions and B independent chains;
    ``tables`` is (K-1, B, L, L) indexed [earlier, later]. Returns arrays fwd,
    bwd of shape (K, B, L): what each position receives from before / after.
    """
    k = pot.shape[0]
    fwd = np.zeros_like(pot)
    bwd = np.zeros_like(pot)
    for t in range(1, k):
        src = pot[t - 1] + fwd[t - 1]
        fwd[t] = (src[:, :, None] + coef * tables[t - 1]).min(axis=1)
    for t in range(k - 2, -1, -1):
        src = pot[t + 1] + bwd[t + 1]
        bwd[t] = (coef * tables[t] + src[:, None, :]).min(axis=2)
    return fwd, bwd


def _split(n: int, parts: int) -> list[slice]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class GridSweeper:
    """Simple-form iteration over the horizontal/vertical tree pair of a grid."""

    def __init__(self, grid: GridEnergy, alpha: float, threads: int = 1):
        self.g = grid
        self.alpha = float(alpha)
        self.threads = max(1, int(threads))
        rows, cols = grid.shape
        self.k = GridCoefficients(rows, cols)

    def _columns(self, pot: np.ndarray, sl: slice):
        # chains run down each column: axis 0 = row
        return _chain_messages(pot[:, sl], self.g.vertical[:, sl], self.k.c)

    def _rows(self, pot: np.ndarray, sl: slice):
        # chains run along each row: transpose so axis 0 = column
        p = pot[sl].transpose(1, 0, 2)
        t = self.g.horizontal[sl].transpose(1, 0, 2, 3)
        f, b = _chain_messages(p, t, self.k.b)
        return f.transpose(1, 0, 2), b.transpose(1, 0, 2)

    def _pass(self, kind: str, pot: np.ndarray) -> np.ndarray:
        """Sum of both directional messages arriving at every node."""
        rows, cols = self.g.shape
        out = np.empty_like(pot)
        if kind == "col":
            slices = _split(cols, self.threads)

            def work(sl):
                f, b = self._columns(pot, sl)
                out[:, sl] = f + b
        else:
            slices = _split(rows, self.threads)

            def work(sl):
                f, b = self._rows(pot, sl)
                out[sl] = f + b

        if self.threads > 1 and len(slices) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(work, slices))
        else:
            for sl in slices:
                work(sl)
        return out

    def profiles(self, psi_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Root profiles of every horizontal tree and every vertical tree."""
        u = self.k.a * self.g.unary + (self.alpha / 2) * psi_prev
        col_belief = u + self._pass("col", u)
        psi_h = col_belief + self._pass("row", col_belief)
        row_belief = u + self._pass("row", u)
        psi_v = row_belief + self._pass("col", row_belief)
        return psi_h, psi_v

    def step(self, psi_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """New (offset) soft decisions and the unshifted per-agent minima."""
        psi_h, psi_v = self.profiles(psi_prev)
        total = psi_h + psi_v
        raw_min = total.min(axis=2)
        return total - raw_min[..., None], raw_min

    def modified_values(self, psi_prev: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Every agent's modified sub-objective evaluated at one labeling."""
        unary_t, h_all, v_all, _, h_row, v_col = self.g.energy_terms(labels)
        lab = np.asarray(labels).reshape(self.g.shape)
        soft = np.take_along_axis(psi_prev, lab[..., None], axis=2)[..., 0].sum()
        k = self.k
        e_h = k.a * unary_t + k.b * h_row[:, None] + k.c * v_all
        e_v = k.a * unary_t + k.c * v_col[None, :] + k.b * h_all
        return e_h + e_v + self.alpha * soft


@dataclass
class SweepResult:
    trace: RunTrace
    disparity: DisparityMap
    energy: float
    psi: np.ndarray
    states: list[np.ndarray] = field(default_factory=list)


def sweep_solver(
    p: Problem,
    rows: int,
    cols: int,
    alpha: float = 0.16,
    max_iter: int = 16,
    threads: int = 1,
    keep_states: bool = False,
    consensus_tol: float = 1e-9,
) -> SweepResult:
    """Run the simple form on a grid problem; returns the lowest-energy iterate."""
    grid = GridEnergy.from_problem(p, rows, cols)
    sweeper = GridSweeper(grid, alpha, threads)
    psi = np.zeros_like(grid.unary)
    trace = RunTrace(initial_lower_bound=0.0, lower_bound_valid=False)
    best = None
    states = []
    for k in range(1, max_iter + 1):
        new, raw_min = sweeper.step(psi)
        labels = new.argmin(axis=2)
        energy = grid.energy(labels)
        mod = sweeper.modified_values(psi, labels)
        consensus = bool((mod - raw_min <= consensus_tol).all())
        delta = float(np.abs(new - psi).max())
        trace.rows.append(
            TraceRow(k, tuple(int(x) for x in labels.ravel()), energy, float(new.min(axis=2).sum()),
                     consensus, delta, False, False, alpha)
        )
        if best is None or energy < best[0]:
            best = (energy, labels)
        psi = new
        if keep_states:
            states.append(new.copy())
    energy, labels = best
    return SweepResult(trace, DisparityMap(labels), energy, psi, states)


def reference_states(p: Problem, rows: int, cols: int, alpha: float, iters: int):
    """Same iteration through the generic per-root tree DP, for cross-checking."""
    from .decomposition import grid_hv_decomposition
    from .solver import CooperativeSolver, SolverConfig, SolverState

    d = grid_hv_decomposition(rows, cols, p)
    solver = CooperativeSolver(p, d, None, SolverConfig("simple", alpha=alpha))
    state = SolverState.zeros(p)
    out = []
    for k in range(1, iters + 1):
        state = solver.step(state, k)
        out.append(np.array(state.psi).reshape(rows, cols, -1))
    return out


# --- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class DisparityMetrics:
    bad_fraction: float
    rms: float
    pixels: int

    @property
    def bad_pct(self) -> float:
        return 100.0 * self.bad_fraction


def evaluate_disparity(
    result: DisparityMap, truth: DisparityMap, threshold: float = 1.0, mask: np.ndarray | None = None
) -> DisparityMetrics:
    """Share of pixels off by more than ``threshold`` and RMS label error."""
    a = np.asarray(result.labels, dtype=float)
    b = np.asarray(truth.labels, dtype=float)
    if a.shape != b.shape:
        raise SizeMismatch(f"{a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    diff = diff.ravel()
    if diff.size == 0:
        return DisparityMetrics(0.0, 0.0, 0)
    return DisparityMetrics(
        float((diff > threshold).mean()), float(np.sqrt((diff**2).mean())), int(diff.size)
    )


# --- synthetic data and the end-to-end pipeline -------------------------------


def synthetic_pair(rows: int, cols: int, d_max: int, seed: int = 0):
    """Random-texture pair with a piecewise-constant disparity field.

    Returns ``(left, right, truth, visible)``; ``visible`` marks left pixels
    whose match lies inside the right image.
    """
    rng = np.random.default_rng(seed)
    truth = np.full((rows, cols), max(1, d_max // 4), dtype=np.int64)
    truth[rows // 4 : rows // 2, cols // 4 : 3 * cols // 4] = d_max
    truth[rows // 2 : 7 * rows // 8, cols // 8 : cols // 2] = d_max // 2
    right = rng.integers(0, 256, size=(rows, cols))
    left = rng.integers(0, 256, size=(rows, cols))
    cc = np.arange(cols)[None, :] - truth
    visible = cc >= 0
    rr = np.broadcast_to(np.arange(rows)[:, None], (rows, cols))
    left[visible] = right[rr[visible], cc[visible]]
    to_img = lambda a: GrayImage(cols, rows, a.astype(np.uint8), 255)  # noqa: E731
    return to_img(left), to_img(right), DisparityMap(truth), visible


def run_stereo(
    left_path: str | os.PathLike,
    right_path: str | os.PathLike,
    cfg: StereoConfig,
    out_path: str | os.PathLike | None = None,
    truth_path: str | os.PathLike | None = None,
    scale: int = 1,
    log=print,
) -> dict:
    left, right = load_pgm(left_path), load_pgm(right_path)
    t0 = time.perf_counter()
    p = build_stereo_problem(left, right, cfg)
    res = sweep_solver(p, left.height, left.width, cfg.alpha, cfg.max_iter, cfg.threads)
    seconds = time.perf_counter() - t0
    for r in res.trace.rows:
        log(f"iter {r.iter} energy {r.energy!r}")
    final = evaluate_energy(p, res.disparity.labels.ravel())
    log(f"final energy {final!r}")
    disp = DisparityMap(res.disparity.labels, scale)
    if out_path is not None:
        save_pgm(disp, out_path)
    summary = {"energy": final, "bad_pct": float("nan"), "rms": float("nan"), "seconds": seconds}
    if truth_path is not None:
        truth = DisparityMap.from_image(load_pgm(truth_path), scale)
        m = evaluate_disparity(disp, truth)
        summary.update(bad_pct=m.bad_pct, rms=m.rms)
    return summary
