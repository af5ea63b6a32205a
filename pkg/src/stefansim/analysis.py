"""Energy functionals and diagnostic identities over stored trajectories.

A trajectory is a uniformly spaced sequence of state snapshots plus the
equation-substituted time derivatives at the initial instant.  The energy
table is built in one pass: instantaneous squared norms feed running
maxima (the C^0-in-time terms) and trapezoid accumulators (the
L^2-in-time terms), and each snapshot emits one report row.

Time derivatives at the initial instant come from equation substitution;
at later snapshots from second-order finite differences over the snapshot
ring.  The interface speed is differentiated as its own stored series, so
no stored field needs more than two time derivatives.  Interior Sobolev
norms above third order in y compose first/second difference stencils,
and rows embedding them carry a lower-confidence flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    Grid,
    NeedsMoreStepsError,
    NumericsError,
    boundary_norm,
    edge_derivative,
    integrate_boundary,
    integrate_interior,
    interior_norm,
    tangential_derivative,
    tangential_derivatives_upto,
    time_derivative,
    vertical_derivative,
)
from .geometry import metric_bundle
from .mollifier import smooth_horizontal
from .operators import curl_residual, gradient
from .stepper import KAPPA, SolverConfig


class UsageError(NumericsError):
    """The diagnostic was applied to an unsuitable trajectory or pair."""


def _orders_leq(n: int):
    return [(a, b) for b in range(n // 2 + 1) for a in range(n - 2 * b + 1)]


def _orders_eq(n: int):
    return [(n - 2 * b, b) for b in range(n // 2 + 1)]


@dataclass
class Trajectory:
    """Snapshots of one run at uniform cadence, plus run-level records."""

    config: SolverConfig
    times: list
    snaps: list
    margins: list
    initial_derivatives: dict
    dissipation: list = field(default_factory=list)
    status: str = "completed"
    flags: tuple = ()

    def __post_init__(self):
        self._bundles: dict = {}
        self._rates: list | None = None

    @property
    def grid(self) -> Grid:
        return self.config.grid

    def bundle_at(self, idx: int):
        idx = idx % len(self.times)
        if idx not in self._bundles:
            self._bundles[idx] = metric_bundle(self.grid, self.snaps[idx]["phi"])
        return self._bundles[idx]

    def rates(self) -> list:
        """The height's time-derivative series (h_t at every snapshot).

        The initial instant uses the equation-substituted value; later
        instants difference the stored heights, so synthetic frozen
        trajectories carry an identically zero series.  Entries are None
        where the snapshot ring cannot support the stencil.
        """
        if self._rates is None:
            h_series = [s["h"] for s in self.snaps]
            out = [self.initial_derivatives["h_t"]]
            for i in range(1, len(self.times)):
                try:
                    out.append(time_derivative(self.times, h_series, 1, i))
                except NeedsMoreStepsError:
                    out.append(None)
            self._rates = out
        return self._rates

    def __len__(self) -> int:
        return len(self.times)


_INITIAL_KEYS = {("q", 1): "q_t", ("q", 2): "q_tt", ("h", 1): "h_t",
                 ("h", 2): "h_tt", ("v", 1): "v_t", ("w", 1): "w_t",
                 ("rate", 1): "h_tt"}


class _DerivativeProvider:
    """Field and time-derivative access for one snapshot of a trajectory."""

    def __init__(self, traj: Trajectory, idx: int):
        self.traj = traj
        self.idx = idx if idx >= 0 else len(traj) + idx
        self._cache: dict = {}

    def _series(self, name: str) -> list:
        if name == "rate":
            return self.traj.rates()
        return [s[name] for s in self.traj.snaps]

    def __call__(self, name: str, b: int = 0) -> np.ndarray:
        key = (name, b)
        if key in self._cache:
            return self._cache[key]
        # the map offset's first time derivative is the stored map velocity
        if name == "phi" and b >= 1:
            out = self("w", b - 1)
        elif b == 0:
            if name == "rate":
                out = self._series(name)[self.idx]
                if out is None:
                    raise NeedsMoreStepsError("height-rate series unsupported here")
            else:
                out = self.traj.snaps[self.idx][name]
        elif self.idx == 0 and key in _INITIAL_KEYS:
            out = self.traj.initial_derivatives[_INITIAL_KEYS[key]]
        else:
            series = self._series(name)
            if any(entry is None for entry in series):
                raise NeedsMoreStepsError(f"{name} series unsupported here")
            out = time_derivative(self.traj.times, series, b, self.idx)
        self._cache[key] = out
        return out

    def try_call(self, name: str, b: int):
        """Like __call__ but None when the ring cannot support the stencil."""
        try:
            return self(name, b)
        except NeedsMoreStepsError:
            return None


def _boundary_sq(grid: Grid, phi: np.ndarray, weight=None) -> float:
    """Squared edge L^2 norm (Fourier convention) with optional weight."""
    if weight is None:
        return boundary_norm(phi, 0.0) ** 2
    return integrate_boundary(weight * phi * phi, grid) / (2.0 * np.pi)


def _interior_sq(grid: Grid, f: np.ndarray) -> float:
    return float(integrate_interior(f * f, grid))


def _derivative_ladder(f: np.ndarray, amax: int) -> list:
    if amax == 0:
        return [f]
    return [f] + tangential_derivatives_upto(f, range(1, amax + 1))


class _Accumulator:
    """Running max / trapezoid-in-time of a family of squared norms.

    Entries reported as None (stencil not supported at that instant) are
    carried as zero in the integrals and skipped in the maxima.
    """

    def __init__(self):
        self.max: dict = {}
        self.integral: dict = {}
        self._last: dict = {}
        self._last_t: float | None = None

    def update(self, t: float, values: dict) -> None:
        for k, val in values.items():
            if val is None:
                val = 0.0
            else:
                prev = self.max.get(k)
                if prev is None or val > prev:
                    self.max[k] = val
            if self._last_t is not None:
                self.integral[k] = self.integral.get(k, 0.0) + 0.5 * (
                    t - self._last_t
                ) * (self._last.get(k, 0.0) + val)
            else:
                self.integral.setdefault(k, 0.0)
            self._last[k] = val
        self._last_t = t

    def sum_max(self, keys) -> float:
        return float(sum(self.max.get(k, 0.0) for k in keys))

    def sum_int(self, keys) -> float:
        return float(sum(self.integral.get(k, 0.0) for k in keys))


@dataclass(frozen=True)
class EnergyReport:
    """All functional values and identity residuals at one time instant.

    ``energy`` is the base higher-order functional; ``energy_kappa`` adds
    the width^2-weighted interface-speed families (NaN outside the
    regularized mode; the smoothed variant replaces the raw height by its
    layer-smoothed version).  ``lower_order`` is the reduced-order monitor,
    ``natural_energy`` the coercive quadratic form whose flux-weighted edge
    terms require a positive stability margin (NaN otherwise), and
    ``natural_energy_sigma`` its surface-tension extension.
    """

    t: float
    energy: float
    energy_sigma: float
    energy_kappa: float
    energy_kappa_smoothed: float
    lower_order: float
    natural_energy: float
    natural_energy_sigma: float
    taylor_margin: float
    curl_residual: float
    slip_residual: float
    curvature_identity_error: float
    dissipation_residual: float
    interface_speed_mean: float
    interface_flux_mean: float
    norm_energy_ratio: float
    graph_sup: float
    low_confidence_high_order: bool = True

    COLUMNS = (
        "t", "energy", "energy_sigma", "energy_kappa", "energy_kappa_smoothed",
        "lower_order", "natural_energy", "natural_energy_sigma",
        "taylor_margin", "curl_residual", "slip_residual",
        "curvature_identity_error", "dissipation_residual",
        "interface_speed_mean", "interface_flux_mean", "norm_energy_ratio",
        "graph_sup", "low_confidence_high_order",
    )

    def row(self):
        out = []
        for name in self.COLUMNS:
            val = getattr(self, name)
            if isinstance(val, (bool, np.bool_)):
                out.append("1" if val else "0")
            elif val != val:
                out.append("")
            else:
                out.append(format(float(val), ".17g"))
        return out


def geometric_identities(traj: Trajectory, idx: int = -1) -> dict:
    """Curl, slip, curvature-identity, and interface-speed records.

    The curvature identity compares the second tangential derivative of
    the effective height against the tangential-velocity quotient; only
    edge points whose normal speed clears a tenth of the stability margin
    enter.  For a positive interface temperature (surface tension) the
    slip value is a record, not a residual: the identity's hypothesis
    fails there.
    """
    grid = traj.grid
    idx = idx % len(traj)
    snap = traj.snaps[idx]
    bundle = traj.bundle_at(idx)
    v = snap["v"]
    curl = curl_residual(grid, bundle, v)
    ve = v[:, :, 0]
    vn = ve[0] * bundle.normal[0] + ve[1] * bundle.normal[1]
    vt = ve[0] * bundle.tangent[0] + ve[1] * bundle.tangent[1]
    slip = float(np.max(np.abs(vt)))

    margin = traj.margins[idx]
    d2h = tangential_derivative(bundle.height, 2)
    dv = tangential_derivative(ve, 1, axis=-1)
    dv_tau = dv[0] * bundle.tangent[0] + dv[1] * bundle.tangent[1]
    mask = np.abs(vn) >= 0.1 * max(margin, 0.0)
    if margin > 0.0 and np.any(mask):
        rhs = bundle.line_el**2 * dv_tau / vn
        num = float(np.max(np.abs((d2h - rhs)[mask])))
        den = max(float(np.max(np.abs(d2h[mask]))), 1e-14)
        curv_err = num / den
    else:
        curv_err = float("nan")

    rate = bundle.line_el * vn
    flux = bundle.jac_edge * edge_derivative(snap["q"], grid.hy, 1)
    return {
        "curl_residual": curl,
        "slip_residual": slip,
        "curvature_identity_error": curv_err,
        "interface_speed_mean": float(np.mean(rate)),
        "interface_flux_mean": float(np.mean(flux)),
    }


def _instant_norms(traj: Trajectory, idx: int, kappa: float) -> dict:
    """All squared norms entering the functionals, at one snapshot."""
    grid = traj.grid
    get = _DerivativeProvider(traj, idx)
    out = {}

    # interior velocity families
    for b, amax in ((0, 4), (1, 2), (2, 0)):
        vb = get.try_call("v", b)
        if vb is None:
            for a in range(amax + 1):
                out[("v", a, b)] = None
            continue
        for a, va in enumerate(_derivative_ladder(vb, amax)):
            out[("v", a, b)] = _interior_sq(grid, va[0]) + _interior_sq(grid, va[1])

    # temperature Sobolev families
    for b in range(3):
        qb = get.try_call("q", b)
        for s in (4 - 2 * b, 5 - 2 * b):
            out[("qH", s, b)] = (
                None if qb is None else interior_norm(qb, grid, s) ** 2
            )

    # edge geometry weights at this instant
    bundle = traj.bundle_at(idx)
    jac_e = bundle.jac_edge
    g_e = bundle.line_el
    margin = traj.margins[idx]
    q2_edge = edge_derivative(traj.snaps[idx]["q"], grid.hy, 1)
    flux_w = q2_edge / jac_e if margin > 0.0 else None

    # height families, raw and layer-smoothed, plus the sigma-weighted ones
    for b in range(3):
        hb = get.try_call("h", b)
        amax = 4 - 2 * b
        if hb is None:
            for s in (4 - 2 * b, 5 - 2 * b):
                out[("hB", s, b)] = None
                out[("hBs", s, b)] = None
            for a in range(amax + 1):
                out[("wh", a, b)] = None
                out[("sigh", a, b)] = None
            continue
        hs = smooth_horizontal(hb, kappa) if kappa > 0 else hb
        for s in (4 - 2 * b, 5 - 2 * b):
            out[("hB", s, b)] = boundary_norm(hb, s) ** 2
            out[("hBs", s, b)] = boundary_norm(hs, s) ** 2
        ladder_s = _derivative_ladder(hs, amax)
        for a in range(amax + 1):
            out[("wh", a, b)] = (
                None if flux_w is None else _boundary_sq(grid, ladder_s[a], flux_w)
            )
        sig_ladder = _derivative_ladder(hb, amax + 1)
        for a in range(amax + 1):
            out[("sigh", a, b)] = _boundary_sq(
                grid, sig_ladder[a + 1], g_e**-3 / jac_e
            )

    # interface-speed families (the stored h_t law and its derivatives)
    for b, amax in ((0, 4), (1, 2), (2, 0)):
        rb = get.try_call("rate", b)
        if rb is None:
            for a in range(amax + 1):
                for fam in ("ht", "htJ", "htJ2", "wht", "sight"):
                    out[(fam, a, b)] = None
            continue
        for s in (3 - 2 * b, 4 - 2 * b):
            if s >= 0:
                out[("htB", s, b)] = boundary_norm(rb, s) ** 2
        rs = smooth_horizontal(rb, kappa) if kappa > 0 else rb
        ladder = _derivative_ladder(rb, amax)
        ladder_s = _derivative_ladder(rs, amax) if kappa > 0 else ladder
        sig_ladder = _derivative_ladder(rb, amax + 1)
        for a in range(amax + 1):
            out[("ht", a, b)] = _boundary_sq(grid, ladder[a])
            out[("htJ", a, b)] = _boundary_sq(grid, ladder[a], 1.0 / jac_e)
            out[("htJ2", a, b)] = _boundary_sq(grid, ladder[a], 1.0 / jac_e**2)
            out[("wht", a, b)] = (
                None if flux_w is None else _boundary_sq(grid, ladder_s[a], flux_w)
            )
            out[("sight", a, b)] = _boundary_sq(
                grid, sig_ladder[a + 1], g_e**-3 / jac_e
            )

    # gauge-combination interior families at the identity orders
    v = get("v")
    x = grid.xs[:, None]
    y = grid.ys[None, :]
    for fam, shift, orders in (("combo", 0, _orders_eq(4)),
                               ("combot", 1, _orders_eq(3))):
        for a, b in orders:
            qab = get.try_call("q", b + shift)
            pb = get.try_call("phi", b + shift) if b + shift else get("phi")
            if qab is None or pb is None:
                out[(fam, a, b)] = None
                continue
            psi = _map_derivative(get, a, b + shift, x, y)
            out[(fam, a, b)] = _interior_sq(
                grid, _dx(qab, a) + psi[0] * v[0] + psi[1] * v[1]
            )
    return out


def _dx(f: np.ndarray, a: int) -> np.ndarray:
    return tangential_derivative(f, a) if a else f


def _map_derivative(get, a, b, x, y):
    """d^a_x d^b_t of the gauge map; the identity part is handled exactly."""
    if b == 0:
        phi = get("phi")
        pa = _dx(phi, a)
        if a == 0:
            return np.stack((x + pa[0], y + pa[1]))
        if a == 1:
            pa = pa.copy()
            pa[0] += 1.0
        return pa
    return _dx(get("phi", b), a)


def energy_table(traj: Trajectory) -> list:
    """One EnergyReport per snapshot, cumulative in time."""
    cfg = traj.config
    kappa = cfg.kappa if cfg.mode == KAPPA else 0.0
    sigma = cfg.sigma
    acc = _Accumulator()
    reports = []

    k2 = kappa * kappa
    leq4, leq3 = _orders_leq(4), _orders_leq(3)
    eq4, eq3 = _orders_eq(4), _orders_eq(3)
    leq2, leq1 = _orders_leq(2), _orders_leq(1)

    dis_max = 0.0
    dis_iter = iter(traj.dissipation)
    dis_next = next(dis_iter, None)

    for idx, t in enumerate(traj.times):
        vals = _instant_norms(traj, idx, kappa)
        acc.update(t, vals)
        while dis_next is not None and dis_next[0] <= t + 1e-15:
            dis_max = max(dis_max, abs(dis_next[1]))
            dis_next = next(dis_iter, None)

        v_int = acc.sum_int([("v",) + ab for ab in leq4])
        v_max = acc.sum_max([("v",) + ab for ab in leq3])
        q_max = acc.sum_max([("qH", 4 - 2 * b, b) for b in range(3)])
        q_int = acc.sum_int([("qH", 5 - 2 * b, b) for b in range(3)])
        h_max = acc.sum_max([("hB", 4 - 2 * b, b) for b in range(3)])
        hs_max = acc.sum_max([("hBs", 4 - 2 * b, b) for b in range(3)])
        ht_int = acc.sum_int([("htB", 3 - 2 * b, b) for b in range(2)])

        energy = v_int + v_max + q_max + q_int + h_max + ht_int

        e_sig = energy
        if sigma > 0.0:
            e_sig = energy + sigma * (
                acc.sum_max([("hB", 5 - 2 * b, b) for b in range(3)])
                + acc.sum_int([("htB", 4 - 2 * b, b) for b in range(2)])
            ) + sigma**2 * h_max

        ht_l2 = acc.sum_int([("ht",) + ab for ab in leq4])
        ht_c0 = acc.sum_max([("ht",) + ab for ab in leq3])
        e_kap = energy + k2 * (ht_l2 + ht_c0) if kappa > 0 else float("nan")
        e_kap_s = (
            energy - h_max + hs_max + k2 * (ht_l2 + ht_c0)
            if kappa > 0 else float("nan")
        )

        lower = (
            acc.sum_int([("v",) + ab for ab in leq2])
            + acc.sum_max([("v",) + ab for ab in leq1])
            + k2 * acc.sum_int([("ht",) + ab for ab in leq2])
            + k2 * acc.sum_max([("ht",) + ab for ab in leq1])
            + acc.sum_max([("qH", 2 - 2 * b, b) for b in range(2)])
            + acc.sum_int([("qH", 3 - 2 * b, b) for b in range(2)])
            + acc.sum_max([("hBs", 2 - 2 * b, b) for b in range(2)])
            + acc.sum_int([("hBs", 3 - 2 * b, b) for b in range(2)])
        )

        whs = [acc.max.get(("wh",) + ab, float("nan")) for ab in eq4]
        whts = [acc.integral.get(("wht",) + ab, float("nan")) for ab in eq3]
        f_core = (
            v_int + 0.5 * v_max
            + 0.5 * acc.sum_max([("combo",) + ab for ab in eq4])
            + acc.sum_int([("combot",) + ab for ab in eq3])
        )
        f_edge = 0.5 * float(np.sum(whs)) + float(np.sum(whts))
        f_kap = f_core + f_edge + k2 * (
            acc.sum_int([("htJ",) + ab for ab in leq4])
            + 0.5 * acc.sum_max([("htJ2",) + ab for ab in leq3])
        )
        f_sig = f_core + f_edge
        if sigma > 0.0:
            f_sig = f_sig + 0.5 * sigma * acc.sum_max(
                [("sigh",) + ab for ab in leq4]
            ) + sigma * acc.sum_int([("sight",) + ab for ab in leq3])

        idents = geometric_identities(traj, idx)
        bundle = traj.bundle_at(idx)
        graph_sup = float(np.max(bundle.dheight**2))
        ratio = e_kap / f_kap if kappa > 0 and f_kap > 0 else float("nan")

        reports.append(EnergyReport(
            t=t,
            energy=energy,
            energy_sigma=e_sig,
            energy_kappa=e_kap,
            energy_kappa_smoothed=e_kap_s,
            lower_order=lower,
            natural_energy=f_kap,
            natural_energy_sigma=f_sig,
            taylor_margin=traj.margins[idx],
            dissipation_residual=dis_max,
            norm_energy_ratio=ratio,
            graph_sup=graph_sup,
            **idents,
        ))
    return reports


def energy_report(traj: Trajectory) -> EnergyReport:
    """The cumulative report at the trajectory's final instant."""
    return energy_table(traj)[-1]


def natural_edge_terms(traj: Trajectory, idx: int = -1) -> list:
    """The flux-weighted edge summands of the natural energy at one instant.

    Each is nonnegative whenever the stability margin is positive; exposed
    separately so that coercivity can be checked term by term.
    """
    idx = idx % len(traj)
    kappa = traj.config.kappa if traj.config.mode == KAPPA else 0.0
    vals = _instant_norms(traj, idx, kappa)
    out = []
    for ab in _orders_eq(4):
        out.append(vals[("wh",) + ab])
    for ab in _orders_eq(3):
        out.append(vals[("wht",) + ab])
    return out


def mixed_cnorm(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """Max-norm trajectory distance: values, time derivative, gradient,
    Hessian of the temperature plus the edge analog in the height.

    The convergence metric for the vanishing-surface-tension comparison.
    """
    if traj_a.grid.nx != traj_b.grid.nx or traj_a.grid.ny != traj_b.grid.ny:
        raise UsageError("trajectories live on different grids")
    if len(traj_a) != len(traj_b) or not np.allclose(
        traj_a.times, traj_b.times, rtol=0.0, atol=1e-12
    ):
        raise UsageError("trajectories have mismatched snapshot times")
    grid = traj_a.grid
    best_q = 0.0
    best_h = 0.0
    for idx in range(len(traj_a)):
        ga = _DerivativeProvider(traj_a, idx)
        gb = _DerivativeProvider(traj_b, idx)
        dq = ga("q") - gb("q")
        dqt = ga("q", 1) - gb("q", 1)
        grad = gradient(grid, dq)
        d11 = tangential_derivative(dq, 2)
        d12 = tangential_derivative(grad[1])
        d22 = vertical_derivative(grad[1], grid.hy, 1)
        hess = np.sqrt(d11 * d11 + 2.0 * d12 * d12 + d22 * d22)
        pointwise = (np.abs(dq) + np.abs(dqt)
                     + np.hypot(grad[0], grad[1]) + hess)
        best_q = max(best_q, float(np.max(pointwise)))
        dh = ga("h") - gb("h")
        dht = ga("h", 1) - gb("h", 1)
        d1h, d2h = tangential_derivatives_upto(dh, (1, 2))
        edge = np.abs(dh) + np.abs(dht) + np.abs(d1h) + np.abs(d2h)
        best_h = max(best_h, float(np.max(edge)))
    return best_q + best_h


def dissipation_residual(traj: Trajectory) -> float:
    """Largest normalized defect of the energy dissipation law on the run.

    Only meaningful for the pinned-zero interface condition (the law has
    no boundary production term there); the per-step series is recorded by
    the stepper during the run.
    """
    if traj.config.mode != "classical" or traj.config.sigma != 0.0:
        raise UsageError("dissipation law requires the classical mode")
    if not traj.dissipation:
        return 0.0
    return float(max(abs(d) for _, d in traj.dissipation))
