"""Reduced deterministic voxel mass-spring simulator.

One point mass per non-empty voxel, axial springs between 6-neighbours and
face-diagonal springs for shear stiffness.  Contractile voxels drive their
incident springs with a sinusoidal rest-length modulation whose per-voxel
phase offset is the controller output.  Masses on the x=0 face are clamped
and every mass keeps its initial x (motion confined to the yz plane).

The integrator is semi-implicit Euler; the whole rollout runs inside a
numba kernel so population-scale evolutionary sweeps stay affordable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .morphology import CONTRACTILE, VoxelGrid

TWO_PI = 2.0 * math.pi

# coordinate magnitude above this many voxel lengths signals instability
DIVERGENCE_LIMIT = 1.0e3


class NumericalDivergenceError(RuntimeError):
    """Simulation blew up: some coordinate left the 10^3 voxel-length box."""


@dataclass(frozen=True)
class SimParams:
    """Simulation constants.  Defaults are the artifact's reference setup."""

    voxel_len: float = 1.0
    stiffness: float = 500.0
    damping: float = 0.1  # fraction of critical damping per spring
    mass: float = 1.0
    actuation_amp: float = 0.15
    actuation_freq: float = 1.0
    duration: float = 3.0
    dt: float | None = None  # None -> 0.1 * sqrt(mass / stiffness)
    gravity: float = 0.0  # acceleration along -z

    def __post_init__(self):
        if self.voxel_len <= 0:
            raise ValueError("voxel_len must be positive")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0.0 <= self.actuation_amp < 0.5:
            raise ValueError("actuation_amp must be in [0, 0.5)")
        if self.actuation_freq <= 0:
            raise ValueError("actuation_freq must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.dt is not None and not 0.0 < self.dt <= 0.5 * math.sqrt(self.mass / self.stiffness):
            raise ValueError("dt must satisfy 0 < dt <= 0.5*sqrt(mass/stiffness)")

    @property
    def step_size(self) -> float:
        if self.dt is not None:
            return self.dt
        return 0.1 * math.sqrt(self.mass / self.stiffness)

    @property
    def spring_damping(self) -> float:
        """Dashpot coefficient: damping ratio times critical 2*sqrt(k*m)."""
        return self.damping * 2.0 * math.sqrt(self.stiffness * self.mass)


@dataclass(frozen=True)
class PhaseOffsetField:
    """Per-voxel actuation phase offsets in [-2*pi, 2*pi].

    Values at empty voxels are carried but never read by the simulator.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"phase field must be 3D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("phase field contains non-finite values")
        if np.any(values < -TWO_PI) or np.any(values > TWO_PI):
            raise ValueError("phase offsets must lie in [-2*pi, 2*pi]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, dims: tuple[int, int, int]) -> "PhaseOffsetField":
        return cls(np.zeros(dims, dtype=np.float64))

    @classmethod
    def from_flat(cls, flat: np.ndarray, dims: tuple[int, int, int]) -> "PhaseOffsetField":
        """Build from x-fastest flattened values."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(f"expected {dims[0] * dims[1] * dims[2]} values, got {flat.size}")
        return cls(flat.reshape(dims, order="F"))

    def flat(self) -> np.ndarray:
        return self.values.flatten(order="F")

    def to_csv(self) -> str:
        return "\n".join(repr(float(v)) for v in self.flat()) + "\n"

    @classmethod
    def from_csv(cls, text: str, dims: tuple[int, int, int]) -> "PhaseOffsetField":
        vals = []
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            vals.extend(float(tok) for tok in ln.replace(",", " ").split())
        return cls.from_flat(np.array(vals, dtype=np.float64), dims)


@dataclass(frozen=True)
class TipTrace:
    """Free-end centroid positions over time, in simulation length units."""

    t: np.ndarray  # (n,)
    pos: np.ndarray  # (n, 3)

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        pos = np.ascontiguousarray(self.pos, dtype=np.float64)
        if t.ndim != 1 or pos.shape != (t.size, 3):
            raise ValueError("trace arrays must have shapes (n,) and (n,3)")
        if t.size == 0:
            raise ValueError("trace must contain at least one sample")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trace times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pos", pos)

    def to_csv(self) -> str:
        rows = ["t,x,y,z"]
        for ti, (x, y, z) in zip(self.t, self.pos):
            rows.append(f"{ti:.9g},{x:.9g},{y:.9g},{z:.9g}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TipTrace":
        t, pos = [], []
        for i, ln in enumerate(text.splitlines()):
            ln = ln.strip()
            if not ln or ln.startswith("#") or (i == 0 and ln.lower().startswith("t,")):
                continue
            parts = ln.split(",")
            if len(parts) != 4:
                raise ValueError(f"trace line {i}: expected 4 comma-separated fields")
            t.append(float(parts[0]))
            pos.append([float(parts[1]), float(parts[2]), float(parts[3])])
        return cls(np.array(t), np.array(pos))


@dataclass
class LatticeState:
    """Point masses plus spring topology; pos/vel evolve, the rest is static."""

    pos: np.ndarray  # (n, 3) current positions
    vel: np.ndarray  # (n, 3)
    pos0: np.ndarray  # (n, 3) rest positions (x reset + clamp targets)
    fixed: np.ndarray  # (n,) bool
    contractile: np.ndarray  # (n,) bool
    coords: np.ndarray  # (n, 3) voxel indices per mass
    springs: np.ndarray  # (m, 2) mass index pairs
    rest: np.ndarray  # (m,) base rest lengths
    tip_indices: np.ndarray  # masses forming the free-end centroid

    @property
    def n_masses(self) -> int:
        return self.pos.shape[0]

    @property
    def n_springs(self) -> int:
        return self.springs.shape[0]

    def copy(self) -> "LatticeState":
        return LatticeState(
            pos=self.pos.copy(),
            vel=self.vel.copy(),
            pos0=self.pos0,
            fixed=self.fixed,
            contractile=self.contractile,
            coords=self.coords,
            springs=self.springs,
            rest=self.rest,
            tip_indices=self.tip_indices,
        )

    def tip_centroid(self) -> np.ndarray:
        return self.pos[self.tip_indices].mean(axis=0)


# lead offsets enumerating each axial / face-diagonal pair exactly once
_AXIAL_OFFSETS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
_DIAGONAL_OFFSETS = ((0, 1, 1), (0, 1, -1), (1, 0, 1), (1, 0, -1), (1, 1, 0), (1, -1, 0))


def build_lattice(grid: VoxelGrid, params: SimParams) -> LatticeState:
    """Masses at voxel centers; springs between 6-neighbours and same-plane
    diagonal neighbours; x=0 masses fixed."""
    nx, ny, nz = grid.dims
    occ = grid.occupied()
    xs, ys, zs = np.nonzero(occ)
    order = np.lexsort((xs, ys, zs))
    coords = np.stack([xs[order], ys[order], zs[order]], axis=1).astype(np.int64)
    n = coords.shape[0]

    index3d = np.full(grid.dims, -1, dtype=np.int64)
    index3d[coords[:, 0], coords[:, 1], coords[:, 2]] = np.arange(n)

    pairs = []
    for dx, dy, dz in _AXIAL_OFFSETS + _DIAGONAL_OFFSETS:
        nbr = coords + np.array([dx, dy, dz])
        ok = (
            (nbr[:, 0] >= 0) & (nbr[:, 0] < nx)
            & (nbr[:, 1] >= 0) & (nbr[:, 1] < ny)
            & (nbr[:, 2] >= 0) & (nbr[:, 2] < nz)
        )
        src = np.nonzero(ok)[0]
        dst = index3d[nbr[src, 0], nbr[src, 1], nbr[src, 2]]
        hit = dst >= 0
        pairs.append(np.stack([src[hit], dst[hit]], axis=1))
    springs = np.concatenate(pairs, axis=0) if pairs else np.empty((0, 2), dtype=np.int64)

    pos0 = (coords.astype(np.float64) + 0.5) * params.voxel_len
    # base rest lengths equal the as-built endpoint distances, so an
    # unactuated lattice is in exact force equilibrium
    if springs.shape[0]:
        d = pos0[springs[:, 1]] - pos0[springs[:, 0]]
        rest = np.sqrt((d * d).sum(axis=1))
    else:
        rest = np.empty(0, dtype=np.float64)

    max_x = int(coords[:, 0].max())
    tip_indices = np.nonzero(coords[:, 0] == max_x)[0].astype(np.int64)

    return LatticeState(
        pos=pos0.copy(),
        vel=np.zeros((n, 3), dtype=np.float64),
        pos0=pos0,
        fixed=coords[:, 0] == 0,
        contractile=grid.cells[coords[:, 0], coords[:, 1], coords[:, 2]] == CONTRACTILE,
        coords=coords,
        springs=np.ascontiguousarray(springs, dtype=np.int64),
        rest=rest,
        tip_indices=tip_indices,
    )


def phase_per_mass(state: LatticeState, phases: PhaseOffsetField) -> np.ndarray:
    c = state.coords
    return phases.values[c[:, 0], c[:, 1], c[:, 2]]


def actuated_rest_length(state: LatticeState, spring_index: int, t: float,
                         phases: PhaseOffsetField, params: SimParams) -> float:
    """Rest length of one spring at time t.

    base_rest * (1 + A*s) with s the mean of sin(2*pi*f*t + phase) over the
    spring's contractile endpoints; s = 0 when neither endpoint is contractile.
    """
    a, b = state.springs[spring_index]
    ph = phase_per_mass(state, phases)
    omega = TWO_PI * params.actuation_freq
    terms = [math.sin(omega * t + ph[i]) for i in (a, b) if state.contractile[i]]
    s = sum(terms) / len(terms) if terms else 0.0
    return float(state.rest[spring_index] * (1.0 + params.actuation_amp * s))


@njit(cache=True, nogil=True, fastmath=True)
def _rollout_kernel(pos, vel, pos0, fixed, contr, phase, sa, sb, rest, amp_j,
                    k, cdamp, omega, mass_m, gravity, dt, t0, n_steps,
                    tip_idx, limit, trace_out):
    """Advance n_steps of semi-implicit Euler, recording the tip centroid
    after every step (slot 0 holds the entry state).  Returns the 1-based
    step at which divergence was detected, or -1.

    The per-voxel sinusoid sin(omega*t + phase) is advanced by a rotation
    recurrence instead of per-step trig calls; x-forces are never
    accumulated because every x coordinate is frozen anyway.
    """
    n = pos.shape[0]
    m = sa.shape[0]
    n_tip = tip_idx.shape[0]
    fy = np.zeros(n)
    fz = np.zeros(n)
    sinv = np.zeros(n)
    cosv = np.zeros(n)
    for i in range(n):
        if contr[i]:
            sinv[i] = math.sin(omega * t0 + phase[i])
            cosv[i] = math.cos(omega * t0 + phase[i])
    rot_c = math.cos(omega * dt)
    rot_s = math.sin(omega * dt)

    cx = 0.0
    cy = 0.0
    cz = 0.0
    for q in range(n_tip):
        cx += pos[tip_idx[q], 0]
        cy += pos[tip_idx[q], 1]
        cz += pos[tip_idx[q], 2]
    trace_out[0, 0] = cx / n_tip
    trace_out[0, 1] = cy / n_tip
    trace_out[0, 2] = cz / n_tip

    gforce = -mass_m * gravity
    dtm = dt / mass_m
    for s in range(n_steps):
        for i in range(n):
            fy[i] = 0.0
            fz[i] = gforce

        for j in range(m):
            a = sa[j]
            b = sb[j]
            dx = pos[b, 0] - pos[a, 0]
            dy = pos[b, 1] - pos[a, 1]
            dz = pos[b, 2] - pos[a, 2]
            sq = dx * dx + dy * dy + dz * dz
            if sq <= 0.0:
                continue
            length = math.sqrt(sq)
            inv_len = 1.0 / length
            srest = rest[j] * (1.0 + amp_j[j] * (sinv[a] + sinv[b]))
            proj = (
                (vel[b, 0] - vel[a, 0]) * dx
                + (vel[b, 1] - vel[a, 1]) * dy
                + (vel[b, 2] - vel[a, 2]) * dz
            ) * inv_len
            f = (k * (length - srest) + cdamp * proj) * inv_len
            fy[a] += f * dy
            fz[a] += f * dz
            fy[b] -= f * dy
            fz[b] -= f * dz

        maxabs = 0.0
        for i in range(n):
            if fixed[i]:
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0
                vel[i, 2] = 0.0
                pos[i, 0] = pos0[i, 0]
                pos[i, 1] = pos0[i, 1]
                pos[i, 2] = pos0[i, 2]
            else:
                vel[i, 1] += dtm * fy[i]
                vel[i, 2] += dtm * fz[i]
                pos[i, 1] += dt * vel[i, 1]
                pos[i, 2] += dt * vel[i, 2]
                # yz-plane constraint: x frozen at its initial value
                pos[i, 0] = pos0[i, 0]
                vel[i, 0] = 0.0
            for c in range(3):
                v = abs(pos[i, c])
                if v > maxabs:
                    maxabs = v
            if contr[i]:
                sn = sinv[i] * rot_c + cosv[i] * rot_s
                cn = cosv[i] * rot_c - sinv[i] * rot_s
                sinv[i] = sn
                cosv[i] = cn

        cx = 0.0
        cy = 0.0
        cz = 0.0
        for q in range(n_tip):
            cx += pos[tip_idx[q], 0]
            cy += pos[tip_idx[q], 1]
            cz += pos[tip_idx[q], 2]
        trace_out[s + 1, 0] = cx / n_tip
        trace_out[s + 1, 1] = cy / n_tip
        trace_out[s + 1, 2] = cz / n_tip

        if maxabs > limit:
            return s + 1
    return -1


def _spring_inv_counts(state: LatticeState) -> np.ndarray:
    if state.n_springs == 0:
        return np.empty(0, dtype=np.float64)
    cnt = (
        state.contractile[state.springs[:, 0]].astype(np.float64)
        + state.contractile[state.springs[:, 1]].astype(np.float64)
    )
    out = np.zeros_like(cnt)
    np.divide(1.0, cnt, out=out, where=cnt > 0)
    return out


def _run(state: LatticeState, phase: np.ndarray, params: SimParams,
         t0: float, dt: float, n_steps: int) -> tuple[np.ndarray, int]:
    trace = np.empty((n_steps + 1, 3), dtype=np.float64)
    diverged = _rollout_kernel(
        state.pos, state.vel, state.pos0,
        np.ascontiguousarray(state.fixed, dtype=np.bool_),
        np.ascontiguousarray(state.contractile, dtype=np.bool_),
        np.ascontiguousarray(phase, dtype=np.float64),
        np.ascontiguousarray(state.springs[:, 0]),
        np.ascontiguousarray(state.springs[:, 1]),
        np.ascontiguousarray(state.rest, dtype=np.float64),
        params.actuation_amp * _spring_inv_counts(state),
        params.stiffness, params.spring_damping,
        TWO_PI * params.actuation_freq, params.mass, params.gravity,
        dt, t0, n_steps,
        np.ascontiguousarray(state.tip_indices),
        DIVERGENCE_LIMIT * params.voxel_len,
        trace,
    )
    return trace, int(diverged)


def step(state: LatticeState, t: float, dt: float, phases: PhaseOffsetField,
         params: SimParams) -> LatticeState:
    """One semi-implicit Euler step starting at time t; returns a new state."""
    if not 0.0 < dt <= 0.5 * math.sqrt(params.mass / params.stiffness):
        raise ValueError("dt outside the stable bound 0.5*sqrt(mass/stiffness)")
    out = state.copy()
    _, diverged = _run(out, phase_per_mass(state, phases), params, t, dt, 1)
    if diverged >= 0:
        raise NumericalDivergenceError(
            f"coordinate exceeded {DIVERGENCE_LIMIT:g} voxel lengths at t={t + dt:g}"
        )
    return out


def simulate(grid: VoxelGrid, phases: PhaseOffsetField, params: SimParams | None = None) -> TipTrace:
    """Full rollout from t=0 to params.duration; returns the free-tip trace."""
    params = params or SimParams()
    if phases.dims != grid.dims:
        raise ValueError(f"phase field dims {phases.dims} do not match grid dims {grid.dims}")
    state = build_lattice(grid, params)
    return run_lattice(state, phase_per_mass(state, phases), params)


def run_lattice(state: LatticeState, phase_by_mass: np.ndarray, params: SimParams) -> TipTrace:
    """Rollout for an already-built (possibly hand-crafted) lattice."""
    n_steps = max(1, math.ceil(params.duration / params.step_size - 1e-12))
    dt = params.duration / n_steps  # lands exactly on t = duration
    work = state.copy()
    trace, diverged = _run(work, np.asarray(phase_by_mass, dtype=np.float64), params, 0.0, dt, n_steps)
    if diverged >= 0:
        raise NumericalDivergenceError(
            f"coordinate exceeded {DIVERGENCE_LIMIT:g} voxel lengths at step {diverged}/{n_steps}"
        )
    t = np.arange(n_steps + 1, dtype=np.float64) * dt
    return TipTrace(t=t, pos=trace)


def fitness_displacement(trace: TipTrace, params: SimParams | None = None) -> float:
    """Signed upward displacement in voxel lengths: tip z averaged over the
    final actuation cycle minus the rest z."""
    params = params or SimParams()
    z = trace.pos[:, 2]
    if trace.t.size < 2:
        return 0.0
    dt = trace.t[1] - trace.t[0]
    period = 1.0 / params.actuation_freq
    k = int(round(period / dt))
    k = min(max(k, 1), trace.t.size)
    z_last = float(z[-k:].mean())
    return (z_last - float(z[0])) / params.voxel_len
