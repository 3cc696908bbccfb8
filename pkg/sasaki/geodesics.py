"""Sasaki geodesics on TM: the second-order system in (x, v, xdot, z), fixed-step RK4, monitors."""
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import torch
import tqdm
from torch import Tensor

from sasaki.errors import DomainExit, NonFinite
from sasaki.geometry import ChartedManifold, christoffel_symbols, lower_riemann, riemann_tensor
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "GeodesicState",
    "Trajectory",
    "rk4_step",
    "state_from_velocity",
    "sasaki_energy",
    "geodesic_rhs",
    "integrate",
    "integrate_base",
    "submarine_projection",
    "base_geodesic_defect",
]


class GeodesicState(NamedTuple):
    x: Tensor
    v: Tensor
    xdot: Tensor
    z: Tensor  # z^b = vdot^b + xdot^i v^a Gamma^b_ia

    @classmethod
    def of(cls, x, v, xdot, z) -> "GeodesicState":
        return cls(as_tensor(x), as_tensor(v), as_tensor(xdot), as_tensor(z))

    @classmethod
    def from_stacked(cls, s: Tensor) -> "GeodesicState":
        m = s.shape[-1] // 4
        return cls(s[..., :m], s[..., m : 2 * m], s[..., 2 * m : 3 * m], s[..., 3 * m :])

    def stacked(self) -> Tensor:
        return torch.cat([self.x, self.v, self.xdot, self.z], dim=-1)


def rk4_step(f: Callable[[Tensor], Tensor], y: Tensor, h: float) -> Tensor:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def state_from_velocity(M: ChartedManifold, x, v, xdot, vdot) -> GeodesicState:
    x, v, xdot, vdot = (as_tensor(t) for t in (x, v, xdot, vdot))
    z = vdot + torch.einsum("bia,i,a->b", christoffel_symbols(M, x), xdot, v)
    return GeodesicState(x, v, xdot, z)


def sasaki_energy(M: ChartedManifold, s: GeodesicState) -> Tensor:
    g = M.metric(s.x)
    return s.xdot @ g @ s.xdot + s.z @ g @ s.z


def geodesic_rhs(M: ChartedManifold, s: GeodesicState) -> GeodesicState:
    """Time derivative of (x, v, xdot, z) along a Sasaki geodesic.

    xddot^p = -Gamma^p_ij xdot^i xdot^j - xdot^i z^b v^j R_bjiq g^qp
    zdot^a  = -xdot^i z^b Gamma^a_ib
    vdot^b  = z^b - xdot^i v^a Gamma^b_ia
    """
    if not M.domain.contains(s.x):
        raise DomainExit(s.x.tolist())
    gamma = christoffel_symbols(M, s.x)
    xddot = -torch.einsum("pij,i,j->p", gamma, s.xdot, s.xdot)
    # the coupling is linear in z and vanishes on flat models
    if not M.is_flat and bool(s.z.any()):
        g = M.metric(s.x)
        riem_low = lower_riemann(g, riemann_tensor(M, s.x))
        coupling = torch.einsum("bjiq,i,b,j->q", riem_low, s.xdot, s.z, s.v)
        xddot = xddot - torch.linalg.solve(g, coupling)
    zdot = -torch.einsum("aib,i,b->a", gamma, s.xdot, s.z)
    vdot = s.z - torch.einsum("bia,i,a->b", gamma, s.xdot, s.v)
    return GeodesicState(s.xdot, vdot, xddot, zdot)


@dataclass
class Trajectory:
    times: Tensor  # [n]
    states: Tensor  # [n, 4m]
    energies: Tensor  # [n]
    note: Optional[str] = None  # set when the run ended early

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 4

    def __len__(self):
        return self.times.shape[0]

    def state(self, k: int) -> GeodesicState:
        return GeodesicState.from_stacked(self.states[k])

    @property
    def final(self) -> GeodesicState:
        return self.state(-1)

    def energy_drift(self) -> float:
        """max relative deviation from the initial energy (absolute if it vanishes)."""
        e0 = self.energies[0].abs().item()
        drift = (self.energies - self.energies[0]).abs().max().item()
        return drift / e0 if e0 > 0 else drift

    def to_csv(self, path: str):
        m = self.dim
        names = ["t"] + [f"{name}{i + 1}" for name in ("x", "v", "xdot", "z") for i in range(m)] + ["energy"]
        data = torch.cat([self.times[:, None], self.states, self.energies[:, None]], dim=1).numpy()
        footer = f"# {self.note}" if self.note else ""
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), footer=footer, comments="")


def integrate(
    M: ChartedManifold,
    s0: GeodesicState,
    T: float,
    dt: float,
    progress: bool = False,
) -> Trajectory:
    """Classical RK4 with n = round(T / dt) equal steps ending exactly at T.

    Raises DomainExit / NonFinite carrying the partial trajectory.
    """
    assert T > 0 and dt > 0, f"T and dt must be positive, got T={T}, dt={dt}"
    steps = max(1, int(round(T / dt)))
    h = T / steps

    def rhs(y: Tensor) -> Tensor:
        return geodesic_rhs(M, GeodesicState.from_stacked(y)).stacked()

    y = s0.stacked().to(DTYPE)
    times, states, energies = [0.0], [y], [sasaki_energy(M, s0).item()]

    def partial(note: str) -> Trajectory:
        return Trajectory(as_tensor(times), torch.stack(states), as_tensor(energies), note=note)

    pbar = tqdm.tqdm(total=steps, disable=not progress, leave=False, desc="RK4")
    for k in range(1, steps + 1):
        try:
            y = rk4_step(rhs, y, h)
        except DomainExit as e:
            pbar.close()
            raise DomainExit(e.point, trajectory=partial(f"domain exit near t={times[-1] + h:.17g}")) from None
        t = k * h
        if not bool(torch.isfinite(y).all()):
            pbar.close()
            raise NonFinite(t, trajectory=partial(f"non-finite state at t={t:.17g}"))
        s = GeodesicState.from_stacked(y)
        wrapped = M.domain.wrap(s.x)
        y = torch.cat([wrapped, y[wrapped.shape[0] :]])
        times.append(t)
        states.append(y)
        energies.append(sasaki_energy(M, GeodesicState.from_stacked(y)).item())
        pbar.update(1)
    pbar.close()
    return Trajectory(as_tensor(times), torch.stack(states), as_tensor(energies))


def integrate_base(M: ChartedManifold, x0, xdot0, T: float, dt: float) -> Tensor:
    """Base geodesic xddot = -Gamma(xdot, xdot) by the same RK4; returns [n, 2m] rows (x, xdot)."""
    steps = max(1, int(round(T / dt)))
    h = T / steps
    m = len(x0)

    def rhs(y: Tensor) -> Tensor:
        x, xdot = y[:m], y[m:]
        if not M.domain.contains(x):
            raise DomainExit(x.tolist())
        return torch.cat([xdot, -torch.einsum("pij,i,j->p", christoffel_symbols(M, x), xdot, xdot)])

    y = torch.cat([as_tensor(x0), as_tensor(xdot0)])
    rows = [y]
    for _ in range(steps):
        y = rk4_step(rhs, y, h)
        y = torch.cat([M.domain.wrap(y[:m]), y[m:]])
        rows.append(y)
    return torch.stack(rows)


def submarine_projection(trajectory: Trajectory) -> Tensor:
    assert len(trajectory) > 0, "empty trajectory"
    return trajectory.states[:, : trajectory.dim]


def base_geodesic_defect(M: ChartedManifold, trajectory: Trajectory) -> float:
    """max |xddot + Gamma(xdot, xdot)| along the projection, xddot by central differences of xdot."""
    m = trajectory.dim
    if len(trajectory) < 3:
        return 0.0
    h = (trajectory.times[1] - trajectory.times[0]).item()
    x = submarine_projection(trajectory)
    xdot = trajectory.states[:, 2 * m : 3 * m]
    defect = 0.0
    for k in range(1, len(trajectory) - 1):
        xddot = (xdot[k + 1] - xdot[k - 1]) / (2 * h)
        residual = xddot + torch.einsum("pij,i,j->p", christoffel_symbols(M, x[k]), xdot[k], xdot[k])
        defect = max(defect, residual.abs().max().item())
    return defect
