"""Fog computation offloading: topology, latency costs, workload constraints.

Decision vector layout for a network with ``N`` nodes and ``L`` directed
fog-to-fog links (``d = 2N + L``)::

    [ z^1 .. z^N | y^{nk} for each link, in link order | y^{11} .. y^{NN} ]

Node indices are 0-based in code. Config files label nodes 1..N.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import BoxSet
from .solver import ConstraintOracle, Problem

PERIOD_SLOTS = 96  # sin(pi t / 96): one day of 7.5-minute slots per 192 slots


@dataclass(frozen=True, eq=False)
class FogNetwork:
    N: int
    out_links: tuple  # out_links[n] = tuple of neighbour indices
    z_cap: np.ndarray
    y_link_cap: np.ndarray  # aligned with ``links``
    y_local_cap: np.ndarray

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one fog node")
        out = tuple(tuple(int(k) for k in ks) for ks in self.out_links)
        if len(out) != self.N:
            raise ValueError("out_links must have one entry per node")
        for n, ks in enumerate(out):
            if n in ks:
                raise ValueError(f"node {n + 1} links to itself")
            if len(set(ks)) != len(ks) or any(not 0 <= k < self.N for k in ks):
                raise ValueError(f"bad neighbour list for node {n + 1}: {ks}")
        object.__setattr__(self, "out_links", out)
        for name, size in (("z_cap", self.N), ("y_link_cap", self.n_links), ("y_local_cap", self.N)):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (size,) or np.any(arr <= 0):
                raise ValueError(f"{name} must be {size} positive capacities")
            object.__setattr__(self, name, arr)

    @property
    def links(self) -> list:
        return [(n, k) for n, ks in enumerate(self.out_links) for k in ks]

    @property
    def n_links(self) -> int:
        return sum(len(ks) for ks in self.out_links)

    @property
    def dim(self) -> int:
        return 2 * self.N + self.n_links

    def z_index(self, n: int) -> int:
        return n

    def link_index(self, n: int, k: int) -> int:
        return self.N + self.links.index((n, k))

    def local_index(self, n: int) -> int:
        return self.N + self.n_links + n

    def split(self, x: np.ndarray):
        """Return views ``(z, y_links, y_local)`` of a decision vector."""
        N, L = self.N, self.n_links
        return x[:N], x[N:N + L], x[N + L:]

    def box(self) -> BoxSet:
        upper = np.concatenate([self.z_cap, self.y_link_cap, self.y_local_cap])
        return BoxSet(np.zeros_like(upper), upper)

    def constraint_matrix(self) -> np.ndarray:
        """``A`` with ``g_t(x) = b_t + A x``; entries in {-1, 0, +1}."""
        A = np.zeros((self.N, self.dim))
        for n in range(self.N):
            A[n, self.z_index(n)] = -1.0
            A[n, self.local_index(n)] = -1.0
        for j, (n, k) in enumerate(self.links):
            A[n, self.N + j] -= 1.0
            A[k, self.N + j] += 1.0
        return A


def ring_topology(N: int, hops: Sequence[int] = (1, 2)) -> tuple:
    """Node ``n`` sends to ``n + h mod N`` for each hop ``h`` (duplicates and self-loops dropped)."""
    out = []
    for n in range(N):
        ks = []
        for h in hops:
            k = (n + h) % N
            if k != n and k not in ks:
                ks.append(k)
        out.append(tuple(ks))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class FogCostParams:
    """``f_t(x) = sum_n exp(p_t^n z^n) + sum l^{nk} y^{nk} + l^{nn} (y^{nn})^2``
    with ``p_t^n = p_amp^n sin(pi t / 96) + p_offset^n``."""

    p_amp: np.ndarray
    p_offset: np.ndarray
    l_link: np.ndarray
    l_local: np.ndarray

    def p(self, t: int) -> np.ndarray:
        return self.p_amp * math.sin(math.pi * t / PERIOD_SLOTS) + self.p_offset


@dataclass(frozen=True, eq=False)
class ArrivalProcess:
    """``b_t^n = max(q^n sin(pi t / 96) + nu_t^n, 0)`` with ``nu`` pre-drawn for slots 1..T."""

    q: np.ndarray
    nu: np.ndarray  # shape (T, N); row t-1 holds slot t

    @property
    def horizon(self) -> int:
        return self.nu.shape[0]

    def b(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.horizon:
            raise IndexError(f"slot {t} outside materialized horizon 1..{self.horizon}")
        # The sinusoid can dip slightly below the noise floor; arrivals are
        # physical request counts, so they are floored at zero.
        return np.maximum(self.q * math.sin(math.pi * t / PERIOD_SLOTS) + self.nu[t - 1], 0.0)


def fog_loss(net: FogNetwork, params: FogCostParams, t: int, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.dim,):
        raise ValueError(f"decision vector has shape {x.shape}, network expects ({net.dim},)")
    N, L = net.N, net.n_links
    z, y_links, y_local = x[:N], x[N:N + L], x[N + L:]
    return float(np.sum(np.exp(params.p(t) * z)) + params.l_link @ y_links + params.l_local @ (y_local * y_local))


def fog_loss_gradient(net: FogNetwork, params: FogCostParams, t: int, x: np.ndarray) -> np.ndarray:
    N, L = net.N, net.n_links
    z, y_local = x[:N], x[N + L:]
    p = params.p(t)
    return np.concatenate([p * np.exp(p * z), params.l_link, 2.0 * params.l_local * y_local])


def fog_constraints(net: FogNetwork, arrivals: ArrivalProcess, t: int, x: np.ndarray, A: Optional[np.ndarray] = None):
    """Workload residual per node and its (constant) Jacobian."""
    if A is None:
        A = net.constraint_matrix()
    return arrivals.b(t) + A @ x, A


# ---------------------------------------------------------------------------
# instance generation


@dataclass
class NodeClass:
    """Parameter ranges shared by a group of nodes (1-based labels)."""

    nodes: list
    p_amp: float
    p_offset: float
    q_range: tuple
    nu_range: tuple


@dataclass
class FogConfig:
    N: int = 10
    T: int = 2000
    hops: tuple = (1, 2)
    out_links: Optional[list] = None  # explicit 1-based adjacency overrides ``hops``
    z_cap: float = 100.0
    y_link_cap: float = 10.0
    y_local_cap: float = 50.0
    link_cost_numerator: float = 8.0  # l^{nk} = 8 / y_link_cap
    local_cost_numerator: float = 8.0  # l^{nn} = 8 / y_local_cap
    default_class: NodeClass = field(
        default_factory=lambda: NodeClass([], 0.015, 0.05, (40.0, 50.0), (45.0, 55.0))
    )
    classes: list = field(
        default_factory=lambda: [
            NodeClass([1, 2, 3], 0.015, 0.05, (32.0, 40.0), (36.0, 44.0)),
            NodeClass([4, 5], 0.045, 0.15, (20.0, 25.0), (22.5, 27.5)),
        ]
    )

    def __post_init__(self):
        self.hops = tuple(self.hops)
        self.default_class = _as_class(self.default_class)
        self.classes = [_as_class(c) for c in self.classes]
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")

    def node_class(self, n: int) -> NodeClass:
        for c in self.classes:
            if n + 1 in c.nodes:
                return c
        return self.default_class

    def to_dict(self) -> dict:
        return asdict(self)


def _as_class(c) -> NodeClass:
    if isinstance(c, NodeClass):
        return NodeClass(list(c.nodes), float(c.p_amp), float(c.p_offset), tuple(c.q_range), tuple(c.nu_range))
    c = dict(c)
    c.setdefault("nodes", [])
    return _as_class(NodeClass(**c))


@dataclass(eq=False)
class FogInstance:
    net: FogNetwork
    params: FogCostParams
    arrivals: ArrivalProcess

    def __post_init__(self):
        self.A = self.net.constraint_matrix()
        self.A.flags.writeable = False

    @property
    def T(self) -> int:
        return self.arrivals.horizon

    def loss(self, t: int, x: np.ndarray) -> float:
        return fog_loss(self.net, self.params, t, x)

    def gradient(self, t: int, x: np.ndarray) -> np.ndarray:
        return fog_loss_gradient(self.net, self.params, t, x)

    def constraint_value(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.arrivals.b(t) + self.A @ x

    def constraint_jacobian(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.A

    def value_bounds(self) -> tuple:
        """``(F, G)``: max of ``|f_t|`` and ``||grad f_t||`` over the box and all slots.

        Every term of the loss and of its gradient is non-decreasing in each
        coordinate on the nonnegative box, so both maxima sit at the upper
        corner; the price is periodic, so one period of slots covers all t.
        """
        top = self.net.box().upper
        ts = range(1, 2 * PERIOD_SLOTS + 1)
        F = max(self.loss(t, top) for t in ts)
        G = max(float(np.linalg.norm(self.gradient(t, top))) for t in ts)
        return F, G

    def problem(self) -> Problem:
        cons = ConstraintOracle(self.constraint_value, self.constraint_jacobian, linear=True)
        F, G = self.value_bounds()
        return Problem(self.net.box(), self.loss, cons, gradient=self.gradient, fog=self, F=F, G=G)

    # snapshot -------------------------------------------------------------

    def to_dict(self) -> dict:
        net, par, arr = self.net, self.params, self.arrivals
        return {
            "format": "bansap-fog-instance/1",
            "N": net.N,
            "T": self.T,
            "out_links": [[k + 1 for k in ks] for ks in net.out_links],
            "capacities": {
                "z": net.z_cap.tolist(),
                "y_link": net.y_link_cap.tolist(),
                "y_local": net.y_local_cap.tolist(),
            },
            "cost": {
                "p_amp": par.p_amp.tolist(),
                "p_offset": par.p_offset.tolist(),
                "l_link": par.l_link.tolist(),
                "l_local": par.l_local.tolist(),
            },
            "arrivals": {"q": arr.q.tolist(), "nu": arr.nu.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FogInstance":
        if data.get("format") != "bansap-fog-instance/1":
            raise ValueError(f"unsupported snapshot format: {data.get('format')!r}")
        cap = data["capacities"]
        net = FogNetwork(
            int(data["N"]),
            tuple(tuple(k - 1 for k in ks) for ks in data["out_links"]),
            np.array(cap["z"]),
            np.array(cap["y_link"]),
            np.array(cap["y_local"]),
        )
        c = data["cost"]
        params = FogCostParams(*(np.array(c[k], dtype=float) for k in ("p_amp", "p_offset", "l_link", "l_local")))
        a = data["arrivals"]
        nu = np.array(a["nu"], dtype=float).reshape(int(data["T"]), net.N)
        return cls(net, params, ArrivalProcess(np.array(a["q"], dtype=float), nu))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "FogInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_instance(config: FogConfig, seed) -> FogInstance:
    """Build a network, cost parameters and one arrival realisation."""
    if config.N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    N = config.N
    if config.out_links is not None:
        out = tuple(tuple(k - 1 for k in ks) for ks in config.out_links)
    else:
        out = ring_topology(N, config.hops)
    L = sum(len(ks) for ks in out)
    net = FogNetwork(
        N,
        out,
        np.full(N, config.z_cap),
        np.full(L, config.y_link_cap),
        np.full(N, config.y_local_cap),
    )
    classes = [config.node_class(n) for n in range(N)]
    params = FogCostParams(
        p_amp=np.array([c.p_amp for c in classes]),
        p_offset=np.array([c.p_offset for c in classes]),
        l_link=config.link_cost_numerator / net.y_link_cap,
        l_local=config.local_cost_numerator / net.y_local_cap,
    )
    q = np.array([rng.uniform(*c.q_range) for c in classes])
    lo = np.array([c.nu_range[0] for c in classes])
    hi = np.array([c.nu_range[1] for c in classes])
    nu = rng.uniform(lo, hi, size=(config.T, N))
    return FogInstance(net, params, ArrivalProcess(q, nu))


# ---------------------------------------------------------------------------
# heuristic baselines


def cloud_only_step(backlog: np.ndarray, arrivals_t: np.ndarray, net: FogNetwork):
    """Send everything pending to the cloud, up to the cloud-link capacity."""
    pending = np.maximum(backlog + arrivals_t, 0.0)
    z = np.minimum(pending, net.z_cap)
    x = np.zeros(net.dim)
    x[: net.N] = z
    return x, backlog + arrivals_t - z


def fog_only_step(backlog: np.ndarray, arrivals_t: np.ndarray, net: FogNetwork):
    """Process everything pending locally, up to the compute capacity."""
    pending = np.maximum(backlog + arrivals_t, 0.0)
    y = np.minimum(pending, net.y_local_cap)
    x = np.zeros(net.dim)
    x[net.N + net.n_links:] = y
    return x, backlog + arrivals_t - y


# ---------------------------------------------------------------------------
# per-node form of the BanSaP update


@dataclass
class NodeUpdate:
    node: int
    z_next: float
    y_out_next: dict  # neighbour -> y^{nk}_{t+1}
    y_local_next: float
    residual: float  # b + inflow - outflow - z - y^{nn} at the new iterate
    lambda_next: float


def decentralized_update(
    net: FogNetwork,
    x_hat: np.ndarray,
    lam: np.ndarray,
    grad_f: np.ndarray,
    b_t: np.ndarray,
    alpha: float,
    mu: float,
    box: BoxSet,
):
    """Per-variable primal steps and per-node dual steps for the fog problem.

    ``grad_f`` is the (estimated) loss gradient at ``x_hat``; ``box`` is the set
    the primal iterate is clamped to (the shrunken box for BanSaP). Returns the
    per-node records plus the assembled ``(x_next, lam_next)``.
    """
    N, links = net.N, net.links
    lo, hi = box.lower, box.upper
    x_next = np.empty_like(x_hat)
    for n in range(N):
        i = net.z_index(n)
        x_next[i] = min(max(x_hat[i] - alpha * (grad_f[i] - lam[n]), lo[i]), hi[i])
        i = net.local_index(n)
        x_next[i] = min(max(x_hat[i] - alpha * (grad_f[i] - lam[n]), lo[i]), hi[i])
    for j, (n, k) in enumerate(links):
        i = N + j
        x_next[i] = min(max(x_hat[i] - alpha * (grad_f[i] - lam[n] + lam[k]), lo[i]), hi[i])

    inflow = np.zeros(N)
    outflow = np.zeros(N)
    for j, (n, k) in enumerate(links):
        outflow[n] += x_next[N + j]
        inflow[k] += x_next[N + j]
    updates = []
    lam_next = np.empty(N)
    for n in range(N):
        residual = b_t[n] + inflow[n] - outflow[n] - x_next[net.z_index(n)] - x_next[net.local_index(n)]
        lam_next[n] = max(lam[n] + mu * residual, 0.0)
        updates.append(
            NodeUpdate(
                node=n,
                z_next=float(x_next[net.z_index(n)]),
                y_out_next={k: float(x_next[N + j]) for j, (m, k) in enumerate(links) if m == n},
                y_local_next=float(x_next[net.local_index(n)]),
                residual=float(residual),
                lambda_next=float(lam_next[n]),
            )
        )
    return updates, x_next, lam_next
