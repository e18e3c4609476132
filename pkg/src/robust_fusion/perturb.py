"""Input corruptions and l-infinity gradient-sign attacks.

Parameter names follow the omega numbering used throughout the experiments:

========  =====================================================
omega0    std of the multiplicative Gaussian factor
omega1    number of consecutive rows/columns set to zero
omega2    side length of the rescaled square patch
omega3    relative change of the patch, ``x -> (1 + omega3) x``
omega4    l-inf radius of FGSM / PGD
omega5    PGD step size
omega6    PGD iterations (default 20)
========  =====================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn

KINDS = ("none", "gaussian", "missing", "bias", "fgsm", "pgd")
REQUIRED = {
    "none": (),
    "gaussian": ("omega0",),
    "missing": ("omega1",),
    "bias": ("omega2", "omega3"),
    "fgsm": ("omega4",),
    "pgd": ("omega4", "omega5"),
}
DEFAULT_PGD_STEPS = 20


@dataclass(frozen=True)
class PerturbSpec:
    kind: str = "none"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        params = dict(self.params)
        missing = [p for p in REQUIRED[self.kind] if p not in params]
        if missing:
            raise ValueError(f"{self.kind} perturbation needs {', '.join(missing)}")
        if self.kind == "pgd":
            params.setdefault("omega6", DEFAULT_PGD_STEPS)
        if self.kind == "missing":
            params.setdefault("axis", "cols")
        object.__setattr__(self, "params", params)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> PerturbSpec:
        """Parse ``kind:key=value,key=value``, e.g. ``pgd:omega4=0.1,omega5=0.01``.

        Bare ``gaussian:0.3`` assigns the value to the first required parameter.
        """
        kind, _, rest = text.strip().partition(":")
        params: dict = {}
        for i, item in enumerate(filter(None, (s.strip() for s in rest.split(",")))):
            if "=" in item:
                key, value = (s.strip() for s in item.split("=", 1))
            else:
                if i >= len(REQUIRED.get(kind, ())):
                    raise ValueError(f"cannot place positional value {item!r} for {kind!r}")
                key, value = REQUIRED[kind][i], item
            params[key] = value if key == "axis" else _number(value)
        return cls(kind.strip(), params, seed)

    def label(self) -> str:
        if self.kind == "none":
            return "none"
        body = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.kind}:{body}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items())), "seed": self.seed}

    def with_seed(self, seed: int) -> PerturbSpec:
        return PerturbSpec(self.kind, self.params, seed)


def _number(text: str):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def gaussian(x, omega0: float, seed: int = 0) -> np.ndarray:
    """``x * (1 + eps)`` with ``eps ~ N(0, omega0^2)`` drawn independently per entry."""
    x = np.asarray(x, dtype=float)
    if omega0 < 0:
        raise ValueError("omega0 must be non-negative")
    eps = np.random.default_rng(seed).normal(0.0, omega0, size=x.shape) if omega0 else 0.0
    return x * (1.0 + eps)


def missing_entries(x, omega1: int, axis: str = "cols", seed: int = 0) -> np.ndarray:
    """Zero one run of ``omega1`` consecutive columns (or rows) at a uniform start."""
    x = np.array(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("missing_entries works on a 2-D array")
    ax = {"rows": 0, "cols": 1}[axis]
    extent = x.shape[ax]
    omega1 = int(omega1)
    if omega1 < 0 or omega1 > extent:
        raise ValueError(f"omega1={omega1} exceeds the {axis} extent {extent}")
    if omega1 == 0:
        return x
    start = int(np.random.default_rng(seed).integers(0, extent - omega1 + 1))
    if ax == 0:
        x[start : start + omega1, :] = 0.0
    else:
        x[:, start : start + omega1] = 0.0
    return x


def bias_patch(x, omega2: int, omega3: float, seed: int = 0) -> np.ndarray:
    """Scale a random ``omega2 x omega2`` patch by ``1 + omega3``.

    The patch is clipped to the array when it is taller or wider than ``x``.
    """
    x = np.array(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("bias_patch works on a 2-D array")
    omega2 = int(omega2)
    if omega2 < 0:
        raise ValueError("omega2 must be non-negative")
    ph, pw = min(omega2, x.shape[0]), min(omega2, x.shape[1])
    rng = np.random.default_rng(seed)
    r = int(rng.integers(0, x.shape[0] - ph + 1))
    c = int(rng.integers(0, x.shape[1] - pw + 1))
    x[r : r + ph, c : c + pw] *= 1.0 + omega3
    return x


def fgsm(model: nn.MlpModel, x, y, omega4: float) -> np.ndarray:
    """One signed-gradient step of size ``omega4`` that increases the cross-entropy."""
    x = np.asarray(x, dtype=float)
    if omega4 == 0:
        return x.copy()
    _, _, grad = nn.loss_and_grads(model, x, y)
    return x + omega4 * np.sign(grad)


def pgd(model: nn.MlpModel, x, y, omega4: float, omega5: float, omega6: int = DEFAULT_PGD_STEPS):
    """``omega6`` signed-gradient steps of size ``omega5``, projected onto the l-inf ball of radius ``omega4``."""
    x = np.asarray(x, dtype=float)
    adv = x.copy()
    for _ in range(int(omega6)):
        _, _, grad = nn.loss_and_grads(model, adv, y)
        adv = project_linf(x, adv + omega5 * np.sign(grad), omega4)
    return adv


def project_linf(x: np.ndarray, adv: np.ndarray, radius: float) -> np.ndarray:
    """Clip ``adv`` into the l-inf ball around ``x`` so that ``|adv - x| <= radius`` holds in floating point."""
    adv = np.clip(adv, x - radius, x + radius)
    # x + radius can round past the ball; step such entries back one ulp at a time
    over = np.abs(adv - x) > radius
    while np.any(over):
        adv[over] = np.nextafter(adv[over], x[over])
        over = np.abs(adv - x) > radius
    return adv


def apply(spec: PerturbSpec, x, model: nn.MlpModel | None = None, y=None) -> np.ndarray:
    """Perturb a batch of samples ``x`` of shape (N, d).

    Structured corruptions (missing entries, bias patch) treat each sample as a
    1 x d array and draw a fresh position per sample from ``spec.seed``.
    """
    x = np.asarray(x, dtype=float)
    p = spec.params
    if spec.kind == "none":
        return x.copy()
    if spec.kind == "gaussian":
        return gaussian(x, p["omega0"], spec.seed)
    if spec.kind in ("missing", "bias"):
        seeds = np.random.default_rng(spec.seed).integers(0, 2**63 - 1, size=x.shape[0])
        out = np.empty_like(x)
        for i, (row, s) in enumerate(zip(x, seeds)):
            mat = row.reshape(1, -1)
            if spec.kind == "missing":
                out[i] = missing_entries(mat, p["omega1"], p.get("axis", "cols"), int(s)).ravel()
            else:
                out[i] = bias_patch(mat, p["omega2"], p["omega3"], int(s)).ravel()
        return out
    if model is None or y is None:
        raise ValueError(f"{spec.kind} needs the attacked model and the labels")
    if spec.kind == "fgsm":
        return fgsm(model, x, y, p["omega4"])
    return pgd(model, x, y, p["omega4"], p["omega5"], p["omega6"])
