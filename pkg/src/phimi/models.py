"""Semiparametric families for the density ratio dP/dP_perp.

Three families are provided:

* :class:`ExpBilinearModel` -- ``h_theta(x, y) = exp(alpha + sum_k beta_k
  xi_k(x) zeta_k(y))`` for univariate basis pairs ``(xi_k, zeta_k)``;
* :class:`FiniteDiscreteModel` -- the saturated exponential model on a
  known finite support, one log-ratio parameter per cell with the first
  cell's interaction folded into the normalizer;
* :class:`FgmCopulaModel` -- the Farlie-Gumbel-Morgenstern copula density
  ``1 + theta (1 - 2u)(1 - 2v)`` applied to rank-transformed margins.

All models are immutable after construction and safe to share between
threads.  The parameter space is a box, so that the feasible set is
compact; evaluation outside the box raises :class:`BoundsError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import BoundsError, LengthMismatchError, SupportError

__all__ = [
    "ParamVector",
    "BasisPair",
    "BASIS_REGISTRY",
    "RatioModel",
    "ExpBilinearModel",
    "FiniteDiscreteModel",
    "FgmCopulaModel",
    "EmpiricalMargins",
    "rank_transform",
    "gaussian_model",
    "gaussian_ratio_coefficients",
    "h_eval",
    "h_grad",
    "model_to_config",
    "model_from_config",
]


@dataclass(frozen=True)
class ParamVector:
    """Parameter ``theta``: a normalizing ``alpha`` plus coefficients ``beta``.

    ``alpha`` is ``None`` for families without a normalizer (the copula
    model, where the single dependence parameter plays the role of beta).
    """

    alpha: float | None
    beta: tuple[float, ...]

    def to_array(self) -> np.ndarray:
        if self.alpha is None:
            return np.asarray(self.beta, dtype=float)
        return np.asarray((self.alpha, *self.beta), dtype=float)

    @classmethod
    def from_array(cls, arr, has_alpha: bool) -> "ParamVector":
        arr = np.asarray(arr, dtype=float).ravel()
        if has_alpha:
            return cls(float(arr[0]), tuple(float(v) for v in arr[1:]))
        return cls(None, tuple(float(v) for v in arr))

    def __len__(self) -> int:
        return len(self.beta) + (self.alpha is not None)


@dataclass(frozen=True)
class BasisPair:
    """A separable basis term ``xi(x) * zeta(y)``."""

    name: str
    xi: Callable[[np.ndarray], np.ndarray]
    zeta: Callable[[np.ndarray], np.ndarray]


def _one(t):
    return np.ones_like(np.asarray(t, dtype=float))


def _ident(t):
    return np.asarray(t, dtype=float)


def _square(t):
    return np.asarray(t, dtype=float) ** 2


BASIS_REGISTRY: dict[str, BasisPair] = {
    "1": BasisPair("1", _one, _one),
    "x": BasisPair("x", _ident, _one),
    "y": BasisPair("y", _one, _ident),
    "x2": BasisPair("x2", _square, _one),
    "y2": BasisPair("y2", _one, _square),
    "xy": BasisPair("xy", _ident, _ident),
}


def _as_bounds(lo_hi, dim: int) -> np.ndarray:
    arr = np.asarray(lo_hi, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2) or np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError(f"bounds must be (lo, hi) or ({dim}, 2) with lo < hi")
    return arr


class RatioModel:
    """Base class; concrete families implement the hooks below."""

    family: str
    has_alpha: bool

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def theta0(self) -> np.ndarray:
        """Independence point: ``h_theta0`` is identically one."""
        return np.zeros(self.dim)

    def param_vector(self, theta) -> ParamVector:
        return ParamVector.from_array(theta, self.has_alpha)

    def _validate_theta(self, theta) -> np.ndarray:
        arr = np.asarray(theta, dtype=float).ravel()
        if arr.shape != (self.dim,):
            raise BoundsError(f"theta has length {arr.size}, expected {self.dim}")
        b = self.bounds
        if np.any(arr < b[:, 0]) or np.any(arr > b[:, 1]):
            raise BoundsError(f"theta {arr.tolist()} outside box constraints")
        return arr

    # pointwise evaluation -------------------------------------------------

    def h(self, theta, x, y):
        raise NotImplementedError

    def h_grad(self, theta, x, y):
        raise NotImplementedError

    # estimator hooks ------------------------------------------------------
    # The dual objective is sum_p w_p f(h(p)) - sum_c w_c g(h(c)) over a
    # set of "paired" evaluation points p and "cross" (product-measure)
    # points c.  Each family chooses its own point layout and weights.

    def prepare_sample(self, x, y):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)

    def _build_cache(self, x, y):
        raise NotImplementedError

    def _h_pair(self, theta, cache):
        raise NotImplementedError

    def _h_cross(self, theta, cache):
        raise NotImplementedError

    def _jac_pair(self, vec, h, theta, cache) -> np.ndarray:
        """Contract ``sum vec * dh/dtheta`` over the paired points."""
        raise NotImplementedError

    def _jac_cross(self, vec, h, theta, cache) -> np.ndarray:
        raise NotImplementedError

    def suggest_starts(self, cache) -> list[np.ndarray]:
        """Extra deterministic optimizer starts beyond theta0."""
        return []

    def to_config(self) -> str:
        raise NotImplementedError


class ExpBilinearModel(RatioModel):
    """Exponential model with separable bilinear exponent."""

    family = "expbilinear"
    has_alpha = True

    def __init__(self, basis: Sequence[BasisPair | str], alpha_bounds=(-10.0, 10.0),
                 beta_bounds=(-10.0, 10.0)):
        pairs = []
        for item in basis:
            if isinstance(item, str):
                if item not in BASIS_REGISTRY:
                    raise KeyError(f"unknown basis name {item!r}")
                pairs.append(BASIS_REGISTRY[item])
            else:
                pairs.append(item)
        if not pairs:
            raise ValueError("at least one basis pair required")
        self.basis = tuple(pairs)
        d = len(pairs)
        self.bounds = np.vstack([_as_bounds(alpha_bounds, 1), _as_bounds(beta_bounds, d)])
        self.bounds.setflags(write=False)

    def feature_pairs(self):
        return [(p.xi, p.zeta) for p in self.basis]

    def _features(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([p.xi(x) * p.zeta(y) for p in self.basis], axis=-1)

    def h(self, theta, x, y):
        theta = self._validate_theta(theta)
        feats = self._features(x, y)
        with np.errstate(over="ignore"):
            out = np.exp(theta[0] + feats @ theta[1:])
        return out if np.ndim(out) else float(out)

    def h_grad(self, theta, x, y):
        h = np.asarray(self.h(theta, x, y))
        feats = self._features(x, y)
        w = np.concatenate([np.ones(feats.shape[:-1] + (1,)), feats], axis=-1)
        return h[..., None] * w

    def _build_cache(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xi = np.stack([p.xi(x) for p in self.basis], axis=1)    # (n, d)
        ze = np.stack([p.zeta(y) for p in self.basis], axis=1)  # (n, d)
        n = x.size
        return {"xi": xi, "ze": ze, "paired": xi * ze, "n": n}

    def _h_pair(self, theta, cache):
        with np.errstate(over="ignore"):
            h = np.exp(theta[0] + cache["paired"] @ theta[1:])
        return h, np.full(cache["n"], 1.0 / cache["n"])

    def _h_cross(self, theta, cache):
        with np.errstate(over="ignore"):
            h = np.exp(theta[0] + (cache["xi"] * theta[1:]) @ cache["ze"].T)
        return h, 1.0 / cache["n"] ** 2

    def _jac_pair(self, vec, h, theta, cache):
        u = vec * h
        return np.concatenate([[u.sum()], u @ cache["paired"]])

    def _jac_cross(self, vec, h, theta, cache):
        u = vec * h                                   # (n, n)
        beta_part = np.einsum("ik,ik->k", cache["xi"], u @ cache["ze"])
        return np.concatenate([[u.sum()], beta_part])

    def to_config(self) -> str:
        names = [p.name for p in self.basis]
        if any(n not in BASIS_REGISTRY for n in names):
            raise ValueError("only registry-named bases are serializable")
        return "\n".join([
            "family=expbilinear",
            "basis=" + ",".join(names),
            "bounds=" + _fmt_bounds(self.bounds),
        ])


class FiniteDiscreteModel(RatioModel):
    """Saturated exponential model on a known finite support.

    ``h_theta(a_i, b_j) = exp(alpha + beta_ij)`` with ``beta_11`` removed;
    free dimension ``1 + (K1 K2 - 1)``.  Category labels are arbitrary
    hashable tokens, mapped to indices at construction.

    The default box is wide: with empty cells the supremum sits at the
    boundary, and the box must leave the plug-in value reachable to well
    below the 1e-6 equivalence tolerance.
    """

    family = "finite"
    has_alpha = True

    def __init__(self, levels_x: Sequence, levels_y: Sequence,
                 alpha_bounds=(-40.0, 40.0), beta_bounds=(-80.0, 80.0)):
        self.levels_x = tuple(levels_x)
        self.levels_y = tuple(levels_y)
        if len(set(self.levels_x)) != len(self.levels_x):
            raise ValueError("duplicate x levels")
        if len(set(self.levels_y)) != len(self.levels_y):
            raise ValueError("duplicate y levels")
        self.k1 = len(self.levels_x)
        self.k2 = len(self.levels_y)
        if self.k1 < 2 or self.k2 < 2:
            raise ValueError("need at least two levels per margin")
        self._ix = {tok: i for i, tok in enumerate(self.levels_x)}
        self._iy = {tok: j for j, tok in enumerate(self.levels_y)}
        d = self.k1 * self.k2 - 1
        self.bounds = np.vstack([_as_bounds(alpha_bounds, 1), _as_bounds(beta_bounds, d)])
        self.bounds.setflags(write=False)

    def encode_x(self, x) -> np.ndarray:
        return self._encode(x, self._ix, "x")

    def encode_y(self, y) -> np.ndarray:
        return self._encode(y, self._iy, "y")

    @staticmethod
    def _encode(values, table, which) -> np.ndarray:
        vals = np.asarray(values, dtype=object).ravel()
        out = np.empty(vals.size, dtype=np.intp)
        for pos, tok in enumerate(vals):
            try:
                out[pos] = table[tok]
            except (KeyError, TypeError):
                raise SupportError(f"unknown {which} category {tok!r}") from None
        return out

    def _cell_exponents(self, theta) -> np.ndarray:
        """(K1*K2,) exponent per flat cell; cell 0 carries only alpha."""
        e = np.empty(self.k1 * self.k2)
        e[0] = theta[0]
        e[1:] = theta[0] + theta[1:]
        return e

    def h(self, theta, x, y):
        theta = self._validate_theta(theta)
        ix = self.encode_x(x)
        iy = self.encode_y(y)
        if ix.size != iy.size:
            raise LengthMismatchError("x and y have different lengths")
        cells = ix * self.k2 + iy
        out = np.exp(self._cell_exponents(theta))[cells]
        return out if np.ndim(x) or np.ndim(y) else float(out[0])

    def h_grad(self, theta, x, y):
        hv = np.atleast_1d(np.asarray(self.h(theta, x, y)))
        ix = self.encode_x(x)
        iy = self.encode_y(y)
        cells = ix * self.k2 + iy
        grad = np.zeros((hv.size, self.dim))
        grad[:, 0] = hv
        sel = cells > 0
        grad[np.nonzero(sel)[0], cells[sel]] = hv[sel]
        if np.ndim(x) or np.ndim(y):
            return grad
        return grad[0]

    def prepare_sample(self, x, y):
        return self.encode_x(x), self.encode_y(y)

    def _build_cache(self, ix, iy):
        n = ix.size
        counts = np.zeros((self.k1, self.k2))
        np.add.at(counts, (ix, iy), 1.0)
        p = (counts / n).ravel()
        q = np.outer(counts.sum(axis=1), counts.sum(axis=0)).ravel() / n**2
        return {
            "pair_cells": np.nonzero(p > 0)[0],
            "pair_w": p[p > 0],
            "cross_cells": np.nonzero(q > 0)[0],
            "cross_w": q[q > 0],
            "p": p,
            "q": q,
            "n": n,
        }

    def _h_pair(self, theta, cache):
        e = self._cell_exponents(theta)
        return np.exp(e[cache["pair_cells"]]), cache["pair_w"]

    def _h_cross(self, theta, cache):
        e = self._cell_exponents(theta)
        return np.exp(e[cache["cross_cells"]]), cache["cross_w"]

    def _jac_cells(self, vec, h, cells) -> np.ndarray:
        u = vec * h
        jac = np.zeros(self.dim)
        jac[0] = u.sum()
        sel = cells > 0
        np.add.at(jac, cells[sel], u[sel])
        return jac

    def _jac_pair(self, vec, h, theta, cache):
        return self._jac_cells(vec, h, cache["pair_cells"])

    def _jac_cross(self, vec, h, theta, cache):
        return self._jac_cells(vec, h, cache["cross_cells"])

    def suggest_starts(self, cache):
        """Additively smoothed log-ratio point, clipped into the box.

        Starting from theta0 alone, quasi-Newton steps can strand
        low-count cells on the flat exp tail when the reference cell is
        empty (the normalizer must travel far and the stragglers' grad
        vanishes); a start near the saturated solution avoids the trek.
        """
        n = cache["n"]
        t = np.log(n * cache["p"] + 0.5) - np.log(n * cache["q"] + 0.5)
        theta = np.concatenate([[t[0]], t[1:] - t[0]])
        return [np.clip(theta, self.bounds[:, 0], self.bounds[:, 1])]

    def feature_pairs(self):
        """Indicator basis (on raw tokens) for cells (i, j) != (0, 0)."""
        pairs = []
        for i in range(self.k1):
            for j in range(self.k2):
                if i == 0 and j == 0:
                    continue

                def xi(x, i=i):
                    return (self.encode_x(x) == i).astype(float)

                def zeta(y, j=j):
                    return (self.encode_y(y) == j).astype(float)

                pairs.append((xi, zeta))
        return pairs

    def to_config(self) -> str:
        return "\n".join([
            "family=finite",
            "levels_x=" + ",".join(str(t) for t in self.levels_x),
            "levels_y=" + ",".join(str(t) for t in self.levels_y),
            "bounds=" + _fmt_bounds(self.bounds),
        ])


class FgmCopulaModel(RatioModel):
    """FGM copula density on rank-transformed margins; scalar parameter."""

    family = "fgm"
    has_alpha = False

    def __init__(self, theta_bounds=(-0.999, 0.999)):
        b = _as_bounds(theta_bounds, 1)
        if b[0, 0] < -1.0 or b[0, 1] > 1.0:
            raise ValueError("FGM parameter bounds must stay within [-1, 1]")
        self.bounds = b
        self.bounds.setflags(write=False)

    @staticmethod
    def _check_unit(t, name):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise SupportError(f"{name} must be margin-transformed into [0, 1]")
        return t

    def h(self, theta, u, v):
        theta = self._validate_theta(theta)
        u = self._check_unit(u, "u")
        v = self._check_unit(v, "v")
        out = 1.0 + theta[0] * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)
        return out if np.ndim(out) else float(out)

    def h_grad(self, theta, u, v):
        self._validate_theta(theta)
        u = self._check_unit(u, "u")
        v = self._check_unit(v, "v")
        g = (1.0 - 2.0 * u) * (1.0 - 2.0 * v)
        return np.asarray(g)[..., None]

    def prepare_sample(self, x, y):
        margins = rank_transform(x, y)
        return margins.u, margins.v

    def _build_cache(self, u, v):
        a = 1.0 - 2.0 * u
        b = 1.0 - 2.0 * v
        return {"a": a, "b": b, "paired": a * b, "n": u.size}

    def _h_pair(self, theta, cache):
        h = 1.0 + theta[0] * cache["paired"]
        return h, np.full(cache["n"], 1.0 / cache["n"])

    def _h_cross(self, theta, cache):
        h = 1.0 + theta[0] * np.outer(cache["a"], cache["b"])
        return h, 1.0 / cache["n"] ** 2

    def _jac_pair(self, vec, h, theta, cache):
        return np.array([vec @ cache["paired"]])

    def _jac_cross(self, vec, h, theta, cache):
        return np.array([cache["a"] @ vec @ cache["b"]])

    def to_config(self) -> str:
        return "\n".join(["family=fgm", "bounds=" + _fmt_bounds(self.bounds)])


@dataclass(frozen=True)
class EmpiricalMargins:
    """Rescaled empirical CDF values rank/(n+1), strictly inside (0, 1)."""

    u: np.ndarray
    v: np.ndarray


def rank_transform(x, y) -> EmpiricalMargins:
    """Mid-rank pseudo-observations ``rank/(n+1)`` for both margins."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"len(x)={x.size} != len(y)={y.size}")
    if x.size < 2:
        raise LengthMismatchError("need at least two observations")
    n = x.size
    return EmpiricalMargins(rankdata(x, method="average") / (n + 1),
                            rankdata(y, method="average") / (n + 1))


def gaussian_model(alpha_bounds=(-10.0, 10.0), beta_bounds=(-10.0, 10.0)) -> ExpBilinearModel:
    """The quadratic-exponent model covering centered bivariate Gaussians.

    Basis terms x^2, y^2 and xy; the constrained equal-coefficient form of
    the centered Gaussian ratio is a subset of this three-parameter family.
    """
    return ExpBilinearModel(["x2", "y2", "xy"], alpha_bounds, beta_bounds)


def gaussian_ratio_coefficients(rho: float, sigma: float = 1.0) -> ParamVector:
    """Exact ratio parameters of a centered Gaussian with correlation rho."""
    if not -1.0 < rho < 1.0:
        raise ValueError("|rho| must be < 1")
    r2 = 1.0 - rho**2
    quad = -(rho**2) / (2.0 * sigma**2 * r2)
    return ParamVector(-0.5 * np.log(r2), (quad, quad, rho / (sigma**2 * r2)))


def h_eval(model: RatioModel, theta, x, y):
    """Operation-style alias for ``model.h``."""
    return model.h(theta, x, y)


def h_grad(model: RatioModel, theta, x, y):
    """Operation-style alias for ``model.h_grad``."""
    return model.h_grad(theta, x, y)


# -- plain-text model descriptors ---------------------------------------


def _fmt_bounds(bounds: np.ndarray) -> str:
    return ",".join(f"{lo:.17g}:{hi:.17g}" for lo, hi in bounds)


def _parse_bounds(text: str) -> np.ndarray:
    rows = []
    for chunk in text.split(","):
        lo, hi = chunk.split(":")
        rows.append((float(lo), float(hi)))
    return np.asarray(rows)


def model_to_config(model: RatioModel) -> str:
    """Serialize a model to the plain-text key=value descriptor format."""
    return model.to_config()


def model_from_config(text: str) -> RatioModel:
    """Rebuild a model from :func:`model_to_config` output."""
    fields = {}
    for raw in text.strip().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    family = fields.get("family")
    bounds = _parse_bounds(fields["bounds"]) if "bounds" in fields else None
    if family == "expbilinear":
        names = fields["basis"].split(",")
        if bounds is None:
            return ExpBilinearModel(names)
        if bounds.shape != (1 + len(names), 2):
            raise ValueError("bounds row count does not match model dimension")
        return ExpBilinearModel(names, alpha_bounds=bounds[0], beta_bounds=bounds[1:])
    if family == "finite":
        lx = fields["levels_x"].split(",")
        ly = fields["levels_y"].split(",")
        if bounds is None:
            return FiniteDiscreteModel(lx, ly)
        if bounds.shape != (len(lx) * len(ly), 2):
            raise ValueError("bounds row count does not match model dimension")
        return FiniteDiscreteModel(lx, ly, alpha_bounds=bounds[0], beta_bounds=bounds[1:])
    if family == "fgm":
        return FgmCopulaModel() if bounds is None else FgmCopulaModel(theta_bounds=bounds[0])
    raise ValueError(f"unknown model family {family!r}")
