"""
Coefficient models ``(b, sigma)`` and test functions ``f``.

A model carries its spatial derivatives and the bound constants
``K1 ... K6`` of the hypotheses the inequality checks rely on. Models and
test functions are parsed from short textual specs such as
``linear:0.5`` or ``step:0.1`` so that the CLI and configuration files
can name them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from fbmlab.errors import ConfigurationError

logger = logging.getLogger(__name__)

Coefficient = Callable[[float, np.ndarray], np.ndarray]
Scalar = Callable[[np.ndarray], np.ndarray]

_BOUND_SLACK = 1e-12
_EXP_CLAMP = 5.0


@dataclass(frozen=True)
class ModelBounds:
    """Bound constants of a model.

    Attributes:
        K1: Bound on ``|db|``.
        K2: Bound on ``|sigma^-1|``.
        K3: Bound on ``|db|`` used by the Bismut-based estimates.
        K4: Upper bound on ``|sigma^-1|``.
        K5: Lower bound on ``|sigma^-1|``.
        K6: Joint Lipschitz constant of ``(b, sigma)``.
        sigma_sup: ``sup |sigma|``.
    """

    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    K6: float
    sigma_sup: float


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """Drift ``b(t, x)``, diffusion ``sigma(t, x)`` and their ``x``-derivatives.

    Coefficients are vectorised over ``x``. In an additive model ``sigma``
    depends on ``t`` only.
    """

    name: str
    b: Coefficient
    sigma: Coefficient
    db: Coefficient
    dsigma: Coefficient
    additive: bool
    bounds: ModelBounds
    zero_drift: bool = False

    def sigma_at(self, t: float) -> float:
        """``sigma(t)`` of an additive model."""
        return float(np.asarray(self.sigma(t, np.zeros(1)))[0])

    def check_bounds(self, times: np.ndarray, states: np.ndarray) -> list[str]:
        """Sample the bound invariants on ``times x states``.

        Returns:
            Human-readable descriptions of every violated bound, empty when
            the model is consistent with its constants on the sample.
        """
        k = self.bounds
        states = np.asarray(states, dtype=float)
        shifted = np.roll(states, 1)
        moved = states != shifted
        violations: list[str] = []
        for t in np.asarray(times, dtype=float):
            db = np.max(np.abs(self.db(t, states)))
            if db > max(k.K1, k.K3) + _BOUND_SLACK:
                violations.append(f"|db|={db:.6g} exceeds K1/K3 at t={t:g}")
            sig = np.abs(self.sigma(t, states))
            if np.max(sig) > k.sigma_sup + _BOUND_SLACK:
                violations.append(f"|sigma| exceeds sigma_sup={k.sigma_sup:g} at t={t:g}")
            inverse = 1.0 / sig
            if np.max(inverse) > min(k.K2, k.K4) + _BOUND_SLACK or np.min(inverse) < k.K5 - _BOUND_SLACK:
                violations.append(f"|sigma^-1| outside [K5, min(K2, K4)] at t={t:g}")
            if np.any(moved):
                lhs = np.abs(self.b(t, states) - self.b(t, shifted)) + np.abs(
                    self.sigma(t, states) - self.sigma(t, shifted)
                )
                rhs = k.K6 * np.abs(states - shifted)
                if np.any(lhs[moved] > rhs[moved] * (1.0 + 1e-9) + _BOUND_SLACK):
                    violations.append(f"Lipschitz constant K6={k.K6:g} violated at t={t:g}")
        return violations


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A test function ``f`` with optional derivative and range bounds."""

    __test__ = False  # not a pytest class

    name: str
    f: Scalar
    df: Optional[Scalar]
    lower: float
    upper: float

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.f(z)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    @property
    def positive(self) -> bool:
        return self.lower > 0.0

    @property
    def nonnegative(self) -> bool:
        return self.lower >= 0.0

    def shifted(self, y: float) -> "TestFunction":
        """``z -> f(z + y)``."""
        df = None if self.df is None else (lambda z, d=self.df: d(z + y))
        return TestFunction(f"{self.name}(.+{y:g})", lambda z: self.f(z + y), df, self.lower, self.upper)


# ----------------------------------------------------------------------
# Model constructors
# ----------------------------------------------------------------------


def _zeros(t: float, x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def constant_sigma(value: float) -> Coefficient:
    return lambda t, x: np.full_like(x, value)


def zero_model(sigma: float = 1.0) -> CoefficientModel:
    _require_nonzero_sigma(sigma)
    inv = 1.0 / abs(sigma)
    return CoefficientModel(
        name=f"zero:{sigma:g}",
        b=_zeros,
        sigma=constant_sigma(sigma),
        db=_zeros,
        dsigma=_zeros,
        additive=True,
        bounds=ModelBounds(0.0, inv, 0.0, inv, inv, 0.0, abs(sigma)),
        zero_drift=True,
    )


def linear_model(kappa: float, sigma: float = 1.0, name: Optional[str] = None) -> CoefficientModel:
    """``b(t, x) = kappa x`` with constant ``sigma``."""
    _require_nonzero_sigma(sigma)
    inv = 1.0 / abs(sigma)
    k = abs(kappa)
    return CoefficientModel(
        name=name or f"linear:{kappa:g}:{sigma:g}",
        b=lambda t, x: kappa * x,
        sigma=constant_sigma(sigma),
        db=lambda t, x: np.full_like(x, kappa),
        dsigma=_zeros,
        additive=True,
        bounds=ModelBounds(k, inv, k, inv, inv, k, abs(sigma)),
        zero_drift=kappa == 0.0,
    )


def ou_model(theta: float, sigma: float = 1.0) -> CoefficientModel:
    """Mean-reverting ``b(t, x) = -theta x``."""
    return linear_model(-theta, sigma, name=f"ou:{theta:g}:{sigma:g}")


def trig_model(a: float = 1.0) -> CoefficientModel:
    """``b = a sin x`` with state-dependent ``sigma = 1 + cos(x) / 2``."""
    return CoefficientModel(
        name=f"trig:{a:g}",
        b=lambda t, x: a * np.sin(x),
        sigma=lambda t, x: 1.0 + 0.5 * np.cos(x),
        db=lambda t, x: a * np.cos(x),
        dsigma=lambda t, x: -0.5 * np.sin(x),
        additive=False,
        bounds=ModelBounds(abs(a), 2.0, abs(a), 2.0, 1.0 / 1.5, abs(a) + 0.5, 1.5),
    )


def table_model(path: str | Path, sigma: float = 1.0) -> CoefficientModel:
    """Piecewise-linear drift read from a CSV table with columns ``x,b``.

    The drift is extended flat beyond the table, so ``db`` vanishes there.

    Raises:
        ConfigurationError: If the file is missing or malformed.
    """
    xs, bs = load_table(path, ("x", "b"))
    slopes = np.diff(bs) / np.diff(xs)

    def db(t: float, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(xs, x, side="right") - 1
        inside = (idx >= 0) & (idx < len(slopes))
        out = np.zeros_like(x, dtype=float)
        out[inside] = slopes[idx[inside]]
        return out

    k = float(np.max(np.abs(slopes)))
    _require_nonzero_sigma(sigma)
    inv = 1.0 / abs(sigma)
    logger.info("Loaded drift table %s (%d knots, Lipschitz %.4g)", path, len(xs), k)
    return CoefficientModel(
        name=f"table:{path}",
        b=lambda t, x: np.interp(x, xs, bs),
        sigma=constant_sigma(sigma),
        db=db,
        dsigma=_zeros,
        additive=True,
        bounds=ModelBounds(k, inv, k, inv, inv, k, abs(sigma)),
        zero_drift=bool(np.all(bs == 0.0)),
    )


def parse_model(spec: str) -> CoefficientModel:
    """Build a model from ``zero[:s]``, ``linear:k[:s]``, ``ou:theta[:s]``,
    ``trig[:a]`` or ``table:FILE``.

    Raises:
        ConfigurationError: On an unknown kind or malformed numbers.
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "table":
        if not rest:
            raise ConfigurationError("table model needs a file: table:FILE")
        return table_model(rest)
    args = _numbers(rest, spec)
    if kind == "zero" and len(args) <= 1:
        return zero_model(*args)
    if kind == "linear" and 1 <= len(args) <= 2:
        return linear_model(*args)
    if kind == "ou" and 1 <= len(args) <= 2:
        return ou_model(*args)
    if kind == "trig" and len(args) <= 1:
        return trig_model(*args)
    raise ConfigurationError(
        f"Unknown model spec '{spec}'. Expected zero[:s], linear:k[:s], ou:theta[:s], "
        "trig[:a] or table:FILE"
    )


# ----------------------------------------------------------------------
# Test functions
# ----------------------------------------------------------------------


def _bump(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi * zi))
    return out


def _bump_derivative(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    q = 1.0 - zi * zi
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * zi / (q * q))
    return out


def parse_test_function(spec: str) -> TestFunction:
    """Build a test function from its name.

    Known names: ``id``, ``square``, ``sin``, ``cos``, ``exp-clamped``,
    ``bump``, ``gauss-bump`` (``1 + exp(-z^2)``), ``two-plus-sin``,
    ``step:a`` (indicator of ``z >= a``) and ``const:c``.

    Raises:
        ConfigurationError: On an unknown name.
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    args = _numbers(rest, spec)
    inf = math.inf
    if kind == "id" and not args:
        return TestFunction("id", lambda z: np.asarray(z, dtype=float), lambda z: np.ones_like(z), -inf, inf)
    if kind == "square" and not args:
        return TestFunction("square", lambda z: z * z, lambda z: 2.0 * z, 0.0, inf)
    if kind == "sin" and not args:
        return TestFunction("sin", np.sin, np.cos, -1.0, 1.0)
    if kind == "cos" and not args:
        return TestFunction("cos", np.cos, lambda z: -np.sin(z), -1.0, 1.0)
    if kind == "exp-clamped" and not args:
        return TestFunction(
            "exp-clamped",
            lambda z: np.exp(np.clip(z, -_EXP_CLAMP, _EXP_CLAMP)),
            lambda z: np.where(np.abs(z) < _EXP_CLAMP, np.exp(np.clip(z, -_EXP_CLAMP, _EXP_CLAMP)), 0.0),
            math.exp(-_EXP_CLAMP),
            math.exp(_EXP_CLAMP),
        )
    if kind == "bump" and not args:
        return TestFunction("bump", _bump, _bump_derivative, 0.0, 1.0)
    if kind == "gauss-bump" and not args:
        return TestFunction(
            "gauss-bump",
            lambda z: 1.0 + np.exp(-z * z),
            lambda z: -2.0 * z * np.exp(-z * z),
            1.0,
            2.0,
        )
    if kind == "two-plus-sin" and not args:
        return TestFunction("two-plus-sin", lambda z: 2.0 + np.sin(z), np.cos, 1.0, 3.0)
    if kind == "step" and len(args) == 1:
        a = args[0]
        return TestFunction(f"step:{a:g}", lambda z: (np.asarray(z) >= a).astype(float), None, 0.0, 1.0)
    if kind == "const" and len(args) == 1:
        c = args[0]
        return TestFunction(
            f"const:{c:g}", lambda z: np.full_like(np.asarray(z, dtype=float), c), np.zeros_like, c, c
        )
    raise ConfigurationError(
        f"Unknown test function '{spec}'. Expected id, square, sin, cos, exp-clamped, "
        "bump, gauss-bump, two-plus-sin, step:a or const:c"
    )


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _numbers(text: str, spec: str) -> list[float]:
    if not text:
        return []
    try:
        return [float(part) for part in text.split(":")]
    except ValueError as exc:
        raise ConfigurationError(f"Malformed number in spec '{spec}'") from exc


def _require_nonzero_sigma(sigma: float) -> None:
    if sigma == 0.0 or not math.isfinite(sigma):
        raise ConfigurationError(f"diffusion coefficient must be finite and non-zero, got {sigma}")


def load_table(path: str | Path, columns: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV table with a header row, sorted by the first column."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Table file not found: {path.resolve()}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigurationError(f"Invalid numeric table in {path}: {exc}") from exc
    if data.shape[1] < 2 or data.shape[0] < 2:
        raise ConfigurationError(
            f"Table {path} needs at least two rows of columns {','.join(columns)}"
        )
    order = np.argsort(data[:, 0], kind="stable")
    xs, ys = data[order, 0], data[order, 1]
    if np.any(np.diff(xs) <= 0.0):
        raise ConfigurationError(f"Table {path} has repeated {columns[0]} values")
    return xs, ys
