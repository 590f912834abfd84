"""Named models with known spectral behaviour, used by tests, scripts and the CLI."""

from __future__ import annotations

from typing import Callable

from .model import DiscreteModel, Rate, from_b_and_mu


def power_birth(gamma: float) -> DiscreteModel:
    """``b_n = a_{n+1} = n^gamma`` with ``b_0 = a_1 = 1``, so ``mu == 1``.

    Minimal spectrum discrete iff ``gamma > 2``.
    """
    return DiscreteModel(
        a=Rate.from_expr(f"(n-1)^{gamma}", overrides={1: 1.0}),
        b=Rate.from_expr(f"n^{gamma}", overrides={0: 1.0}),
        name=f"power-birth(gamma={gamma})",
    )


def power_symmetric(gamma: float) -> DiscreteModel:
    """``a_n = b_n = n^gamma`` with ``b_0 = 1``.  Maximal spectrum discrete iff ``gamma > 2``."""
    return DiscreteModel(
        a=Rate.from_expr(f"n^{gamma}"),
        b=Rate.from_expr(f"n^{gamma}", overrides={0: 1.0}),
        name=f"power-symmetric(gamma={gamma})",
    )


def quartic_birth() -> DiscreteModel:
    """``b_n = n^4`` and ``mu_n = n^-2`` (both set to 1 at ``n = 0``): both spectra discrete."""
    return from_b_and_mu(Rate.from_expr("n^4", overrides={0: 1.0}),
                         Rate.from_expr("n^(-2)", overrides={0: 1.0}),
                         name="quartic-birth")


def geometric_killing() -> DiscreteModel:
    """``a_n = b_n = (n+1)/4``, ``c_n = 9(n+1)/16``: ``h_n`` grows like ``4^n``, minimal spectrum discrete."""
    return DiscreteModel(a="(n+1)/4", b="(n+1)/4", c="9*(n+1)/16", name="geometric-killing")


def quadratic_killing() -> DiscreteModel:
    """``a_n = b_n = (n+1)^2``, ``c_n = 5 + 10/(5n-12)``: essential spectrum nonempty."""
    return DiscreteModel(a="(n+1)^2", b="(n+1)^2", c="5 + 10/(5*n - 12)", name="quadratic-killing")


def vanishing_killing() -> DiscreteModel:
    """``a_n = b_n = 1``, ``c_n = 1/(n+1)``: bounded rates, not discrete."""
    return DiscreteModel(a="1", b="1", c="1/(n+1)", name="vanishing-killing")


def constant_rates(a: float = 1.0, b: float = 1.0, c: float = 0.0) -> DiscreteModel:
    return DiscreteModel(a=repr(float(a)), b=repr(float(b)), c=repr(float(c)), name="constant")


GALLERY: dict[str, Callable[[], DiscreteModel]] = {
    "quartic-birth": quartic_birth,
    "power-birth-3": lambda: power_birth(3.0),
    "power-birth-4": lambda: power_birth(4.0),
    "power-birth-1": lambda: power_birth(1.0),
    "power-symmetric-3": lambda: power_symmetric(3.0),
    "power-symmetric-1": lambda: power_symmetric(1.0),
    "geometric-killing": geometric_killing,
    "quadratic-killing": quadratic_killing,
    "vanishing-killing": vanishing_killing,
}

EXPECTED_VERDICTS = {
    "quartic-birth": "BothDiscrete",
    "power-birth-3": "DiscreteMin",
    "power-birth-4": "DiscreteMin",
    "power-birth-1": "NotDiscrete",
    "power-symmetric-3": "DiscreteMax",
    "power-symmetric-1": "NotDiscrete",
    "geometric-killing": "DiscreteMin",
    "quadratic-killing": "NotDiscrete",
    "vanishing-killing": "NotDiscrete",
}


def get(name: str) -> DiscreteModel:
    try:
        return GALLERY[name]()
    except KeyError:
        raise KeyError(f"unknown gallery model {name!r}; choose from {sorted(GALLERY)}") from None
