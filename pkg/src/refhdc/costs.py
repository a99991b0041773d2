"""Closed-form FLOP and traffic accounting for baseline and sub-model training.

All counts are exact Python integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


def c1(n: int, D: int, d: int) -> int:
    """Encoding cost: one n x d by d x D product plus the trig, n*D*(2d+1)."""
    return n * D * (2 * d + 1)


def c2(n: int, D: int) -> int:
    """Bundling cost."""
    return n * D


def c3(n: int, C: int, D: int) -> int:
    """One retraining epoch, dominated by the n x C distance evaluations."""
    return n * C * 3 * (2 * D + 1)


def cost_baseline(n: int, C: int, D: int, d: int, L: int, G: int) -> int:
    return c1(n, D, d) + c2(n, D) + L * G * c3(n, C, D)


def cost_refhdc(n: int, C: int, D: int, d: int, M: int, L: int, G_T: int, G_R: int, D0: int) -> int:
    if M < 1 or D % M:
        raise ValueError(f"M={M} must divide D={D}")
    D_hat = D // M
    return c1(n, D, d) + c2(n, D) + L * (G_T * c3(n, C, D_hat) + G_R * c3(n, C, D0))


def round_traffic(num_clients: int, C: int, width: int, bytes_per_element: int) -> int:
    """Uplink bytes of one round in which every client sends ``width`` columns."""
    return num_clients * C * width * bytes_per_element


def model_size(C: int, D: int, bytes_per_element: int) -> int:
    return C * D * bytes_per_element


@dataclass(frozen=True)
class CostReport:
    c1: int
    c2: int
    c3_per_epoch: int
    total_flops: int
    uplink_bytes_total: int
    rounds_to_target: Optional[int] = None


def rounds_to_target(accuracies: Sequence[float], target: float) -> Optional[int]:
    """1-based index of the first round with accuracy >= target, else None."""
    for i, acc in enumerate(accuracies, start=1):
        if acc >= target:
            return i
    return None


def percent_delta(value: float, reference: float) -> str:
    """Signed change in percent, at most one decimal: ``-55%``, ``+2.5%``."""
    if reference == 0:
        return "n/a"
    pct = round((value - reference) / reference * 100.0, 1)
    if pct == 0:
        return "0%"
    text = f"{pct:+.1f}".rstrip("0").rstrip(".")
    return f"{text}%"
