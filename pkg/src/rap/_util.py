"""Small shared helpers: moment-order keys and round-trip float formatting."""

from __future__ import annotations

from fractions import Fraction


def format_alpha(alpha: Fraction) -> str:
    """Canonical string key for a moment order: '1', '0.5', '1.5', ..."""
    alpha = Fraction(alpha)
    if alpha.denominator == 1:
        return str(alpha.numerator)
    return repr(float(alpha))


def parse_alpha(text: str) -> Fraction:
    """Inverse of format_alpha; accepts '1', '0.5', '3/2'."""
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    return Fraction(text) if "." not in text else Fraction(float(text)).limit_denominator(1024)


def fmt17(x: float) -> str:
    """Format a double with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")
