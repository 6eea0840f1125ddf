"""Mechanical re-derivation of the moment equations for small baths.

The production right-hand side in `cumulant` is hand-vectorized algebra.
This module rebuilds the same equations from first principles with no
shared code path: operators are Pauli strings with exact product rules,
the generator is applied in its adjoint form

    d<O>/dt = < i[H, O] + gamma_r (S+ O S- - 1/2 {S+ S-, O}) >

and every string expectation in the result is pushed through
`cumulant.factorize_moment`.  Evaluating the outcome on arbitrary moment
values and diffing against `cumulant.cumulant_rhs` checks the derivation
term by term, including every excluded-index bookkeeping detail; the
test suite does this for baths large enough that all structural cases
(shared, adjacent, disjoint site indices) occur.

`tools/derive_moment_equations.py` uses the same machinery to write the
equations out in readable form.

Strings are tuples of (site, flavor) sorted by site with the electron at
site -1; flavors are '+', '-', 'z'.  A site never repeats inside one
string; products that would repeat a site are reduced on the spot.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .cumulant import CumulantState, evaluate_expansion, factorize_moment

ELECTRON = -1

# single-site products: (left, right) -> ((coeff, flavor-or-None), ...)
_SINGLE = {
    ("+", "+"): (),
    ("-", "-"): (),
    ("+", "-"): ((Fraction(1, 2), None), (1, "z")),
    ("-", "+"): ((Fraction(1, 2), None), (-1, "z")),
    ("+", "z"): ((Fraction(-1, 2), "+"),),
    ("z", "+"): ((Fraction(1, 2), "+"),),
    ("-", "z"): ((Fraction(1, 2), "-"),),
    ("z", "-"): ((Fraction(-1, 2), "-"),),
    ("z", "z"): ((Fraction(1, 4), None),),
}


def string_mul(left: tuple, right: tuple):
    """Product of two unique-site strings as [(coeff, string), ...]."""
    left_map = dict(left)
    right_map = dict(right)
    terms = [(1, {})]
    for site in sorted(set(left_map) | set(right_map)):
        f1 = left_map.get(site)
        f2 = right_map.get(site)
        if f1 is not None and f2 is not None:
            branches = _SINGLE[(f1, f2)]
            new_terms = []
            for coeff, ops in terms:
                for factor, flavor in branches:
                    grown = dict(ops)
                    if flavor is not None:
                        grown[site] = flavor
                    new_terms.append((coeff * factor, grown))
            terms = new_terms
        else:
            flavor = f1 if f1 is not None else f2
            for _, ops in terms:
                ops[site] = flavor
    return [(coeff, tuple(sorted(ops.items())))
            for coeff, ops in terms if coeff != 0]


def op_add(target: dict, source: dict, scale=1):
    for string, coeff in source.items():
        val = target.get(string, 0) + scale * coeff
        if val == 0:
            target.pop(string, None)
        else:
            target[string] = val
    return target


def op_mul(op1: dict, op2: dict) -> dict:
    out: dict = {}
    for s1, c1 in op1.items():
        for s2, c2 in op2.items():
            for factor, string in string_mul(s1, s2):
                val = out.get(string, 0) + c1 * c2 * factor
                if val == 0:
                    out.pop(string, None)
                else:
                    out[string] = val
    return out


def commutator(op1: dict, op2: dict) -> dict:
    out = op_mul(op1, op2)
    return op_add(out, op_mul(op2, op1), scale=-1)


def hamiltonian(couplings, g, omega_s, kappa) -> dict:
    """Flip-flop + dispersive + level shift + electron splitting."""
    h: dict = {}
    for i, gi in enumerate(couplings):
        amp = g * gi / 2
        op_add(h, {((ELECTRON, "-"), (i, "+")): amp})
        op_add(h, {((ELECTRON, "+"), (i, "-")): amp})
        op_add(h, {((ELECTRON, "z"), (i, "z")): g * gi})
        op_add(h, {((i, "z"),): g * kappa * gi})
    op_add(h, {((ELECTRON, "z"),): omega_s})
    return h


def adjoint_generator(op: dict, couplings, g, omega_s, kappa,
                      gamma_r) -> dict:
    """i[H, O] plus the adjoint pump dissipator."""
    h = hamiltonian(couplings, g, omega_s, kappa)
    out: dict = {}
    op_add(out, commutator(h, op), scale=1j)
    s_plus = {((ELECTRON, "+"),): 1}
    s_minus = {((ELECTRON, "-"),): 1}
    number = op_mul(s_plus, s_minus)
    op_add(out, op_mul(s_plus, op_mul(op, s_minus)), scale=gamma_r)
    op_add(out, op_mul(number, op), scale=-gamma_r / 2)
    op_add(out, op_mul(op, number), scale=-gamma_r / 2)
    return out


def tracked_operator(kind: str, *sites) -> dict:
    if kind == "sz":
        return {((ELECTRON, "z"),): 1}
    if kind == "chi":
        (i,) = sites
        return {((ELECTRON, "-"), (i, "+")): 1}
    if kind == "gp":
        i, j = sites
        if i == j:
            return {(): Fraction(1, 2), ((i, "z"),): 1}
        return {((i, "+"), (j, "-")): 1}
    if kind == "gm":
        i, j = sites
        if i == j:
            return {((ELECTRON, "z"),): Fraction(1, 2),
                    ((ELECTRON, "z"), (i, "z")): 1}
        return {((ELECTRON, "z"), (i, "+"), (j, "-")): 1}
    raise ValueError(f"unknown tracked moment {kind!r}")


def string_to_factorization(string: tuple) -> dict:
    ops = [(flavor, None if site == ELECTRON else site)
           for site, flavor in string]
    return factorize_moment(ops)


def expectation(op: dict, state: CumulantState) -> complex:
    total = 0j
    for string, coeff in op.items():
        expansion = string_to_factorization(string)
        total += complex(coeff) * evaluate_expansion(expansion, state)
    return total


def derived_rhs(couplings, g, omega_s, kappa, gamma_r,
                state: CumulantState) -> CumulantState:
    """Moment derivatives straight from the operator algebra + closure."""
    couplings = np.asarray(couplings, dtype=float)
    n = len(couplings)

    def ddt(kind, *sites):
        gen = adjoint_generator(tracked_operator(kind, *sites), couplings,
                                g, omega_s, kappa, gamma_r)
        return expectation(gen, state)

    d_sz = ddt("sz").real
    d_chi = np.array([ddt("chi", i) for i in range(n)])
    d_gp = np.array([[ddt("gp", i, j) for j in range(n)]
                     for i in range(n)])
    d_gm = np.array([[ddt("gm", i, j) for j in range(n)]
                     for i in range(n)])
    return CumulantState(s_z=d_sz, chi=d_chi, gamma_p=d_gp, gamma_m=d_gm)


def format_equations(couplings) -> str:
    """Human-readable listing of the generated equations.

    Coefficients are exact rationals in the couplings supplied (use small
    integers to keep the table legible); gamma_r, omega_s and kappa are
    carried symbolically as tags on the three generator pieces.
    """
    couplings = list(couplings)
    n = len(couplings)

    def render_op(op):
        parts = []
        for string, coeff in sorted(op.items()):
            label = "*".join(
                ("S" if site == ELECTRON else f"n{site}") + flavor
                for site, flavor in string) or "1"
            parts.append(f"({coeff}) {label}")
        return " + ".join(parts) if parts else "0"

    lines = []
    targets = [("sz", ())]
    targets += [("chi", (i,)) for i in range(n)]
    targets += [("gp", (i, j)) for i in range(n) for j in range(n)]
    targets += [("gm", (i, j)) for i in range(n) for j in range(n)]
    for kind, sites in targets:
        op = tracked_operator(kind, *sites)
        label = kind + "".join(f"_{s}" for s in sites)
        h = hamiltonian(couplings, 1, 0, 0)
        ham_part = {}
        op_add(ham_part, commutator(h, op), scale=1j)
        lines.append(f"d/dt {label}:")
        lines.append("  coherent (x g, omega_s and kappa set to 0): "
                     + render_op(ham_part))
        s_plus = {((ELECTRON, "+"),): 1}
        s_minus = {((ELECTRON, "-"),): 1}
        number = op_mul(s_plus, s_minus)
        diss = op_mul(s_plus, op_mul(op, s_minus))
        op_add(diss, op_mul(number, op), scale=Fraction(-1, 2))
        op_add(diss, op_mul(op, number), scale=Fraction(-1, 2))
        lines.append("  dissipative (x gamma_r): " + render_op(diss))
        closures = []
        for string in sorted(set(ham_part) | set(diss)):
            if len(string) > 2:
                expansion = string_to_factorization(string)
                closures.append((string, expansion))
        for string, expansion in closures:
            label2 = "*".join(
                ("S" if site == ELECTRON else f"n{site}") + flavor
                for site, flavor in string)
            pieces = []
            for prod, coeff in sorted(expansion.items()):
                name = "*".join("_".join(str(x) for x in atom)
                                for atom in prod) or "1"
                pieces.append(f"({coeff}) {name}")
            lines.append(f"    closure <{label2}> -> " +
                         (" + ".join(pieces) if pieces else "0"))
        lines.append("")
    return "\n".join(lines)
