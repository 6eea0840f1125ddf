#!/usr/bin/env python3
"""Regenerate the moment-equation table shipped in docs/.

The runtime solver (`spinburst.cumulant`) evaluates hand-vectorized
expressions; this script prints the same equations produced mechanically
from the operator algebra and the factorization rule, so the two can be
diffed by eye.  The test suite performs the numeric comparison at random
states; the table exists for human review.

Couplings are kept as exact integers so every coefficient in the output
is a rational number.
"""

import argparse
import sys

from spinburst.closure_check import format_equations

HEADER = """\
Moment equations generated from the operator algebra
=====================================================

Conventions
  S+-, Sz        electron pseudo-spin (lower level = optically pumped)
  ni+-, niz      bath spin at site i
  sz             <Sz>
  chi_i          <ni+ S->       (chic_i is its conjugate)
  gp_i_j         <ni+ nj->
  gm_i_j         <ni+ Sz nj->

Each block lists the coherent generator with the overall factor g split
off and omega_s, kappa set to zero (their terms are the electron-only
rotation and a diagonal coupling-difference shift, listed separately by
the solver), then the dissipative generator carrying a factor gamma_r,
then every closure applied to moments outside the tracked set.

Couplings used below: small integer placeholders, so every printed
coefficient is an exact dyadic rational (rendered as a Python number).

"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="print the mechanically generated moment equations")
    parser.add_argument("--sites", type=int, default=3,
                        help="bath size for the listing (default 3)")
    parser.add_argument("--output", default=None,
                        help="write to this file instead of stdout")
    args = parser.parse_args(argv)
    if args.sites < 1:
        parser.error("--sites must be at least 1")
    couplings = list(range(2, 2 + args.sites))
    body = HEADER + (
        f"Bath size {args.sites}, couplings g_i = "
        f"{couplings} (integer placeholders).\n\n")
    body += format_equations(couplings)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return 0


if __name__ == "__main__":
    sys.exit(main())
