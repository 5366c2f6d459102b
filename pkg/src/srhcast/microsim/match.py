"""Greedy nearest-neighbour pairing on age and education.

Cost between candidates is |age difference| + lam * |education-level
difference| with integer lam, so candidate costs are integers and the
search can walk outward in exact cost rings over (age, education) buckets.
Greedy order and tie-breaking are deterministic: left-side candidates are
processed in (age, education, position) order and each takes the current
minimum-cost right-side candidate (lowest position on ties).
"""

from __future__ import annotations

import numpy as np

from ..population import MAX_AGE

EDU_MAX = 9  # education codes 0..9


def greedy_match(
    age_a: np.ndarray,
    edu_a: np.ndarray,
    age_b: np.ndarray,
    edu_b: np.ndarray,
    lam: int = 2,
) -> list[tuple[int, int]]:
    """Pair each left index with a right index, greedily minimizing cost.

    Returns (left_pos, right_pos) pairs; len = min(len(a), len(b)).
    """
    n_a, n_b = len(age_a), len(age_b)
    if n_a == 0 or n_b == 0:
        return []

    buckets: dict[tuple[int, int], list[int]] = {}
    for j in range(n_b):
        buckets.setdefault((int(age_b[j]), int(edu_b[j])), []).append(j)
    for lst in buckets.values():
        lst.reverse()  # pop() then yields lowest position first

    order = np.lexsort((np.arange(n_a), edu_a, age_a))
    max_cost = MAX_AGE + lam * EDU_MAX
    pairs: list[tuple[int, int]] = []
    remaining = n_b
    for i in order:
        if remaining == 0:
            break
        a_age, a_edu = int(age_a[i]), int(edu_a[i])
        match = None
        for cost in range(max_cost + 1):
            best_pos = None
            best_key = None
            for d_edu in range(min(cost // lam, EDU_MAX) + 1):
                d_age = cost - lam * d_edu
                if d_age > MAX_AGE:
                    continue
                for edu in {a_edu - d_edu, a_edu + d_edu}:
                    if not 0 <= edu <= EDU_MAX:
                        continue
                    for age in {a_age - d_age, a_age + d_age}:
                        if not 0 <= age <= MAX_AGE + 1:
                            continue
                        lst = buckets.get((age, edu))
                        if lst:
                            j = lst[-1]
                            if best_pos is None or j < best_pos:
                                best_pos = j
                                best_key = (age, edu)
                    # d_age == 0 makes age-bucket pair identical; set dedups
            if best_pos is not None:
                buckets[best_key].pop()
                match = best_pos
                break
        if match is not None:
            pairs.append((int(i), match))
            remaining -= 1
    return pairs
