"""Generate the shipped (3,6)-regular parity-check matrix by progressive
edge growth and write it to src/turboce/data/ldpc_144_288.alist.

Deterministic: for each new edge of each variable node (processed in index
order) a BFS over the current graph finds the checks farthest from the
variable; among candidates with remaining capacity the lowest-degree,
lowest-index check wins.  The seed permutes the tie-break order and is
bumped until the matrix has full GF(2) row rank.
"""
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from turboce.ldpc import _gf2_rref  # noqa: E402

N, M, DV, DC = 288, 144, 3, 6


def bfs_check_distances(v, var_neighbors, check_neighbors):
    """Distance from variable v to every check through the current graph."""
    dist = np.full(M, -1, dtype=int)
    seen_vars = {v}
    frontier_vars = [v]
    level = 0
    while frontier_vars:
        next_checks = []
        for var in frontier_vars:
            for c in var_neighbors[var]:
                if dist[c] < 0:
                    dist[c] = level
                    next_checks.append(c)
        frontier_vars = []
        for c in next_checks:
            for var in check_neighbors[c]:
                if var not in seen_vars:
                    seen_vars.add(var)
                    frontier_vars.append(var)
        level += 1
    return dist


def peg(seed):
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(M)
    var_neighbors = [[] for _ in range(N)]
    check_neighbors = [[] for _ in range(M)]
    deg = np.zeros(M, dtype=int)

    def pick(candidates):
        best = min(candidates, key=lambda c: (deg[c], tiebreak[c]))
        return best

    for v in range(N):
        for _ in range(DV):
            open_checks = [c for c in range(M) if deg[c] < DC and c not in var_neighbors[v]]
            if not var_neighbors[v]:
                c = pick(open_checks)
            else:
                dist = bfs_check_distances(v, var_neighbors, check_neighbors)
                unreached = [c for c in open_checks if dist[c] < 0]
                if unreached:
                    c = pick(unreached)
                else:
                    far = max(dist[c] for c in open_checks)
                    c = pick([c for c in open_checks if dist[c] == far])
            var_neighbors[v].append(c)
            check_neighbors[c].append(v)
            deg[c] += 1
    return var_neighbors, check_neighbors, deg


def full_rank(check_neighbors):
    dense = np.zeros((M, N), dtype=np.uint8)
    for c, vars_ in enumerate(check_neighbors):
        dense[c, vars_] = 1
    _, pivots = _gf2_rref(dense)
    return pivots.size == M


def write_alist(path, var_neighbors, check_neighbors):
    lines = [f"{N} {M}", f"{DV} {DC}"]
    lines.append(" ".join(str(DV) for _ in range(N)))
    lines.append(" ".join(str(DC) for _ in range(M)))
    for v in range(N):
        lines.append(" ".join(str(c + 1) for c in sorted(var_neighbors[v])))
    for c in range(M):
        lines.append(" ".join(str(v + 1) for v in sorted(check_neighbors[c])))
    path.write_text("\n".join(lines) + "\n")


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "turboce" / "data" / "ldpc_144_288.alist"
    out.parent.mkdir(parents=True, exist_ok=True)
    for seed in range(64):
        var_neighbors, check_neighbors, deg = peg(seed)
        assert all(d == DC for d in deg), "construction must end exactly (3,6)-regular"
        if full_rank(check_neighbors):
            write_alist(out, var_neighbors, check_neighbors)
            print(f"seed {seed}: full-rank (3,6)-regular matrix written to {out}")
            return
    raise SystemExit("no full-rank construction found in 64 seeds")


if __name__ == "__main__":
    main()
