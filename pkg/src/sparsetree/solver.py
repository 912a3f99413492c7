"""Optimal sparse tree search: best-first branch and bound over subproblems.

A subproblem is (support bitmask, remaining depth); unbounded-depth runs drop
the depth from the key.  All objective comparisons are exact on integers
scaled by n*q where the penalty is p/q: units(loss, leaves) = q*loss +
p*n*leaves.  Each record keeps a certified lower bound (one-leaf penalty
floor, equivalence-points bound) optionally raised by the reference-model
guess; a record is solved once its incumbent meets its lower bound, so a
guessed bound may close a subproblem before it is provably optimal.

Exploration pops the smallest current lower bound first, FIFO on ties.
Children whose bound sum cannot beat the parent incumbent are pruned at
expansion.  The returned tree is extracted afterwards as a pass over the
recorded actions minimizing (objective, leaves, depth, structure)
lexicographically per subproblem, which also picks up any child improvements
made after a guessed bound closed the parent.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .dataset import BinaryDataset, EquivalenceClasses, SupportSet, equivalence_classes, minority_total
from .guessing import ReferenceLabels
from .trees import Leaf, Node, Split


class SolverMemoryError(RuntimeError):
    def __init__(self, counters):
        super().__init__(f"subproblem record budget exceeded: {counters}")
        self.counters = counters


@dataclass(frozen=True)
class Regularizer:
    """Leaf penalty lambda = numer/denom in lowest terms, over n samples."""

    numer: int
    denom: int
    n_samples: int

    @classmethod
    def from_text(cls, text: str, n_samples: int) -> "Regularizer":
        try:
            lam = Fraction(text)
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"cannot parse regularization {text!r}: {e}") from None
        return cls.from_fraction(lam, n_samples)

    @classmethod
    def from_fraction(cls, lam: Fraction, n_samples: int) -> "Regularizer":
        if lam < 0:
            raise ValueError("regularization must be >= 0")
        if n_samples < 1:
            raise ValueError("need at least one sample")
        return cls(lam.numerator, lam.denominator, n_samples)

    @property
    def value(self) -> Fraction:
        return Fraction(self.numer, self.denom)

    @property
    def leaf_penalty_units(self) -> int:
        return self.numer * self.n_samples

    def units(self, loss_count: int, leaves: int) -> int:
        """Objective scaled by n*denom: exact integer comparisons."""
        return self.denom * loss_count + self.numer * self.n_samples * leaves

    def fraction(self, units: int) -> Fraction:
        return Fraction(units, self.n_samples * self.denom)


@dataclass
class Counters:
    created: int = 0
    expanded: int = 0
    closed_by_guess: int = 0
    cache_hits: int = 0

    def as_dict(self) -> dict:
        return {
            "created": self.created,
            "expanded": self.expanded,
            "closed_by_guess": self.closed_by_guess,
            "cache_hits": self.cache_hits,
        }


@dataclass
class SolverConfig:
    regularizer: Regularizer
    depth_limit: Optional[int] = None
    reference: Optional[ReferenceLabels] = None
    use_equiv_bound: bool = True
    time_limit_s: Optional[float] = None
    max_records: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.depth_limit is not None and self.depth_limit < 1:
            raise ValueError("depth_limit must be >= 1 when bounded")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class SolveResult:
    tree: Node
    objective: Fraction
    objective_units: int
    loss_count: int
    leaf_count: int
    depth: int
    status: str
    counters: Counters
    regularizer: Regularizer
    depth_limit: Optional[int]
    lb_guess_active: bool
    refused_lb_guess: bool


def explored_count(result: SolveResult) -> Counters:
    return result.counters


# ---------------------------------------------------------------- bound helpers

def leaf_objective(support, bin_data: BinaryDataset, reg: Regularizer) -> tuple[int, Fraction]:
    """Majority-vote leaf for the support: (label, exact objective). Ties predict 0."""
    bits = support.bits if isinstance(support, SupportSet) else int(support)
    n = bits.bit_count()
    pos = (bits & bin_data.pos_mask).bit_count()
    label = 1 if pos > n - pos else 0
    return label, reg.fraction(reg.units(min(pos, n - pos), 1))


def lb_guess_value(support, ref: ReferenceLabels, reg: Regularizer) -> Fraction:
    """Reference disagreement share inside the support plus one leaf penalty."""
    bits = support.bits if isinstance(support, SupportSet) else int(support)
    return reg.fraction(reg.denom * (bits & ref.incorrect_bits).bit_count() + reg.leaf_penalty_units)


def equiv_points_lb(support, eq: EquivalenceClasses, reg: Regularizer) -> Fraction:
    """Equivalence-class minority share inside the support plus one leaf penalty."""
    return reg.fraction(reg.denom * minority_total(eq, support) + reg.leaf_penalty_units)


def split_support(support: SupportSet, column_bits: int) -> tuple[SupportSet, SupportSet]:
    """Partition a support by one indicator column: (bit-1 side, bit-0 side)."""
    left = support.bits & column_bits
    return SupportSet(left, support.size), SupportSet(support.bits ^ left, support.size)


# ---------------------------------------------------------------- records

_LEAF = -1


class _Rec:
    __slots__ = (
        "bits", "depth", "n", "pos", "leaf_units", "true_floor", "guess_floor",
        "lower", "upper", "best", "splits", "parents", "expanded", "solved", "by_guess",
    )

    def __init__(self, bits, depth, n, pos, leaf_units, true_floor, guess_floor):
        self.bits = bits
        self.depth = depth
        self.n = n
        self.pos = pos
        self.leaf_units = leaf_units
        self.true_floor = true_floor
        self.guess_floor = guess_floor
        self.lower = true_floor if guess_floor is None else max(true_floor, guess_floor)
        self.upper = leaf_units
        self.best = _LEAF
        self.splits = []          # (col, keyL, keyR, exactL, exactR); key None = forced leaf child
        self.parents = {}         # key -> None, insertion ordered
        self.expanded = False
        self.solved = False
        self.by_guess = False


class _Search:
    def __init__(self, bin_data: BinaryDataset, cfg: SolverConfig, root_bits: int):
        self.bin = bin_data
        self.cfg = cfg
        self.reg = cfg.regularizer
        self.pen = self.reg.leaf_penalty_units
        self.q = self.reg.denom
        self.pos_bits = bin_data.pos_mask
        self.counters = Counters()
        self.recs: dict = {}
        self.heap: list = []
        self.seq = 0
        self.root_bits = root_bits
        self.bounded = cfg.depth_limit is not None

        ref = cfg.reference
        self.refused = False
        if ref is not None and ref.single_class:
            ref = None
            self.refused = True
        self.inc_bits = ref.incorrect_bits if ref is not None else None
        self.guessing = self.inc_bits is not None

        self.eq = equivalence_classes(bin_data) if cfg.use_equiv_bound else None

        # drop duplicate columns (same or complementary partition); earlier
        # indices win every tie anyway, later copies only cost scan time
        seen = set()
        self.cols = []
        for j, c in enumerate(bin_data.columns):
            cc = c & ((1 << bin_data.n_samples) - 1)
            key = min(cc, cc ^ ((1 << bin_data.n_samples) - 1))
            if key in seen:
                continue
            seen.add(key)
            self.cols.append(j)
        self.colbits = bin_data.columns
        self._pool = None

    # ---------------- record lifecycle

    def _floors(self, bits):
        true_floor = self.pen
        if self.eq is not None:
            true_floor += self.q * minority_total(self.eq, bits)
        guess_floor = None
        if self.guessing:
            guess_floor = self.pen + self.q * (bits & self.inc_bits).bit_count()
        return true_floor, guess_floor

    def _leaf_units(self, bits, n, pos):
        return self.q * min(pos, n - pos) + self.pen

    def _create(self, bits, depth):
        key = (bits, depth)
        rec = self.recs.get(key)
        if rec is not None:
            self.counters.cache_hits += 1
            return key, rec
        n = bits.bit_count()
        pos = (bits & self.pos_bits).bit_count()
        leaf_units = self._leaf_units(bits, n, pos)
        true_floor, guess_floor = self._floors(bits)
        rec = _Rec(bits, depth, n, pos, leaf_units, true_floor, guess_floor)
        self.counters.created += 1
        if self.cfg.max_records is not None and self.counters.created > self.cfg.max_records:
            raise SolverMemoryError(self.counters)
        forced = (depth == 0) or (n == 1)
        if forced:
            rec.lower = rec.upper = leaf_units
            rec.solved = True
        elif rec.upper <= rec.lower:
            rec.solved = True
            if guess_floor is not None and rec.upper <= guess_floor and rec.upper > true_floor:
                rec.by_guess = True
                self.counters.closed_by_guess += 1
            rec.lower = rec.upper
        self.recs[key] = rec
        if not rec.solved:
            self.seq += 1
            heapq.heappush(self.heap, (rec.lower, self.seq, key))
        return key, rec

    # ---------------- expansion

    def _scan_chunk(self, bits, chunk):
        out = []
        for j in chunk:
            c = self.colbits[j]
            bl = bits & c
            out.append((j, bl))
        return out

    def _scan(self, bits):
        if self.cfg.workers > 1 and self._pool is not None and len(self.cols) > 1:
            w = min(self.cfg.workers, len(self.cols))
            size = (len(self.cols) + w - 1) // w
            chunks = [self.cols[i: i + size] for i in range(0, len(self.cols), size)]
            parts = self._pool.map(lambda ch: self._scan_chunk(bits, ch), chunks)
            out = []
            for p in parts:
                out.extend(p)
            return out
        return self._scan_chunk(bits, self.cols)

    def _expand(self, key, rec):
        rec.expanded = True
        self.counters.expanded += 1
        bits, n, pos = rec.bits, rec.n, rec.pos
        child_depth = rec.depth - 1 if self.bounded else None
        for j, bl in self._scan(bits):
            nl = bl.bit_count()
            if nl == 0 or nl == n:
                continue
            br = bits ^ bl
            nr = n - nl
            posl = (bl & self.pos_bits).bit_count()
            posr = pos - posl
            vl = self._leaf_units(bl, nl, posl)
            vr = self._leaf_units(br, nr, posr)
            forced_l = (child_depth == 0) or (nl == 1)
            forced_r = (child_depth == 0) or (nr == 1)
            # cheap child floors for the prune check; records add the
            # equivalence-points term when created
            low_l = vl if forced_l else self.pen
            low_r = vr if forced_r else self.pen
            if self.guessing:
                if not forced_l:
                    low_l = max(low_l, self.pen + self.q * (bl & self.inc_bits).bit_count())
                if not forced_r:
                    low_r = max(low_r, self.pen + self.q * (br & self.inc_bits).bit_count())
            if low_l + low_r >= rec.upper:
                continue
            kl = kr = None
            if not forced_l:
                kl, cl = self._create(bl, child_depth)
                cl.parents.setdefault(key)
            if not forced_r:
                kr, cr = self._create(br, child_depth)
                cr.parents.setdefault(key)
            rec.splits.append((j, kl, kr, vl, vr))
            # splitting j into two majority leaves is an incumbent
            if vl + vr < rec.upper:
                rec.upper = vl + vr
        if self._recompute(rec):
            self._propagate(key)

    # ---------------- bound maintenance

    def _action_bounds(self, s):
        j, kl, kr, vl, vr = s
        if kl is not None:
            c = self.recs[kl]
            ul, ll = c.upper, c.lower
        else:
            ul = ll = vl
        if kr is not None:
            c = self.recs[kr]
            ur, lr = c.upper, c.lower
        else:
            ur = lr = vr
        return ul + ur, ll + lr

    def _recompute(self, rec) -> bool:
        if rec.solved:
            return False
        best_u = rec.leaf_units
        best = _LEAF
        min_l = rec.leaf_units
        for s in rec.splits:
            u, l = self._action_bounds(s)
            if u < best_u:
                best_u = u
                best = s[0]
            if l < min_l:
                min_l = l
        changed = False
        if best_u < rec.upper:
            rec.upper = best_u
            changed = True
        rec.best = best
        if min_l > rec.lower:
            rec.lower = min_l
            changed = True
        if rec.upper <= rec.lower:
            rec.solved = True
            changed = True
            if (
                rec.guess_floor is not None
                and rec.upper <= rec.guess_floor
                and rec.upper > rec.true_floor
            ):
                rec.by_guess = True
                self.counters.closed_by_guess += 1
            if rec.lower > rec.upper:
                rec.lower = rec.upper
        return changed

    def _propagate(self, key):
        work = deque([key])
        while work:
            k = work.popleft()
            for pk in self.recs[k].parents:
                p = self.recs[pk]
                if p.solved or not p.expanded:
                    continue
                if self._recompute(p):
                    work.append(pk)

    # ---------------- main loop

    def run(self):
        self._pool = ThreadPoolExecutor(max_workers=self.cfg.workers) if self.cfg.workers > 1 else None
        try:
            t0 = time.monotonic()
            root_depth = self.cfg.depth_limit if self.bounded else None
            root_key, root = self._create(self.root_bits, root_depth)
            timed_out = False
            while not root.solved and self.heap:
                if self.cfg.time_limit_s is not None and time.monotonic() - t0 > self.cfg.time_limit_s:
                    timed_out = True
                    break
                _, _, key = heapq.heappop(self.heap)
                rec = self.recs[key]
                if rec.solved or rec.expanded:
                    continue
                self._expand(key, rec)
            return root_key, root, timed_out
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None

    # ---------------- extraction

    def _leaf_node(self, bits):
        n = bits.bit_count()
        pos = (bits & self.pos_bits).bit_count()
        units = self.q * min(pos, n - pos) + self.pen
        return Leaf(1 if pos > n - pos else 0), units, 1, 0, (_LEAF,)

    def extract(self, key, memo):
        """Best tree over the recorded action DAG: minimize (units, leaves,
        depth, structure) per subproblem.  Children of closed records may
        have kept improving, so this can land below the record's incumbent;
        never above it."""
        got = memo.get(key)
        if got is not None:
            return got
        rec = self.recs[key]
        best = self._leaf_node(rec.bits)
        for j, kl, kr, _vl, _vr in rec.splits:
            bl = rec.bits & self.colbits[j]
            cl = self.extract(kl, memo) if kl is not None else self._leaf_node(bl)
            cr = self.extract(kr, memo) if kr is not None else self._leaf_node(rec.bits ^ bl)
            f, t = self.bin.column_meta[j]
            cand = (
                Split(self.bin.feature_names[f], t, cl[0], cr[0]),
                cl[1] + cr[1],
                cl[2] + cr[2],
                1 + max(cl[3], cr[3]),
                (j, cl[4], cr[4]),
            )
            if cand[1:] < best[1:]:
                best = cand
        assert best[1] <= rec.upper, "extraction can only match or beat the incumbent"
        memo[key] = best
        return best


def optimize(bin_data: BinaryDataset, cfg: SolverConfig, root_support: Optional[SupportSet] = None) -> SolveResult:
    """Minimize loss/n + penalty*leaves over trees on the dataset's columns."""
    if bin_data.n_columns < 1:
        raise ValueError("dataset has no binary columns")
    if cfg.regularizer.n_samples != bin_data.n_samples:
        raise ValueError("regularizer sample count does not match dataset")
    if root_support is None:
        root_bits = bin_data.full_mask
    else:
        if root_support.size != bin_data.n_samples:
            raise ValueError("root support size does not match dataset")
        root_bits = root_support.bits
    if root_bits == 0:
        raise ValueError("empty root support")
    search = _Search(bin_data, cfg, root_bits)
    root_key, root, timed_out = search.run()
    tree, units, leaves, depth, _ = search.extract(root_key, {})
    reg = cfg.regularizer
    loss_units = units - reg.leaf_penalty_units * leaves
    assert loss_units % reg.denom == 0
    loss_count = loss_units // reg.denom
    if timed_out:
        status = "time-limit"
    elif search.guessing:
        status = "guess-certified"
    else:
        status = "optimal"
    return SolveResult(
        tree=tree,
        objective=reg.fraction(units),
        objective_units=units,
        loss_count=loss_count,
        leaf_count=leaves,
        depth=depth,
        status=status,
        counters=search.counters,
        regularizer=reg,
        depth_limit=cfg.depth_limit,
        lb_guess_active=search.guessing,
        refused_lb_guess=search.refused,
    )


def run_report(result: SolveResult) -> dict:
    """JSON-ready run summary; deterministic (no wall-clock fields)."""
    reg = result.regularizer
    return {
        "status": result.status,
        "objective": {
            "value": str(result.objective),
            "float": float(result.objective),
            "loss_count": result.loss_count,
            "leaves": result.leaf_count,
            "depth": result.depth,
        },
        "regularization": {
            "lambda": f"{reg.numer}/{reg.denom}",
            "n_samples": reg.n_samples,
        },
        "depth_limit": result.depth_limit,
        "lb_guess": {
            "active": result.lb_guess_active,
            "refused_single_class": result.refused_lb_guess,
        },
        "counters": result.counters.as_dict(),
    }
