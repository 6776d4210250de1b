"""Conditional flow-matching sampler and training loop.

Structures are generated by integrating a straight-line interpolant from a
physics-informed prior draw toward the model's denoised prediction.  Both
the sampler and the training step share three symmetry-removal ingredients:
a weighted rigid superposition (backbone-trace weights), an optimal graph
relabeling, and — at training time only — a prior entity permutation.  The
training loss combines a time-weighted pseudo-Huber term with smooth-LDDT
and frame-aligned point error, where the weight ``w(t) = 1 / (eps + (1 - t)
* sigma_data)`` emphasizes late (low-noise) times.

The denoiser always receives the shifted time ``t* = t ** 1.15`` while the
integrator itself runs on the raw uniform grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import InputError, NumericalError
from .geometry import (
    _lddt_pairs,
    LDDT_THRESHOLDS,
    default_alignment_weights,
    default_frame_atoms,
    kabsch_weighted,
)
from .prior import (
    NeighborOperators,
    PriorParams,
    build_neighbor_operators,
    permute_prior_entities,
    sample_prior,
)
from .symmetry import AtomPermutation, optimal_graph_permutation
from .topology import Conformation, MolecularSystem, as_coords, local_frame


@dataclass(frozen=True)
class FlowConfig:
    """Sampler and loss settings."""

    n_steps: int = 40
    shift_exponent: float = 1.15
    sigma_data: float = 16.0
    weight_eps: float = 0.01
    pseudo_huber_c: float = 1.0
    smooth_lddt_weight: float = 1.0
    fape_weight: float = 0.5
    smooth_lddt_steepness: float = 16.0
    fape_clamp: float = 10.0
    fape_d0: float = 1.0
    ligand_of_interest: Optional[str] = None


@dataclass(frozen=True)
class TrainConfig:
    """Overfitting recipe for :func:`train_toy`.

    The defaults encode a deliberately lopsided split: the attention trunk
    barely moves while the structured coordinate heads (interpolant skip and
    per-atom anchor) do almost all the learning.  On a handful of systems the
    heads alone can represent the answer; a fast trunk instead absorbs signal
    it can only approximate and then fights the heads for it.
    """

    lr: float = 1e-5
    #: cosine-decay floor for the learning rate; equal to ``lr`` disables
    #: the schedule.  Single-draw steps under the heavy-tailed loss weight
    #: w(t) keep kicking the weights around at a fixed step size, so the
    #: rate anneals toward the floor over ``n_steps``.
    lr_min: float = 1e-7
    #: extra learning-rate factor for the structured coordinate heads,
    #: applied throughout training (the heads see ``lr * head_lr_mult``).
    head_lr_mult: float = 200.0
    n_steps: int = 4000
    replicas: int = 2
    seed: int = 0
    #: clip total gradient norm; None disables.  The loss weight w(t) spans
    #: three orders of magnitude over t, so unclipped single-draw updates
    #: occasionally blow past any stable step size.
    grad_clip: Optional[float] = 1.0
    #: Polyak decay for averaged weights kept alongside the raw ones; 0
    #: disables (the default).  The loss is invariant to rigid motions of
    #: the prediction, so long runs drift through pose space and averaging
    #: weights across poses blurs the shape they encode; keeping the
    #: best-loss iterate (``retain_best``) avoids that failure mode.
    ema_decay: float = 0.0
    #: restore the weights whose trailing smoothed loss (window
    #: ``best_window``) was lowest, instead of the final iterate.
    retain_best: bool = True
    best_window: int = 100

    def lr_at(self, step: int) -> float:
        """Cosine-annealed learning rate for ``step`` in [0, n_steps)."""
        if self.n_steps <= 1 or self.lr_min >= self.lr:
            return self.lr
        phase = np.pi * step / (self.n_steps - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1 + np.cos(phase))


# --------------------------------------------------------------------------
# elementary steps


def shift_timestep(t: float, exponent: float = 1.15) -> float:
    """Polynomial time shift ``t ** exponent`` on [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise InputError(f"t must lie in [0, 1], got {t}")
    return float(t) ** exponent


def loss_weight(
    t: float, sigma_data: float = 16.0, weight_eps: float = 0.01
) -> float:
    """Time-dependent loss weight ``1 / (eps + (1 - t) * sigma_data)``."""
    return 1.0 / (weight_eps + (1.0 - t) * sigma_data)


def cfm_sample_step(x1, xt, t: float, t_next: float) -> np.ndarray:
    """One straight-line flow-matching update from time ``t`` to ``t_next``.

    Recovers the interpolant's implied ``x0 = (x_t - t x1) / (1 - t)`` and
    re-interpolates at ``t_next``:

        x_{t_next} = t_next * x1 + (1 - t_next) * (x_t - t * x1) / (1 - t)
    """
    if t >= 1.0:
        raise NumericalError("step past terminal: t must be < 1")
    if not 0.0 <= t < t_next <= 1.0:
        raise InputError(f"need 0 <= t < t_next <= 1, got t={t}, t_next={t_next}")
    x1 = as_coords(x1)
    xt = as_coords(xt)
    x0_implied = (xt - t * x1) / (1.0 - t)
    return t_next * x1 + (1.0 - t_next) * x0_implied


class OracleDenoiser:
    """Denoiser stub that always answers with a fixed reference structure.

    Used to validate the sampling loop in isolation: with this oracle the
    sampler must reproduce the reference exactly (up to the rigid alignment
    applied in-loop) for any step count.
    """

    def __init__(self, reference) -> None:
        self.reference = as_coords(reference).copy()
        self.calls = 0

    def encode(self, system: MolecularSystem):
        return None

    def denoise(self, x_t: np.ndarray, t_star: float, cond) -> np.ndarray:
        self.calls += 1
        return self.reference.copy()


def sample_structure(
    model,
    system: MolecularSystem,
    config: FlowConfig = FlowConfig(),
    seed: int = 0,
    prior_params: Optional[PriorParams] = None,
    operators: Optional[NeighborOperators] = None,
    return_trajectory: bool = False,
):
    """Generate one structure by integrating the flow from a prior draw.

    Each iteration denoises at the shifted time, rigidly aligns the
    prediction onto the previous one (weighted Kabsch over the backbone
    trace and ligand atoms), relabels symmetry-equivalent atoms toward the
    previous prediction, and advances the interpolant.  Returns the final
    denoised :class:`Conformation`, plus the full trajectory when requested.
    """
    if config.n_steps < 1:
        raise InputError("sampler needs at least one step")
    cond = model.encode(system)
    x0 = sample_prior(
        system, params=prior_params, seed=seed, operators=operators
    )
    weights = default_alignment_weights(system, config.ligand_of_interest)
    auto_cache: dict = {}
    x_t = x0.coords.copy()
    x1_last = x0.coords.copy()
    trajectory = [Conformation(x_t.copy(), provenance="prior")]
    n = config.n_steps
    x1 = x1_last
    for k in range(1, n + 1):
        t = (k - 1) / n
        t_next = k / n
        x1 = model.denoise(x_t, shift_timestep(t, config.shift_exponent), cond)
        transform = kabsch_weighted(x1, x1_last, weights)
        x1 = transform.apply(x1)
        perm = optimal_graph_permutation(
            x1, x1_last, system, automorphism_cache=auto_cache
        )
        x1 = perm.apply(x1)
        x1_last = x1
        x_t = cfm_sample_step(x1, x_t, t, t_next)
        if return_trajectory and k < n:
            trajectory.append(Conformation(x_t.copy(), provenance="intermediate"))
    result = Conformation(x1.copy(), provenance="denoised")
    if return_trajectory:
        trajectory.append(result)
        return result, trajectory
    return result


# --------------------------------------------------------------------------
# differentiable loss stack (torch)


def _pseudo_huber(pred: torch.Tensor, ref: torch.Tensor, c: float) -> torch.Tensor:
    sq = torch.sum((pred - ref) ** 2, dim=-1)
    return torch.mean(torch.sqrt(sq + c * c) - c)


def _smooth_lddt_torch(
    pred: torch.Tensor,
    ref: np.ndarray,
    system: MolecularSystem,
    steepness: float,
) -> torch.Tensor:
    ai, aj = _lddt_pairs(system, ref, False, None)
    d_ref = torch.from_numpy(
        np.linalg.norm(ref[ai] - ref[aj], axis=1)
    ).to(pred.dtype)
    d_pred = torch.linalg.norm(pred[ai] - pred[aj], dim=1)
    delta = torch.abs(d_pred - d_ref)
    taus = torch.tensor(LDDT_THRESHOLDS, dtype=pred.dtype)
    return torch.sigmoid(steepness * (taus[None, :] - delta[:, None])).mean()


class _FapeRefConstants:
    """Reference-side FAPE quantities, all invariant under rigid motion.

    Frame choice (two nearest bonded neighbors by the reference's own
    distances), local coordinates and normalizers depend on the reference
    only through internal distances, so they are computed once per
    (system, reference) pair and reused as the reference gets re-posed
    against each prediction.
    """

    def __init__(self, ref: np.ndarray, system: MolecularSystem, d0: float):
        adjacency = system.adjacency()
        n = system.n_atoms
        frame_ids = []
        nbr_lists = []
        locals_ref = []
        norms_ref = []
        for f in default_frame_atoms(system):
            f = int(f)
            nbrs = np.array(sorted(j for j, _ in adjacency[f]), dtype=np.int64)
            if nbrs.size < 2:
                continue
            fr = local_frame(f, ref, adjacency, allow_fallback=False)
            if fr is None:
                continue
            frame_ids.append(f)
            nbr_lists.append(nbrs)
            locals_ref.append((ref - ref[f]) @ fr.T)
            norms_ref.append(np.linalg.norm(ref - ref[f], axis=1) + d0)
        self.frame_ids = np.array(frame_ids, dtype=np.int64)
        self.nbr_lists = nbr_lists
        nf = len(frame_ids)
        self.local_ref = (
            np.stack(locals_ref) if nf else np.zeros((0, n, 3))
        )
        self.norm_ref = np.stack(norms_ref) if nf else np.zeros((0, n))
        self.mask = np.ones((nf, n), dtype=bool)
        for row, f in enumerate(frame_ids):
            self.mask[row, f] = False


def _fape_torch(
    pred: torch.Tensor,
    ref: np.ndarray,
    system: MolecularSystem,
    clamp: float,
    d0: float,
    ref_constants: Optional[_FapeRefConstants] = None,
) -> torch.Tensor:
    if ref_constants is None:
        ref_constants = _FapeRefConstants(ref, system, d0)
    rc = ref_constants
    nf = rc.frame_ids.size
    if nf == 0:
        raise NumericalError("fape: no valid frames")
    pred_np = pred.detach().numpy()
    # Two nearest bonded neighbors by the prediction's own geometry,
    # ties broken by atom index (the neighbor lists are pre-sorted).
    sel = np.empty((nf, 2), dtype=np.int64)
    for row, (f, nbrs) in enumerate(zip(rc.frame_ids, rc.nbr_lists)):
        d = np.linalg.norm(pred_np[nbrs] - pred_np[f], axis=1)
        order = np.argsort(d, kind="stable")[:2]
        sel[row] = nbrs[order]
    origin = pred[torch.from_numpy(rc.frame_ids)]  # (F, 3)
    p1 = pred[torch.from_numpy(sel[:, 0])]
    p2 = pred[torch.from_numpy(sel[:, 1])]
    eps = 1e-12
    u = p1 - origin
    n1 = torch.linalg.norm(u, dim=1)
    valid = n1.detach() > eps
    e1 = u / torch.where(valid, n1, torch.ones_like(n1))[:, None]
    v = p2 - origin
    w = v - torch.sum(v * e1, dim=1, keepdim=True) * e1
    n2 = torch.linalg.norm(w, dim=1)
    valid = valid & (n2.detach() > eps)
    e2 = w / torch.where(valid, n2, torch.ones_like(n2))[:, None]
    e3 = torch.cross(e1, e2, dim=1)
    frames = torch.stack([e1, e2, e3], dim=1)  # (F, 3, 3), rows are axes
    rel = pred[None, :, :] - origin[:, None, :]  # (F, N, 3)
    local_pred = torch.einsum("fnj,fij->fni", rel, frames)
    local_ref = torch.from_numpy(rc.local_ref).to(pred.dtype)
    err = torch.linalg.norm(local_pred - local_ref, dim=2)
    err = torch.clamp(err, max=clamp)
    contrib = err / torch.from_numpy(rc.norm_ref).to(pred.dtype)
    mask = torch.from_numpy(rc.mask) & valid[:, None]
    count = int(mask.sum())
    if count == 0:
        raise NumericalError("fape: no valid frames")
    zero = contrib.new_zeros(())
    return torch.where(mask, contrib, zero).sum() / count


def prepare_flow_targets(
    pred: np.ndarray,
    reference: np.ndarray,
    system: MolecularSystem,
    weights: Optional[np.ndarray] = None,
    automorphism_cache: Optional[dict] = None,
) -> tuple[np.ndarray, AtomPermutation]:
    """Align the reference onto the prediction and pick the atom relabeling.

    The returned reference is a stop-gradient target: the in-loop Kabsch
    absorbs any global rigid pose of the reference, and the permutation is
    chosen for the prediction against that aligned reference.  Alignment and
    relabeling interact (the first fit pairs atoms by index), so a
    non-identity relabeling triggers one refinement round: re-align against
    the relabeled prediction, re-select, and keep whichever pair leaves the
    smaller weighted deviation.
    """
    if weights is None:
        weights = default_alignment_weights(system)

    def fit(pred_labeled):
        transform = kabsch_weighted(reference, pred_labeled, weights)
        ref_aligned = transform.apply(reference)
        perm = optimal_graph_permutation(
            pred_labeled, ref_aligned, system,
            automorphism_cache=automorphism_cache,
        )
        return ref_aligned, perm

    ref_aligned, perm = fit(pred)
    if not perm.is_identity:
        refined_ref, second = fit(perm.apply(pred))
        combined = AtomPermutation(indices=perm.indices[second.indices])

        def cost(ref_a, p):
            return float(weights @ np.sum((pred[p.indices] - ref_a) ** 2, axis=1))

        if cost(refined_ref, combined) < cost(ref_aligned, perm):
            ref_aligned, perm = refined_ref, combined
    return ref_aligned, perm


def flow_matching_loss_terms(
    pred: torch.Tensor,
    ref_aligned: np.ndarray,
    perm: AtomPermutation,
    system: MolecularSystem,
    config: FlowConfig,
    t: float,
    fape_constants: Optional[_FapeRefConstants] = None,
) -> tuple[torch.Tensor, dict]:
    """Differentiable loss given prepared (aligned, stop-grad) targets.

    Total = ``w(t) * pseudo_huber + w2 * (1 - smooth_lddt) + w3 * fape``.
    The breakdown reports the smooth-LDDT *score* (maximal when the
    prediction matches the reference) alongside each term.
    """
    pred_p = pred[torch.from_numpy(perm.indices)]
    ref_t = torch.from_numpy(ref_aligned).to(pred.dtype)
    w = loss_weight(t, config.sigma_data, config.weight_eps)
    ph = _pseudo_huber(pred_p, ref_t, config.pseudo_huber_c)
    sl = _smooth_lddt_torch(
        pred_p, ref_aligned, system, config.smooth_lddt_steepness
    )
    fa = _fape_torch(
        pred_p, ref_aligned, system, config.fape_clamp, config.fape_d0,
        ref_constants=fape_constants,
    )
    total = w * ph + config.smooth_lddt_weight * (1.0 - sl) + config.fape_weight * fa
    breakdown = {
        "t": float(t),
        "weight": float(w),
        "pseudo_huber": float(ph.detach()),
        "smooth_lddt": float(sl.detach()),
        "fape": float(fa.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


def flow_matching_loss(
    pred,
    reference,
    system: MolecularSystem,
    config: FlowConfig = FlowConfig(),
    t: float = 1.0,
) -> tuple[float, dict]:
    """Numpy-facing loss evaluation (alignment + permutation + terms)."""
    p = as_coords(pred, system.n_atoms)
    r = as_coords(reference, system.n_atoms)
    ref_aligned, perm = prepare_flow_targets(p, r, system)
    with torch.no_grad():
        total, breakdown = flow_matching_loss_terms(
            torch.from_numpy(p), ref_aligned, perm, system, config, t
        )
    return float(total), breakdown


# --------------------------------------------------------------------------
# training


class _SystemCaches:
    """Per-system reusable state for hot training loops."""

    def __init__(self) -> None:
        self.operators: dict[int, NeighborOperators] = {}
        self.automorphisms: dict[int, dict] = {}
        self.weights: dict[int, np.ndarray] = {}
        self.fape: dict[int, _FapeRefConstants] = {}

    def for_system(self, system: MolecularSystem, config: FlowConfig):
        key = id(system)
        if key not in self.operators:
            self.operators[key] = build_neighbor_operators(system)
            self.automorphisms[key] = {}
            self.weights[key] = default_alignment_weights(
                system, config.ligand_of_interest
            )
        return self.operators[key], self.automorphisms[key], self.weights[key]

    def fape_constants(
        self, system: MolecularSystem, reference: np.ndarray, config: FlowConfig
    ) -> _FapeRefConstants:
        key = id(system)
        if key not in self.fape:
            self.fape[key] = _FapeRefConstants(reference, system, config.fape_d0)
        return self.fape[key]


def _replica_loss(
    model,
    cond,
    system: MolecularSystem,
    reference: np.ndarray,
    config: FlowConfig,
    rng: np.random.Generator,
    operators: NeighborOperators,
    auto_cache: dict,
    weights: np.ndarray,
    prior_params: Optional[PriorParams],
    fape_constants: Optional[_FapeRefConstants] = None,
) -> tuple[torch.Tensor, dict, dict]:
    x0 = sample_prior(
        system,
        params=prior_params,
        seed=int(rng.integers(2**63)),
        operators=operators,
    )
    x0 = permute_prior_entities(x0, reference, system)
    t = float(rng.uniform(0.0, 1.0))
    x_t = (1.0 - t) * x0.coords + t * reference
    pred = model(
        torch.from_numpy(x_t).float(),
        torch.tensor(shift_timestep(t, config.shift_exponent)),
        cond,
    )
    ref_aligned, perm = prepare_flow_targets(
        pred.detach().double().numpy(),
        reference,
        system,
        weights=weights,
        automorphism_cache=auto_cache,
    )
    total, breakdown = flow_matching_loss_terms(
        pred, ref_aligned, perm, system, config, t,
        fape_constants=fape_constants,
    )
    aux = {"pred": pred, "ref_aligned": ref_aligned, "perm": perm, "t": t}
    return total, breakdown, aux


def train_step(
    model,
    optimizer,
    system: MolecularSystem,
    reference,
    config: FlowConfig = FlowConfig(),
    rng: Optional[np.random.Generator] = None,
    n_replicas: int = 1,
    caches: Optional[_SystemCaches] = None,
    prior_params: Optional[PriorParams] = None,
    grad_clip: Optional[float] = None,
) -> dict:
    """One optimizer update on one system.

    Draws ``n_replicas`` independent (prior draw, time) pairs sharing a
    single conditioning pass, averages their losses, and backpropagates.
    Returns the averaged loss breakdown.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if caches is None:
        caches = _SystemCaches()
    reference = as_coords(reference, system.n_atoms)
    operators, auto_cache, weights = caches.for_system(system, config)
    fape_constants = caches.fape_constants(system, reference, config)
    cond = model.encode(system)
    totals = []
    reports = []
    for _ in range(max(1, n_replicas)):
        total, breakdown, _aux = _replica_loss(
            model, cond, system, reference, config, rng,
            operators, auto_cache, weights, prior_params,
            fape_constants=fape_constants,
        )
        totals.append(total)
        reports.append(breakdown)
    loss = torch.stack(totals).mean()
    optimizer.zero_grad()
    loss.backward()
    if grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    optimizer.step()
    merged = {
        key: float(np.mean([rep[key] for rep in reports]))
        for key in reports[0]
    }
    merged["loss"] = float(loss.detach())
    merged["n_replicas"] = len(reports)
    return merged


def train_toy(
    model,
    dataset: Sequence[tuple[MolecularSystem, np.ndarray]],
    config: FlowConfig = FlowConfig(),
    train_config: TrainConfig = TrainConfig(),
    prior_params: Optional[PriorParams] = None,
    callback=None,
) -> list[dict]:
    """Round-robin overfitting loop over a handful of small systems."""
    if not dataset:
        raise InputError("dataset must not be empty")
    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    head_params = [
        p
        for name in ("coord_skip", "coord_anchor")
        if hasattr(model, name)
        for p in getattr(model, name).parameters()
    ]
    head_ids = {id(p) for p in head_params}
    trunk_params = [p for p in model.parameters() if id(p) not in head_ids]
    groups = [{"params": trunk_params, "lr": train_config.lr, "boosted": False}]
    if head_params:
        groups.append(
            {
                "params": head_params,
                "lr": train_config.lr * train_config.head_lr_mult,
                "boosted": True,
            }
        )
    # beta2 shortened and eps raised so second moments recover quickly from
    # the rare huge-w(t) draws; otherwise stale tiny v makes the very next
    # steps explode even with gradient norm clipping.
    optimizer = torch.optim.Adam(groups, betas=(0.9, 0.99), eps=1e-6)
    caches = _SystemCaches()
    prepared = [
        (system, as_coords(ref, system.n_atoms)) for system, ref in dataset
    ]
    decay = train_config.ema_decay
    averaged = (
        {k: v.detach().clone() for k, v in model.state_dict().items()}
        if decay > 0
        else None
    )
    window = max(1, train_config.best_window)
    best_loss = np.inf
    best_state = None
    history = []
    for step in range(train_config.n_steps):
        lr_now = train_config.lr_at(step)
        for group in optimizer.param_groups:
            mult = train_config.head_lr_mult if group["boosted"] else 1.0
            group["lr"] = lr_now * mult
        system, reference = prepared[step % len(prepared)]
        report = train_step(
            model,
            optimizer,
            system,
            reference,
            config=config,
            rng=rng,
            n_replicas=train_config.replicas,
            caches=caches,
            prior_params=prior_params,
            grad_clip=train_config.grad_clip,
        )
        if averaged is not None:
            with torch.no_grad():
                for key, value in model.state_dict().items():
                    if value.dtype.is_floating_point:
                        averaged[key].mul_(decay).add_(value, alpha=1 - decay)
                    else:
                        averaged[key].copy_(value)
        report["step"] = step
        history.append(report)
        if train_config.retain_best and step >= window - 1:
            smoothed = float(
                np.mean([h["loss"] for h in history[-window:]])
            )
            if smoothed < best_loss:
                best_loss = smoothed
                best_state = {
                    k: v.detach().clone()
                    for k, v in model.state_dict().items()
                }
        if callback is not None:
            callback(report)
    if averaged is not None:
        model.load_state_dict(averaged)
    elif best_state is not None:
        model.load_state_dict(best_state)
    return history


# --------------------------------------------------------------------------
# sampling compute budget


@dataclass(frozen=True)
class BudgetReport:
    """Sampling compute budget under a per-replica price model.

    Two published readings of the budget formula disagree dimensionally, so
    both are reported: ``literal_product_form = (alpha * beta * replicas) *
    n_data`` follows the formula as printed, while ``additive_form = (alpha
    + beta * replicas) * n_data`` treats ``alpha`` as a fixed per-datum cost
    plus ``beta`` per replica, which is the reading consistent with the
    quoted frontier (price ratio 10 at 20 replicas).
    """

    alpha: float
    beta: float
    replicas: int
    n_data: float

    @property
    def price_ratio(self) -> float:
        return self.alpha / self.beta

    @property
    def literal_product_form(self) -> float:
        return (self.alpha * self.beta * self.replicas) * self.n_data

    @property
    def additive_form(self) -> float:
        return (self.alpha + self.beta * self.replicas) * self.n_data

    def to_dict(self) -> dict:
        return {
            **asdict(self),
            "price_ratio": self.price_ratio,
            "literal_product_form": self.literal_product_form,
            "additive_form": self.additive_form,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BudgetReport":
        return cls(
            alpha=data["alpha"],
            beta=data["beta"],
            replicas=data["replicas"],
            n_data=data["n_data"],
        )


def compute_budget(
    alpha: float, beta: float, replicas: int, n_data: float
) -> BudgetReport:
    """Budget report for drawing ``replicas`` samples over ``n_data`` items."""
    if replicas < 1 or n_data < 0:
        raise InputError("replicas must be >= 1 and n_data >= 0")
    return BudgetReport(alpha=alpha, beta=beta, replicas=replicas, n_data=n_data)
