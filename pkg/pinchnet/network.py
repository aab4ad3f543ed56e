"""
The three-stage pipeline.

1. ``chan_gnn``: heterogeneous attention over BS, UE and RIS nodes; BS embeddings
   become PA offsets and RIS embeddings become phase shifts.
2. ``beam_gnn``: two attention branches over the BS-UE link graph, fed with the
   effective channels, produce HZM mixing weights and raw powers.
3. ``assoc_gnn``: attention over the same graph, fed with beamforming gains,
   produces association logits.

``forward`` chains the stages with the readouts of ``mappings`` and scores the result.
"""
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import layers
from .exceptions import ConfigError, NumericError, ShapeError
from .mappings import (
    INFER,
    TRAIN,
    ReadoutFlags,
    assemble_beamformers,
    gumbel_assoc,
    phase_readout,
    power_readout,
    spacing_readout,
    zf_matrix,
)
from .metrics import DecisionSet, energy_efficiency, per_bs_power, per_user_rate, sum_rate


logger = logging.getLogger(__name__)

LAYER_COUNT_FIELDS = tuple(f"G{i}" for i in range(1, 10))


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture and ablation settings.

    ``G1`` counts heterogeneous attention layers; ``G2``/``G3`` the fully-connected
    layers of the offset and phase heads; ``G4``/``G6`` and ``G5``/``G7`` the
    attention and fully-connected layers of the two beamforming branches; ``G8``/``G9``
    those of the association stage. ``n_waveguides``, ``n_pas`` and ``n_elements``
    fix the readout widths and must match the scenario the model runs on.
    """

    G1: int = 2
    G2: int = 2
    G3: int = 2
    G4: int = 2
    G5: int = 2
    G6: int = 2
    G7: int = 2
    G8: int = 2
    G9: int = 2
    hidden_chan: int = 64
    hidden_beam: int = 64
    hidden_assoc: int = 64
    heads: int = 4
    tau: float = 1.0
    message_passing: bool = True
    residual: bool = True
    cfl_stage1: bool = True
    cfl_stage2: bool = True
    cfl_stage3: bool = True
    no_ris: bool = False
    fixed_pa: bool = False
    fixed_pa_spread: bool = False
    phase_convention: str = "literal"
    n_waveguides: int = 8
    n_pas: int = 6
    n_elements: int = 64

    def __post_init__(self):
        for name in LAYER_COUNT_FIELDS + ("hidden_chan", "hidden_beam", "hidden_assoc", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.hidden_chan % self.heads:
            raise ConfigError(f"heads={self.heads} must divide hidden_chan={self.hidden_chan}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not (self.message_passing or self.residual):
            raise ConfigError("message_passing and residual cannot both be disabled")
        if self.phase_convention not in ("literal", "cosine"):
            raise ConfigError(f"unknown phase convention {self.phase_convention!r}")

    @classmethod
    def for_scenario(cls, scenario_cfg, **overrides):
        values = dict(
            n_waveguides=scenario_cfg.N,
            n_pas=scenario_cfg.M,
            n_elements=scenario_cfg.L,
            phase_convention=scenario_cfg.steering,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def flags(self):
        return layers.LayerFlags(self.message_passing, self.residual)

    def variant(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


# ablation name -> ModelConfig changes
VARIANTS = {
    "full": {},
    "no-residual": {"residual": False},
    "no-message-passing": {"message_passing": False},
    "no-cfl1": {"cfl_stage1": False},
    "no-cfl2": {"cfl_stage2": False},
    "no-cfl3": {"cfl_stage3": False},
    "no-cfl": {"cfl_stage1": False, "cfl_stage2": False, "cfl_stage3": False},
    "no-ris": {"no_ris": True},
    "fixed-pa": {"fixed_pa": True},
}


def model_variant(model_cfg, name):
    """``model_cfg`` with the changes of ablation ``name`` applied."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}")
    return model_cfg.variant(**VARIANTS[name])


@dataclass
class ModelParams:
    """All learnable weights plus batch-norm running statistics."""

    config: ModelConfig
    chal: list
    spacing_head: list
    phase_head: list
    alpha_gal: list
    alpha_head: list
    power_gal: list
    power_head: list
    assoc_gal: list
    assoc_head: list

    _GROUPS = (
        "chal", "spacing_head", "phase_head", "alpha_gal", "alpha_head",
        "power_gal", "power_head", "assoc_gal", "assoc_head",
    )

    def named_parameters(self):
        named = []
        for group in self._GROUPS:
            named.extend(layers.named_parameters(getattr(self, group), group))
        return named

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self):
        return sum(p.size for p in self.parameters())

    def named_buffers(self):
        named = []
        for group in self._GROUPS:
            named.extend(layers.named_buffers(getattr(self, group), group))
        return named

    def state_dict(self):
        """Name -> array copy of every parameter and buffer (buffers prefixed ``buffer:``)."""
        state = {name: p.numpy() for name, p in self.named_parameters()}
        for name, owner, attr in self.named_buffers():
            state[f"buffer:{name}"] = np.array(getattr(owner, attr), dtype=np.complex128)
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = {f"buffer:{name}": (owner, attr) for name, owner, attr in self.named_buffers()}
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise ShapeError(f"state is missing {len(missing)} entries, e.g. {sorted(missing)[0]}")
        for name, value in state.items():
            if name in params:
                target = params[name]
                if target.shape != np.shape(value):
                    raise ShapeError(f"{name}: expected shape {target.shape}, got {np.shape(value)}")
                target.data[...] = value
            elif name in buffers:
                owner, attr = buffers[name]
                if np.iscomplexobj(getattr(owner, attr)):
                    setattr(owner, attr, np.array(value, dtype=np.complex128))
                else:
                    setattr(owner, attr, np.real(value).astype(float))
            else:
                raise ShapeError(f"unexpected state entry {name!r}")


def init_params(model_cfg, rng):
    """Freshly initialized weights for ``model_cfg``."""
    N, M, L = model_cfg.n_waveguides, model_cfg.n_pas, model_cfg.n_elements
    hc, hb, ha = model_cfg.hidden_chan, model_cfg.hidden_beam, model_cfg.hidden_assoc
    in_dims = {"bs": 3 * N, "ue": 3, "ris": 3}
    chal = []
    for _ in range(model_cfg.G1):
        chal.append(layers.init_chal(in_dims, hc, model_cfg.heads, rng))
        in_dims = {t: hc for t in layers.NODE_TYPES}

    def gal_stack(count, in_dim, hidden):
        stack, width = [], in_dim
        for _ in range(count):
            stack.append(layers.init_cgal(width, hidden, in_dim, rng))
            width = hidden
        return stack

    params = ModelParams(
        config=model_cfg,
        chal=chal,
        spacing_head=layers.init_cfl_stack(hc, hc, N * M, model_cfg.G2, rng, model_cfg.cfl_stage1),
        phase_head=layers.init_cfl_stack(hc, hc, L, model_cfg.G3, rng, model_cfg.cfl_stage1),
        alpha_gal=gal_stack(model_cfg.G4, N, hb),
        alpha_head=layers.init_cfl_stack(hb, hb, 1, model_cfg.G5, rng, model_cfg.cfl_stage2),
        power_gal=gal_stack(model_cfg.G6, N, hb),
        power_head=layers.init_cfl_stack(hb, hb, 1, model_cfg.G7, rng, model_cfg.cfl_stage2),
        assoc_gal=gal_stack(model_cfg.G8, 1, ha),
        assoc_head=layers.init_cfl_stack(ha, ha, 1, model_cfg.G9, rng, model_cfg.cfl_stage3),
    )
    logger.debug(f"Initialized model with {params.parameter_count()} complex parameters")
    return params


def _bn_mode(mode):
    return "train" if mode == TRAIN else "eval"


def check_compatible(model_cfg, scenario_cfg):
    expected = (model_cfg.n_waveguides, model_cfg.n_pas, model_cfg.n_elements)
    actual = (scenario_cfg.N, scenario_cfg.M, scenario_cfg.L)
    if expected != actual:
        raise ConfigError(f"model built for (N, M, L)={expected} cannot run on {actual}")
    if model_cfg.phase_convention != scenario_cfg.steering:
        raise ConfigError(
            f"model phase convention {model_cfg.phase_convention!r} differs from scenario "
            f"steering {scenario_cfg.steering!r}"
        )


def stage1_features(scenario, realization, include_ris=True):
    """Node features of the heterogeneous graph, coordinates scaled by max(D, S)."""
    cfg = scenario.config
    unit = max(cfg.D, cfg.S)
    T = realization.T
    feeds = scenario.bs_feed_points.reshape(scenario.bs_feed_points.shape[0], -1) / unit
    features = {
        "bs": ad.CTensor(np.broadcast_to(feeds, (T,) + feeds.shape)),
        "ue": ad.CTensor(realization.ue_positions / unit),
    }
    if include_ris and scenario.ris_positions.shape[0]:
        ris = scenario.ris_positions / unit
        features["ris"] = ad.CTensor(np.broadcast_to(ris, (T,) + ris.shape))
    return features


def chan_gnn(scenario, realization, params, mode=TRAIN, flags=None):
    """PA offsets (T, B, N, M) and RIS diagonals (T, R, L) from node coordinates."""
    mcfg, cfg = params.config, scenario.config
    flags = flags if flags is not None else ReadoutFlags()
    T, B, R = realization.T, realization.B, realization.R
    use_ris = not mcfg.no_ris and R > 0
    features = stage1_features(scenario, realization, include_ris=use_ris)
    for layer in params.chal:
        features = layers.chal_forward(features, layer, mcfg.flags)

    if mcfg.fixed_pa:
        from .baselines import fixed_pa_positions

        fixed = fixed_pa_positions(cfg, spread=mcfg.fixed_pa_spread)
        x_pa = ad.CTensor(np.broadcast_to(fixed, (T, B) + fixed.shape))
    else:
        raw = layers.cfl_stack_forward(features["bs"], params.spacing_head, _bn_mode(mode))
        raw = ad.reshape(ad.real(raw), (T, B, cfg.N, cfg.M))
        x_pa = spacing_readout(raw, cfg)

    if use_ris:
        v = layers.cfl_stack_forward(features["ris"], params.phase_head, _bn_mode(mode))
        phi = phase_readout(v, flags)
    else:
        phi = ad.CTensor(np.ones((T, R, cfg.L)))
    return x_pa, phi


@dataclass
class BeamOutput:
    alpha: ad.CTensor
    p_raw: ad.CTensor
    hhat: ad.CTensor
    Q: ad.CTensor
    W_unconstrained: ad.CTensor


def _gal_branch(x0, adjacency, gal_stack, head, flags, bn_mode):
    x = x0
    for layer in gal_stack:
        x = layers.cgal_forward(x, x0, adjacency, layer, flags)
    return layers.cfl_stack_forward(x, head, bn_mode)


def beam_gnn(realization, x_pa, phi, params, mode=TRAIN, flags=None):
    """
    HZM weights alpha and raw powers (both (T, B, K)), the effective channels
    (T, B, K, N) and the beams assembled before association.
    """
    mcfg, cfg = params.config, realization.config
    flags = flags if flags is not None else ReadoutFlags()
    hhat = realization.effective_channel(x_pa, phi, no_ris=mcfg.no_ris)
    T, B, K, N = hhat.shape
    rms = ad.sqrt(ad.mean(ad.abs2(hhat), axis=(1, 2, 3), keepdims=True))
    x0 = ad.reshape(ad.div(hhat, rms), (T, B * K, N))
    adjacency = layers.link_graph_adjacency(B, K)
    bn_mode = _bn_mode(mode)

    alpha_raw = _gal_branch(x0, adjacency, params.alpha_gal, params.alpha_head, mcfg.flags, bn_mode)
    power_raw = _gal_branch(x0, adjacency, params.power_gal, params.power_head, mcfg.flags, bn_mode)
    alpha = ad.sigmoid(ad.reshape(alpha_raw, (T, B, K)))
    p_raw = ad.reshape(ad.real(power_raw), (T, B, K))

    Q = zf_matrix(hhat, flags)
    p_tilde = ad.scale(ad.sigmoid(p_raw), cfg.P_max)
    W_unconstrained = assemble_beamformers(alpha, p_tilde, hhat, Q, flags)
    return BeamOutput(alpha, p_raw, hhat, Q, W_unconstrained)


def beam_gains(hhat, W):
    """|h_hat^H_{b,k} w_{b,k}|^2, shape (T, B, K)."""
    return ad.abs2(ad.einsum("tbkn,tbkn->tbk", hhat, W))


def assoc_gnn(hhat, W_unconstrained, params, mode=TRAIN):
    """Real association logits (T, B, K) from the beamforming gains."""
    gains = beam_gains(hhat, W_unconstrained)
    T, B, K = gains.shape
    level = ad.add(ad.mean(gains, axis=(1, 2), keepdims=True), 1e-30)
    x0 = ad.reshape(ad.div(gains, level), (T, B * K, 1))
    adjacency = layers.link_graph_adjacency(B, K)
    out = _gal_branch(x0, adjacency, params.assoc_gal, params.assoc_head, params.config.flags, _bn_mode(mode))
    return ad.reshape(ad.real(out), (T, B, K))


@dataclass
class ForwardResult:
    """Decisions and scores of one forward pass over a batch."""

    decisions: DecisionSet
    rates: ad.CTensor
    sr: ad.CTensor
    ee: ad.CTensor
    power: ad.CTensor
    hhat: ad.CTensor
    logits: ad.CTensor
    beams: BeamOutput
    flags: ReadoutFlags = field(default_factory=ReadoutFlags)


def forward(scenario, realization, params, mode=TRAIN, rng=None, gumbel_noise=None, assoc_override=None, tau=None):
    """
    Full solution and its sum rate and energy efficiency for every sample.

    Train mode uses batch-norm batch statistics and soft Gumbel-softmax association;
    infer mode uses running statistics and hard association. ``assoc_override`` (T, B, K)
    replaces the learned association, as the random-association baseline does.
    """
    if mode not in (TRAIN, INFER):
        raise ConfigError(f"unknown mode {mode!r}")
    check_compatible(params.config, scenario.config)
    if realization.K > scenario.config.N:
        raise ConfigError(f"K={realization.K} exceeds N={scenario.config.N}")
    flags = ReadoutFlags()
    x_pa, phi = chan_gnn(scenario, realization, params, mode, flags)
    beams = beam_gnn(realization, x_pa, phi, params, mode, flags)
    logits = assoc_gnn(beams.hhat, beams.W_unconstrained, params, mode)

    if assoc_override is not None:
        U = ad.as_tensor(assoc_override)
    elif mode == TRAIN and rng is None and gumbel_noise is None:
        raise ConfigError("train-mode association needs an rng or explicit Gumbel noise")
    else:
        U = gumbel_assoc(logits, params.config.tau if tau is None else tau, rng, mode, gumbel_noise)

    p = power_readout(beams.p_raw, U, scenario.config.P_max)
    W = assemble_beamformers(beams.alpha, p, beams.hhat, beams.Q)
    decisions = DecisionSet(x_pa, phi, W, U)
    rates = per_user_rate(realization, decisions, hhat=beams.hhat)
    sr = sum_rate(realization, decisions, rates=rates)
    ee = energy_efficiency(realization, decisions, sr=sr)
    power = per_bs_power(decisions)

    for name, value in (("sum rate", sr), ("energy efficiency", ee), ("logits", logits)):
        bad = ~np.isfinite(value.data)
        if bad.any():
            samples = np.unique(np.nonzero(bad)[0]).tolist()
            logger.error(f"Non-finite {name} in samples {samples}")
            raise NumericError(f"non-finite {name} in samples {samples}")
    flags.log(f"{mode} forward")
    return ForwardResult(decisions, rates, sr, ee, power, beams.hhat, logits, beams, flags)
