"""
Dataset generation, unsupervised losses and the Adam training loop with multi-step
learning-rate decay and early stopping, plus the evaluation helpers shared by the
management commands.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from . import autodiff as ad
from .baselines import fixed_pa_mode, no_ris_mode, oracle_association, random_assoc, rebalanced_beams
from .channel import ChannelRealization, complex_normal
from .exceptions import ConfigError, NumericError
from .mappings import INFER, TRAIN, ReadoutFlags
from .metrics import DecisionSet, check_feasibility, energy_efficiency, per_bs_power
from .network import forward, init_params
from .scenario import build_scenario, sample_ues


logger = logging.getLogger(__name__)

SR_FLOOR = 1e-9
OBJECTIVES = ("sr", "ee")
EVAL_MODES = ("proposed", "fixed-pa", "no-ris", "no-ris-fixed-pa", "random-assoc", "oracle-assoc")
HISTORY_COLUMNS = ["epoch", "train_loss", "val_SR", "val_EE", "lr"]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults follow the desk-scale recipe."""

    objective: str = "sr"
    epochs: int = 50
    batch_size: int = 128
    lr: float = 5e-5
    milestones: tuple = (20, 35)
    gamma: float = 0.5
    patience: int = 10
    min_delta: float = 0.0
    n_samples: int = 1000
    split: tuple = (8, 1, 1)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau_anneal: bool = False
    tau_final: float = 0.3

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.n_samples < 1:
            raise ConfigError("epochs, batch_size and n_samples must be at least 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if len(self.split) != 3 or min(self.split) < 0 or sum(self.split) <= 0:
            raise ConfigError(f"split must be three non-negative weights, got {self.split}")

    def as_dict(self):
        values = asdict(self)
        values["milestones"] = list(self.milestones)
        values["split"] = list(self.split)
        return values


@dataclass
class Sample:
    """The random part of one sample: UE drop plus frozen fading draws."""

    index: int
    ue_positions: np.ndarray
    nlos_pa_ris: np.ndarray
    nlos_ris_ue: np.ndarray


def draw_sample(scenario, seed, index, K=None):
    """Sample ``index`` of the stream seeded by ``seed``; reproducible on its own."""
    cfg = scenario.config
    K = cfg.K if K is None else K
    rng = np.random.default_rng([seed, index])
    B, R = scenario.bs_feed_points.shape[0], scenario.ris_positions.shape[0]
    return Sample(
        index=index,
        ue_positions=sample_ues(cfg, rng, K),
        nlos_pa_ris=complex_normal(rng, (B, R, cfg.L)),
        nlos_ris_ue=complex_normal(rng, (R, K, cfg.L)),
    )


@dataclass
class Dataset:
    """
    Samples of one deployment with a train/validation/test split.

    Attributes:
        scenario: Deployment shared by every sample.
        ue_positions: (n, K, 3) UE drops.
        nlos_pa_ris: (n, B, R, L) PA-RIS fading draws.
        nlos_ris_ue: (n, R, K, L) RIS-UE fading draws.
        splits: "train" / "val" / "test" -> sample indices.
        seed: Seed of the sample stream.
    """

    scenario: object
    ue_positions: np.ndarray
    nlos_pa_ris: np.ndarray
    nlos_ris_ue: np.ndarray
    splits: dict = field(default_factory=dict)
    seed: int = 0

    def __len__(self):
        return self.ue_positions.shape[0]

    @property
    def K(self):
        return self.ue_positions.shape[1]

    def sample(self, index):
        return Sample(index, self.ue_positions[index], self.nlos_pa_ris[index], self.nlos_ris_ue[index])

    def realization(self, indices=None):
        if indices is None:
            indices = np.arange(len(self))
        indices = np.asarray(indices)
        return ChannelRealization(
            self.scenario,
            self.ue_positions[indices],
            self.nlos_pa_ris[indices],
            self.nlos_ris_ue[indices],
        )

    def split_realization(self, name):
        return self.realization(self.splits[name])


def split_indices(n, ratio, seed):
    """Disjoint train/val/test index sets in the proportions of ``ratio``."""
    weights = np.asarray(ratio, dtype=float)
    order = np.random.default_rng([seed, n]).permutation(n)
    n_train = int(n * weights[0] // weights.sum())
    n_val = int(n * weights[1] // weights.sum())
    return {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train : n_train + n_val]),
        "test": np.sort(order[n_train + n_val :]),
    }


def generate_dataset(cfg, scenario=None, n_samples=1000, seed=None, split=(8, 1, 1), K=None):
    """
    ``n_samples`` i.i.d. samples over a fixed deployment.

    Sample i depends only on (seed, i); BS and RIS positions are shared by every sample.
    """
    scenario = build_scenario(cfg) if scenario is None else scenario
    seed = cfg.seed if seed is None else seed
    if n_samples < 1:
        raise ConfigError("a dataset needs at least one sample")
    samples = [draw_sample(scenario, seed, i, K) for i in range(n_samples)]
    dataset = Dataset(
        scenario=scenario,
        ue_positions=np.stack([s.ue_positions for s in samples]),
        nlos_pa_ris=np.stack([s.nlos_pa_ris for s in samples]),
        nlos_ris_ue=np.stack([s.nlos_ris_ue for s in samples]),
        splits=split_indices(n_samples, split, seed),
        seed=seed,
    )
    sizes = {name: len(idx) for name, idx in dataset.splits.items()}
    logger.info(f"Generated {n_samples} samples (seed={seed}, K={dataset.K}); split {sizes}")
    return dataset


def _floored(sr, floor, flags):
    sr = ad.real(ad.as_tensor(sr))
    low = sr.data.real < floor
    if low.any():
        if flags is not None:
            flags.sr_floor += int(low.sum())
        logger.warning(f"Sum rate below {floor} in {int(low.sum())} samples; floored")
        sr = ad.where(low, np.full(sr.shape, floor), sr)
    return sr


def loss_sr(sr, floor=SR_FLOOR, flags=None):
    """Mean of 1 / SR over the batch."""
    return ad.mean(ad.reciprocal(_floored(sr, floor, flags)))


def loss_ee(sr, power, P_C, floor=SR_FLOOR, flags=None):
    """Mean of (transmit power + P_C) / SR over the batch."""
    consumed = ad.add(ad.real(ad.as_tensor(power)), P_C)
    return ad.mean(ad.div(consumed, _floored(sr, floor, flags)))


def objective_loss(result, train_cfg, P_C, flags=None):
    if train_cfg.objective == "sr":
        return loss_sr(result.sr, flags=flags)
    return loss_ee(result.sr, ad.tsum(result.power, axis=1), P_C, flags=flags)


@dataclass
class AdamState:
    """First moments (complex) and second moments of the real and imaginary parts."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v_re: dict = field(default_factory=dict)
    v_im: dict = field(default_factory=dict)


def adam_step(named_params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    One Adam update treating real and imaginary parts as independent coordinates.

    Gradients are read from ``.grad``; parameters without one are left unchanged.
    """
    state.step += 1
    t = state.step
    for name, p in named_params:
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name, np.zeros_like(p.data))
        v_re = state.v_re.get(name, np.zeros(p.shape))
        v_im = state.v_im.get(name, np.zeros(p.shape))
        m = beta1 * m + (1 - beta1) * g
        v_re = beta2 * v_re + (1 - beta2) * g.real**2
        v_im = beta2 * v_im + (1 - beta2) * g.imag**2
        state.m[name], state.v_re[name], state.v_im[name] = m, v_re, v_im
        m_hat = m / (1 - beta1**t)
        step_re = m_hat.real / (np.sqrt(v_re / (1 - beta2**t)) + eps)
        step_im = m_hat.imag / (np.sqrt(v_im / (1 - beta2**t)) + eps)
        if p.real:
            step_im = 0.0
        p.data -= lr * (step_re + 1j * step_im)
    return state


class MultiStepLR:
    """Learning rate multiplied by ``gamma`` at every milestone epoch."""

    def __init__(self, base_lr, milestones=(20, 35), gamma=0.5):
        self.base_lr = base_lr
        self.milestones = sorted(milestones)
        self.gamma = gamma

    def lr_at(self, epoch):
        """Rate for 1-based ``epoch``; decays take effect after a milestone epoch completes."""
        passed = sum(1 for m in self.milestones if epoch > m)
        return self.base_lr * self.gamma**passed


class EarlyStopping:
    """
    Stop training when the validation objective has not improved for ``patience`` epochs.

    The objective is maximized. ``improved`` tells the caller to snapshot the parameters.
    """

    def __init__(self, patience=10, min_delta=0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.counter = 0
        self.best = None
        self.early_stop = False

    def __call__(self, value):
        if self.best is None or value - self.best > self.min_delta:
            self.best = value
            self.counter = 0
            return True
        self.counter += 1
        logger.info(f"Early stopping counter {self.counter} of {self.patience}")
        if self.counter >= self.patience:
            logger.info("Early stopping")
            self.early_stop = True
        return False


def tau_schedule(model_cfg, train_cfg, epoch):
    """Gumbel-softmax temperature for 1-based ``epoch``; linear anneal when enabled."""
    if not train_cfg.tau_anneal or train_cfg.epochs == 1:
        return model_cfg.tau
    fraction = (epoch - 1) / (train_cfg.epochs - 1)
    return model_cfg.tau + fraction * (train_cfg.tau_final - model_cfg.tau)


def _batches(indices, batch_size):
    for start in range(0, len(indices), batch_size):
        yield indices[start : start + batch_size]


@dataclass
class TrainResult:
    params: object
    history: pd.DataFrame
    best_val: float
    epochs_run: int
    stopped_early: bool


def validate(scenario, dataset, params, batch_size=128, split="val"):
    """Mean SR and EE over a split in inference mode."""
    indices = dataset.splits[split]
    if len(indices) == 0:
        return float("nan"), float("nan")
    srs, ees = [], []
    with ad.no_grad():
        for batch in _batches(indices, batch_size):
            result = forward(scenario, dataset.realization(batch), params, INFER)
            srs.append(result.sr.numpy().real)
            ees.append(result.ee.numpy().real)
    return float(np.mean(np.concatenate(srs))), float(np.mean(np.concatenate(ees)))


def train(scenario, dataset, params, train_cfg, on_epoch=None):
    """
    Minimize the objective's loss over the training split.

    The parameter set with the best validation objective is restored before returning.
    ``on_epoch`` is called with every history row.
    """
    rng = np.random.default_rng([train_cfg.seed, 1])
    schedule = MultiStepLR(train_cfg.lr, train_cfg.milestones, train_cfg.gamma)
    stopper = EarlyStopping(train_cfg.patience, train_cfg.min_delta)
    state = AdamState()
    named = params.named_parameters()
    best_state = params.state_dict()
    rows = []
    train_idx = dataset.splits["train"]
    if len(train_idx) == 0:
        raise ConfigError("the training split is empty")
    P_C = scenario.config.P_C

    for epoch in range(1, train_cfg.epochs + 1):
        lr = schedule.lr_at(epoch)
        tau = tau_schedule(params.config, train_cfg, epoch)
        order = rng.permutation(train_idx)
        losses, weights = [], []
        flags = ReadoutFlags()
        for batch in _batches(order, train_cfg.batch_size):
            result = forward(scenario, dataset.realization(batch), params, TRAIN, rng=rng, tau=tau)
            loss = objective_loss(result, train_cfg, P_C, flags)
            value = loss.item().real
            if not np.isfinite(value):
                logger.error(f"Non-finite loss at epoch {epoch}")
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            for _, p in named:
                p.grad = None
            ad.backward(loss)
            adam_step(named, state, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps)
            losses.append(value)
            weights.append(len(batch))
            logger.debug(f"Epoch {epoch} batch of {len(batch)}: loss={value:.6g}")
        flags.log(f"epoch {epoch}")

        val_sr, val_ee = validate(scenario, dataset, params, train_cfg.batch_size)
        row = {
            "epoch": epoch,
            "train_loss": float(np.average(losses, weights=weights)),
            "val_SR": val_sr,
            "val_EE": val_ee,
            "lr": lr,
        }
        rows.append(row)
        logger.info(
            f"Epoch {epoch}/{train_cfg.epochs}: loss={row['train_loss']:.6g} "
            f"val_SR={val_sr:.4f} val_EE={val_ee:.4f} lr={lr:.3g}"
        )
        if on_epoch is not None:
            on_epoch(row)
        objective = val_sr if train_cfg.objective == "sr" else val_ee
        if np.isnan(objective):
            objective = -row["train_loss"]
        if stopper(objective):
            best_state = params.state_dict()
        if stopper.early_stop:
            break

    params.load_state_dict(best_state)
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    logger.info(f"Training finished after {len(rows)} epochs; best validation objective {stopper.best:.6g}")
    return TrainResult(params, history, stopper.best, len(rows), stopper.early_stop)


def write_history_csv(history, path):
    history.to_csv(path, index=False, columns=HISTORY_COLUMNS)


def mode_params(params, mode):
    """Weights configured for an evaluation mode."""
    if mode in ("fixed-pa", "no-ris-fixed-pa") and not params.config.fixed_pa:
        params = fixed_pa_mode(params)
    if mode in ("no-ris", "no-ris-fixed-pa") and not params.config.no_ris:
        params = no_ris_mode(params)
    return params


def evaluate_mode(scenario, realization, params, mode="proposed", rng=None):
    """
    Decisions, SR and EE of every sample under an evaluation mode, in inference mode.

    Returns (DecisionSet, SR, EE) with numpy values.
    """
    if mode not in EVAL_MODES:
        raise ConfigError(f"unknown evaluation mode {mode!r}; expected one of {EVAL_MODES}")
    cfg = scenario.config
    active = mode_params(params, mode)
    override = None
    if mode == "random-assoc":
        if rng is None:
            raise ConfigError("random association needs an rng")
        override = random_assoc(realization.K, realization.B, rng, realization.T)
    with ad.no_grad():
        result = forward(scenario, realization, active, INFER, assoc_override=override)
        decisions = result.decisions.detach()
        sr, ee = result.sr.numpy().real, result.ee.numpy().real
        if mode == "oracle-assoc":
            W_free = result.beams.W_unconstrained.numpy()
            U, sr = oracle_association(realization, decisions.x_pa, decisions.phi, W_free, active.config.no_ris)
            decisions = DecisionSet(decisions.x_pa, decisions.phi, rebalanced_beams(W_free, U, cfg.P_max), U)
            ee = energy_efficiency(realization, decisions, sr=sr).numpy().real
    return decisions, sr, ee


def evaluate_realization(scenario, realization, params, mode="proposed", rng=None, sample_ids=None):
    """Per-sample evaluation rows (one per sample) as a DataFrame, with timing."""
    start = time.perf_counter()
    decisions, sr, ee = evaluate_mode(scenario, realization, params, mode, rng)
    elapsed_ms = (time.perf_counter() - start) * 1e3 / realization.T
    report = check_feasibility(decisions, scenario.config, hard=True)
    with ad.no_grad():
        power = per_bs_power(decisions).numpy().real
    ids = np.arange(realization.T) if sample_ids is None else np.asarray(sample_ids)
    return pd.DataFrame(
        {
            "sample_id": ids,
            "K": realization.K,
            "B": realization.B,
            "R": realization.R,
            "SR_bit_s_Hz": sr,
            "EE_bit_J_Hz": ee,
            "power_W_per_bs": [";".join(f"{v:.6g}" for v in row) for row in power],
            "feasible": report.per_sample.astype(int),
            "infer_ms": elapsed_ms,
        }
    )


def evaluate_split(scenario, dataset, params, split="test", mode="proposed", batch_size=128, seed=0, workers=1):
    """
    Evaluation rows for every sample of a split.

    Batches run on a thread pool of ``workers`` threads; each batch draws its random
    associations from its own stream, so rows do not depend on scheduling.
    """
    indices = dataset.splits[split] if split else np.arange(len(dataset))
    batches = list(_batches(indices, batch_size))

    def run(position):
        batch = batches[position]
        rng = np.random.default_rng([seed, 2, position])
        return evaluate_realization(scenario, dataset.realization(batch), params, mode, rng, batch)

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(run, range(len(batches))))
    else:
        frames = [run(position) for position in range(len(batches))]
    logger.debug(f"Evaluated {len(indices)} samples in {len(batches)} batches on {workers} workers")
    return pd.concat(frames, ignore_index=True)


def summarize(frame):
    """Aggregate evaluation rows: mean SR, EE and inference time plus feasibility pass rate."""
    return {
        "n_samples": int(len(frame)),
        "mean_SR": float(frame["SR_bit_s_Hz"].mean()),
        "mean_EE": float(frame["EE_bit_J_Hz"].mean()),
        "mean_infer_ms": float(frame["infer_ms"].mean()),
        "feasible_rate": float(frame["feasible"].mean()),
    }


def sweep_pa_count(scenario_cfg, model_cfg, train_cfg, M_values, n_samples=None):
    """
    Train and test one model per PA count; returns a DataFrame with columns
    M, mean_SR, mean_EE.
    """
    rows = []
    for M in M_values:
        cfg = scenario_cfg.replace(M=M)
        scenario = build_scenario(cfg)
        dataset = generate_dataset(cfg, scenario, n_samples or train_cfg.n_samples, train_cfg.seed, train_cfg.split)
        mcfg = model_cfg.variant(n_pas=M)
        params = init_params(mcfg, np.random.default_rng(train_cfg.seed))
        result = train(scenario, dataset, params, train_cfg)
        summary = summarize(evaluate_split(scenario, dataset, result.params, "test", "proposed", train_cfg.batch_size))
        rows.append({"M": M, "mean_SR": summary["mean_SR"], "mean_EE": summary["mean_EE"]})
        logger.info(f"PA-count sweep M={M}: mean SR {summary['mean_SR']:.4f}")
    return pd.DataFrame(rows, columns=["M", "mean_SR", "mean_EE"])
