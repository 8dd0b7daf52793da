"""Three-phase adaptation loop (D step, G_T step, F steps) and source pretraining."""

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch

from ._validation import InvalidConfigError, TrainingAborted
from .config import TrainingConfig
from .data import select_k_shot
from .losses import (
    adversarial_d_loss,
    adversarial_g_loss,
    d_loss_from_logits,
    frozen,
    generator_recon_terms,
    make_backend,
    translator_recon_from_images,
)
from .models import (
    Discriminator,
    Generator,
    clone_source_to_target,
    freeze,
    load_checkpoint,
    namespace_state,
    save_checkpoint,
)
from .translator import Translator

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    cfg: TrainingConfig
    g_s: Generator
    g_t: Generator
    d: Discriminator
    f: Translator
    reals: torch.Tensor
    optimizers: dict
    rng: torch.Generator
    d_source: Discriminator = None
    iteration: int = 0
    opt_steps: dict = field(default_factory=lambda: {"d": 0, "g": 0, "f": 0})
    history: list = field(default_factory=list)
    backend: object = None
    last_z: torch.Tensor = None

    def modules(self):
        return {"g_s": self.g_s, "g_t": self.g_t, "d": self.d, "f": self.f, "d_source": self.d_source}


def _adam(params, lr, cfg):
    return torch.optim.Adam(params, lr=lr, betas=tuple(cfg.betas))


def _build_state(cfg, g_s, reals):
    g_s = freeze(copy.deepcopy(g_s))
    g_t = clone_source_to_target(g_s)
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        d = Discriminator(cfg.model)
        f = None if cfg.baseline_mode else Translator(cfg.model)
        d_source = None
        if not cfg.baseline_mode and cfg.loss.recon_metric == "adversarial":
            d_source = Discriminator(cfg.model)
    optimizers = {"d": _adam(d.parameters(), cfg.lr_d, cfg), "g": _adam(g_t.parameters(), cfg.lr_g, cfg)}
    if f is not None:
        optimizers["f"] = _adam(f.parameters(), cfg.lr_f, cfg)
    if d_source is not None:
        optimizers["d_source"] = _adam(d_source.parameters(), cfg.lr_d, cfg)
    rng = torch.Generator().manual_seed(cfg.seed + 1)
    return TrainState(cfg=cfg, g_s=g_s, g_t=g_t, d=d, f=f, reals=reals.clone(), optimizers=optimizers,
                      rng=rng, d_source=d_source, backend=make_backend(cfg.perceptual))


def init_training(g_s, dataset, cfg):
    """Clone G_S into G_T, create fresh D (and F unless baseline), iteration 0."""
    cfg.validate(len(dataset))
    if g_s.resolution != dataset.resolution or g_s.resolution != cfg.model.resolution:
        raise InvalidConfigError(
            f"resolution mismatch: generator {g_s.resolution}, dataset {dataset.resolution}, "
            f"config {cfg.model.resolution}"
        )
    if g_s.z_dim != cfg.model.z_dim:
        raise InvalidConfigError(f"z_dim mismatch: generator {g_s.z_dim}, config {cfg.model.z_dim}")
    if dataset.k_shot_indices is None or len(dataset.k_shot_indices) != cfg.k_shot:
        dataset = select_k_shot(dataset, cfg.k_shot, cfg.seed)
    return _build_state(cfg, g_s, dataset.k_shot_images)


def _randn(state, n):
    return torch.randn(n, state.cfg.model.z_dim, generator=state.rng)


def _check_finite(state, phase, **values):
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        snapshot = {"iteration": state.iteration, "phase": phase, **values,
                    "last_history": state.history[-5:]}
        raise TrainingAborted(f"non-finite loss in {phase} at iteration {state.iteration}: {bad}",
                              snapshot)


def _step(state, name, loss):
    opt = state.optimizers[name]
    opt.zero_grad(set_to_none=True)
    loss.backward()
    opt.step()
    state.opt_steps[name] = state.opt_steps.get(name, 0) + 1


def phase_discriminator(state):
    cfg = state.cfg
    b = cfg.batch_size
    idx = torch.randint(len(state.reals), (b,), generator=state.rng)
    z = _randn(state, b)
    with torch.no_grad():
        fake = state.g_t(z)
    loss_d = adversarial_d_loss(state.d, state.reals[idx], fake, cfg.loss.patch_weight)
    _check_finite(state, "discriminator", L_D=loss_d.item())
    _step(state, "d", loss_d)
    if state.d_source is not None:
        with torch.no_grad():
            src = state.g_s(z)
        loss_ds = d_loss_from_logits(state.d_source(src), state.d_source(fake), cfg.loss.patch_weight)
        _step(state, "d_source", loss_ds)
    return loss_d.item()


def phase_generator(state):
    """Adversarial + lambda1 * paired reconstruction update of G_T; F stays frozen."""
    cfg = state.cfg
    z = _randn(state, cfg.batch_size)
    state.last_z = z
    with frozen(state.d, state.f, state.d_source):
        fake = state.g_t(z)
        loss_adv = adversarial_g_loss(state.d, fake, cfg.loss.patch_weight)
        rec = torch.zeros(())
        if not cfg.baseline_mode:
            with torch.no_grad():
                x_s = state.g_s(z)
            source, target = generator_recon_terms(
                fake, x_s, state.f, cfg.loss, state.backend, state.d_source, state.d
            )
            rec = sum(t.mean() for t in (source, target) if t is not None)
        loss = loss_adv + cfg.loss.lambda1 * rec
        _check_finite(state, "generator", L_G=loss_adv.item(), L_rec=rec.item())
        _step(state, "g", loss)
    return loss_adv.item(), rec.item()


def phase_translator(state):
    """``f_steps_per_iter`` updates of F on the four-term loss; generators frozen."""
    cfg = state.cfg
    n, b = cfg.f_steps_per_iter, cfg.batch_size
    with torch.no_grad():
        if cfg.share_z:
            x_t, x_s = state.g_t(state.last_z).repeat(n, 1, 1, 1), state.g_s(state.last_z).repeat(n, 1, 1, 1)
        else:
            z = _randn(state, n * b)
            x_t, x_s = state.g_t(z), state.g_s(z)
    values = []
    for i in range(n):
        part = slice(i * b, (i + 1) * b)
        loss = translator_recon_from_images(x_t[part], x_s[part], state.f, state.backend)
        _check_finite(state, "translator", L_rec_f=loss.item())
        with frozen(state.g_t):
            _step(state, "f", cfg.loss.lambda2 * loss)
        values.append(loss.item())
    return sum(values) / len(values)


def train_iteration(state, log_file=None):
    """Run D, G_T and F phases in that order and advance the iteration counter."""
    loss_d = phase_discriminator(state)
    loss_g, loss_rec = phase_generator(state)
    loss_f = None
    if not state.cfg.baseline_mode:
        loss_f = phase_translator(state)
    state.iteration += 1
    baseline = state.cfg.baseline_mode
    record = {"iteration": state.iteration, "L_G": loss_g, "L_D": loss_d,
              "L_rec": None if baseline else loss_rec, "L_rec_f": None if baseline else loss_f}
    state.history.append(record)
    if log_file is not None:
        log_file.write(json.dumps(record) + "\n")
    return state


def save_state(state, path, metrics=None):
    extra = {
        "iteration": state.iteration,
        "optimizers": {k: opt.state_dict() for k, opt in state.optimizers.items()},
        "rng_state": state.rng.get_state(),
        "opt_steps": dict(state.opt_steps),
        "k_shot_images": state.reals,
    }
    if metrics is not None:
        extra["metrics"] = metrics.to_text()
    return save_checkpoint(path, state.modules(), state.cfg, extra)


def load_state(path):
    """Rebuild a TrainState from a checkpoint so training resumes bit-identically."""
    payload = load_checkpoint(path)
    cfg = payload["config"]
    tensors = payload["tensors"]
    g_s = Generator(cfg.model)
    g_s.load_state_dict(namespace_state(tensors, "g_s"))
    state = _build_state(cfg, g_s, payload["k_shot_images"])
    for name, module in state.modules().items():
        if module is not None and name != "g_s":
            module.load_state_dict(namespace_state(tensors, name))
    for name, opt in state.optimizers.items():
        opt.load_state_dict(payload["optimizers"][name])
    state.rng.set_state(payload["rng_state"])
    state.iteration = payload["iteration"]
    state.opt_steps = dict(payload["opt_steps"])
    return state


def train(cfg, dataset, g_s, out_dir=None, log_path=None, evaluator=None, state=None):
    """Run ``cfg.iterations`` iterations, checkpointing every ``checkpoint_interval``.

    ``evaluator(g_t)`` may return a MetricsReport stored in the final checkpoint.
    Returns ``(state, checkpoint_paths)``.
    """
    state = state or init_training(g_s, dataset, cfg)
    paths = []
    log_file = open(log_path, "a") if log_path else None
    try:
        while state.iteration < cfg.iterations:
            train_iteration(state, log_file)
            it = state.iteration
            last = it == cfg.iterations
            if it % max(1, cfg.iterations // 20) == 0:
                log.info("iter %d %s", it, state.history[-1])
            if out_dir is not None and (it % cfg.checkpoint_interval == 0 or last):
                metrics = evaluator(state.g_t) if (last and evaluator) else None
                paths.append(save_state(state, Path(out_dir) / f"ckpt_{it:06d}.pt", metrics))
    finally:
        if log_file:
            log_file.close()
    return state, paths


def pretrain_source(dataset, cfg=None, iterations=3000, batch_size=32, lr=2e-3, r1_gamma=1.0,
                    r1_interval=4, seed=0, callback=None):
    """Train a source generator on ``dataset`` from scratch (non-saturating GAN + lazy R1)."""
    cfg = cfg or TrainingConfig()
    if dataset.resolution != cfg.model.resolution:
        raise InvalidConfigError("dataset resolution does not match config")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        g = Generator(cfg.model)
        d = Discriminator(cfg.model)
    betas = tuple(cfg.betas)
    opt_g = torch.optim.Adam(g.parameters(), lr=lr, betas=betas)
    opt_d = torch.optim.Adam(d.parameters(), lr=lr, betas=betas)
    rng = torch.Generator().manual_seed(seed + 1)
    images = dataset.images
    pw = cfg.loss.patch_weight
    for it in range(1, iterations + 1):
        idx = torch.randint(len(images), (batch_size,), generator=rng)
        real = images[idx]
        z = torch.randn(batch_size, cfg.model.z_dim, generator=rng)
        with torch.no_grad():
            fake = g(z)
        loss_d = d_loss_from_logits(d(real), d(fake), pw)
        if r1_gamma > 0 and it % r1_interval == 0:
            real = real.detach().requires_grad_(True)
            logit, patch = d(real)
            (grad,) = torch.autograd.grad(logit.sum() + patch.sum(), real, create_graph=True)
            loss_d = loss_d + r1_gamma / 2 * r1_interval * grad.pow(2).flatten(1).sum(1).mean()
        opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        opt_d.step()

        z = torch.randn(batch_size, cfg.model.z_dim, generator=rng)
        with frozen(d):
            loss_g = adversarial_g_loss(d, g(z), pw)
            opt_g.zero_grad(set_to_none=True)
            loss_g.backward()
        opt_g.step()
        if not (math.isfinite(loss_d.item()) and math.isfinite(loss_g.item())):
            raise TrainingAborted(f"non-finite loss during pretraining at iteration {it}",
                                  {"iteration": it, "L_D": loss_d.item(), "L_G": loss_g.item()})
        if callback is not None:
            callback(it, loss_d.item(), loss_g.item(), g)
    return freeze(g)
