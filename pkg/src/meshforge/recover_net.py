"""Recurrent mesh recovery at toy scale with hand-written backpropagation.

Per clip: a patch-convolution encoder turns each silhouette into a feature
vector and a grid of annotation vectors; soft attention conditioned on the
previous hidden state summarizes the grid; an LSTM consumes
``[feature, context, phi_prev]``; an iterative-error-feedback regressor
refines ``phi`` from ``phi_prev`` using the new hidden state.

Everything is float64 numpy. ``clip_backward`` is the reverse pass of
``clip_forward`` and :func:`grad_check` compares it to central differences.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .body_model import NUM_BETAS, BodyTemplate
from .errors import DimensionError, TrainingError, ValidationError

log = logging.getLogger(__name__)

PHI_DIM = 88
THETA = slice(0, 72)
BETA = slice(72, 82)
ROT = slice(82, 85)
TRANS = slice(85, 87)
SCALE = 87
PHI_BLOCKS = (("theta", THETA), ("beta", BETA), ("global_rotation", ROT), ("translation", TRANS),
              ("scale", slice(SCALE, SCALE + 1)))


# --------------------------------------------------------------------------
# recovery vector


@dataclass(frozen=True, eq=False)
class RecoveryVector:
    """``[theta, beta, global_rotation, translation, scale]``; 88 values flattened.

    The flat layout stores ``log(scale)`` in the last slot, which keeps any
    regressed value mapped to a positive scale.
    """

    theta: np.ndarray
    beta: np.ndarray
    global_rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def __post_init__(self):
        for name, n in (("theta", 72), ("beta", NUM_BETAS), ("global_rotation", 3), ("translation", 2)):
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if a.shape != (n,):
                raise DimensionError(f"{name} must have {n} values, got {a.size}")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, a)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be finite and > 0, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.theta, self.beta, self.global_rotation, self.translation,
                               [np.log(self.scale)]])

    @classmethod
    def from_array(cls, phi) -> "RecoveryVector":
        phi = np.asarray(phi, dtype=np.float64).reshape(-1)
        if phi.shape != (PHI_DIM,):
            raise DimensionError(f"recovery vector must have {PHI_DIM} values, got {phi.size}")
        return cls(phi[THETA], phi[BETA], phi[ROT], phi[TRANS], float(np.exp(phi[SCALE])))

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "beta": self.beta.tolist(),
                "global_rotation": self.global_rotation.tolist(),
                "translation": self.translation.tolist(), "scale": self.scale}

    def __eq__(self, other):
        if not isinstance(other, RecoveryVector):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())

    __hash__ = None


# --------------------------------------------------------------------------
# batched rotations


def _skew_batch(r):
    K = np.zeros(r.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -r[..., 2], r[..., 1]
    K[..., 1, 0], K[..., 1, 2] = r[..., 2], -r[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -r[..., 1], r[..., 0]
    return K


_GEN = _skew_batch(np.eye(3))  # _GEN[c] = skew(e_c)


def rodrigues_batch(r, jacobian: bool = False):
    """Rotation matrices for ``(..., 3)`` axis-angle vectors, optionally with dR/dr.

    ``R = I + a K + b K^2`` with ``K = skew(r)``; ``a = sin t / t`` and
    ``b = (1 - cos t) / t^2`` switch to series below ``t = 1e-2``.
    """
    r = np.asarray(r, dtype=np.float64)
    t2 = (r * r).sum(axis=-1)
    t = np.sqrt(t2)
    small = t < 1e-2
    ts = np.where(small, 1.0, t)
    s, c = np.sin(ts), np.cos(ts)
    a = np.where(small, 1 - t2 / 6 + t2 * t2 / 120 - t2 ** 3 / 5040, s / ts)
    b = np.where(small, 0.5 - t2 / 24 + t2 * t2 / 720 - t2 ** 3 / 40320, (1 - c) / ts ** 2)
    K = _skew_batch(r)
    K2 = K @ K
    R = np.eye(3) + a[..., None, None] * K + b[..., None, None] * K2
    if not jacobian:
        return R
    # (da/dt) / t and (db/dt) / t
    da = np.where(small, -1 / 3 + t2 / 30 - t2 * t2 / 840, (ts * c - s) / ts ** 3)
    db = np.where(small, -1 / 12 + t2 / 180 - t2 * t2 / 6720, (ts * s - 2 * (1 - c)) / ts ** 4)
    EK = np.einsum("cij,...jk->...cik", _GEN, K)
    KE = np.einsum("...ij,cjk->...cik", K, _GEN)
    dR = (a[..., None, None, None] * _GEN
          + b[..., None, None, None] * (EK + KE)
          + (da[..., None] * r)[..., :, None, None] * K[..., None, :, :]
          + (db[..., None] * r)[..., :, None, None] * K2[..., None, :, :])
    # dR[..., c, i, j] = dR_ij / dr_c; return with the derivative index last
    return R, np.moveaxis(dR, -3, -1)


# --------------------------------------------------------------------------
# differentiable skeleton


class JointModel:
    """Regressed joints of the skinned template as a function of ``(theta, beta)``.

    With blend weights ``w`` and regressor ``Reg``, the posed joints are
    ``J_j = sum_k Rg_k P_jk(beta) + C_jk tg_k`` where ``C = Reg w`` and
    ``P_jk = sum_i Reg_ji w_ik v_i(beta)``; ``(Rg, tg)`` are the rest-factored
    global transforms from forward kinematics.
    """

    def __init__(self, template: BodyTemplate):
        reg, W = template.joint_regressor, template.skinning_weights
        self.parents = tuple(template.parents)
        self.K = template.joint_count
        self.J0 = reg @ template.rest_vertices
        self.JB = np.einsum("jn,naz->jaz", reg, template.shape_basis)
        self.C = reg @ W
        self.P0 = np.einsum("ji,ik,ia->jka", reg, W, template.rest_vertices)
        self.PB = np.einsum("ji,ik,iaz->jkaz", reg, W, template.shape_basis)

    def forward(self, theta, beta):
        """``theta (B, 3K)``, ``beta (B, 10)`` -> joints ``(B, K, 3)`` and a cache."""
        B = len(theta)
        Rl, dRl = rodrigues_batch(theta.reshape(B, self.K, 3), jacobian=True)
        J = self.J0 + np.einsum("kaz,bz->bka", self.JB, beta)
        P = self.P0 + np.einsum("jkaz,bz->bjka", self.PB, beta)
        Rg = np.empty((B, self.K, 3, 3))
        tg = np.zeros((B, self.K, 3))
        u = np.zeros((B, self.K, 3))
        Rg[:, 0] = Rl[:, 0]
        for k in range(1, self.K):
            p = self.parents[k]
            u[:, k] = J[:, k] - np.einsum("bij,bj->bi", Rl[:, k], J[:, k])
            Rg[:, k] = Rg[:, p] @ Rl[:, k]
            tg[:, k] = np.einsum("bij,bj->bi", Rg[:, p], u[:, k]) + tg[:, p]
        joints = np.einsum("bkac,bjkc->bja", Rg, P) + np.einsum("jk,bka->bja", self.C, tg)
        return joints, (Rl, dRl, J, P, Rg, u)

    def backward(self, g_joints, cache):
        Rl, dRl, J, P, Rg, u = cache
        gRg = np.einsum("bja,bjkc->bkac", g_joints, P)
        gP = np.einsum("bkac,bja->bjkc", Rg, g_joints)
        gbeta = np.einsum("bjka,jkaz->bz", gP, self.PB)
        gtg = np.einsum("jk,bja->bka", self.C, g_joints)
        gRl = np.zeros_like(Rl)
        gJ = np.zeros_like(J)
        for k in range(self.K - 1, 0, -1):
            p = self.parents[k]
            Rp = Rg[:, p]
            gRg[:, p] += gRg[:, k] @ np.swapaxes(Rl[:, k], 1, 2) + gtg[:, k, :, None] * u[:, k, None, :]
            gRl[:, k] = np.swapaxes(Rp, 1, 2) @ gRg[:, k]
            gu = np.einsum("bji,bj->bi", Rp, gtg[:, k])
            gRl[:, k] -= gu[:, :, None] * J[:, k, None, :]
            gJ[:, k] += gu - np.einsum("bji,bj->bi", Rl[:, k], gu)
            gtg[:, p] += gtg[:, k]
        gRl[:, 0] = gRg[:, 0]
        gtheta = np.einsum("bkij,bkijc->bkc", gRl, dRl).reshape(len(g_joints), -1)
        gbeta += np.einsum("bka,kaz->bz", gJ, self.JB)
        return gtheta, gbeta


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    patch: int = 8
    channels: int = 8
    feature_dim: int = 64
    attention_dim: int = 64
    hidden: int = 128
    init_hidden: tuple = (128, 128)
    regressor_hidden: tuple = (256, 256)

    def __post_init__(self):
        object.__setattr__(self, "init_hidden", tuple(int(x) for x in self.init_hidden))
        object.__setattr__(self, "regressor_hidden", tuple(int(x) for x in self.regressor_hidden))
        if self.image_size % (2 * self.patch):
            raise ValidationError("image_size must be a multiple of 2 * patch")
        if min(self.patch, self.channels, self.feature_dim, self.attention_dim, self.hidden) < 1:
            raise ValidationError("model sizes must be positive")
        if len(self.init_hidden) != 2 or len(self.regressor_hidden) != 2 or \
                min(self.init_hidden + self.regressor_hidden) < 1:
            raise ValidationError("init and regressor MLPs have exactly two positive hidden widths")

    @property
    def grid(self) -> int:
        return self.image_size // (2 * self.patch)

    @property
    def annotations(self) -> int:
        return self.grid * self.grid

    def shapes(self) -> dict:
        p, C, D, A, H = self.patch, self.channels, self.feature_dim, self.attention_dim, self.hidden
        L = self.annotations
        X = 2 * D + PHI_DIM
        i1, i2 = self.init_hidden
        r1, r2 = self.regressor_hidden
        return {
            "enc_w1": (p * p, C), "enc_b1": (C,), "enc_w2": (4 * C, D), "enc_b2": (D,),
            "enc_wf": (L * D, D), "enc_bf": (D,),
            "att_wa": (D, A), "att_wh": (H, A), "att_b": (A,), "att_v": (A,),
            "lstm_w": (X, 4 * H), "lstm_u": (H, 4 * H), "lstm_b": (4 * H,),
            "init_w1": (D, i1), "init_b1": (i1,), "init_w2": (i1, i2), "init_b2": (i2,),
            "init_w3": (i2, 2 * H), "init_b3": (2 * H,),
            "reg_w1": (H + PHI_DIM, r1), "reg_b1": (r1,), "reg_w2": (r1, r2), "reg_b2": (r2,),
            "reg_w3": (r2, PHI_DIM), "reg_b3": (PHI_DIM,),
        }


def default_phi_scale() -> np.ndarray:
    """Fixed per-coordinate units for feeding and emitting ``phi`` (translation in pixels)."""
    s = np.ones(PHI_DIM)
    s[TRANS] = 100.0
    return s


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict
    mean_phi: np.ndarray
    phi_scale: np.ndarray = field(default_factory=default_phi_scale)

    def __post_init__(self):
        shapes = self.config.shapes()
        missing = set(shapes) - set(self.tensors)
        extra = set(self.tensors) - set(shapes)
        if missing or extra:
            raise ValidationError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        ordered = {}
        for name, shape in shapes.items():
            a = np.array(self.tensors[name], dtype=np.float64)
            if a.shape != shape:
                raise DimensionError(f"parameter {name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"parameter {name} is not finite")
            ordered[name] = a
        self.tensors = ordered
        self.mean_phi = np.array(self.mean_phi, dtype=np.float64).reshape(PHI_DIM)
        self.phi_scale = np.array(self.phi_scale, dtype=np.float64).reshape(PHI_DIM)
        if not np.all(self.phi_scale > 0):
            raise ValidationError("phi_scale must be positive")

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.tensors.values()))

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()},
                           self.mean_phi.copy(), self.phi_scale.copy())

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def init_params(config: ModelConfig = ModelConfig(), mean_phi=None, seed: int = 0,
                regressor_gain: float = 0.01) -> ModelParams:
    """Scaled-normal initialization; the regressor's output layer starts small."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    tensors["reg_w3"] *= regressor_gain
    tensors["att_v"] = rng.normal(0.0, 1.0 / np.sqrt(config.attention_dim), size=config.attention_dim)
    # bias the forget gate open
    H = config.hidden
    tensors["lstm_b"][H:2 * H] = 1.0
    if mean_phi is None:
        mean_phi = np.zeros(PHI_DIM)
    return ModelParams(config, tensors, mean_phi)


# --------------------------------------------------------------------------
# building blocks (batched over the leading axis)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _encode(params: ModelParams, images):
    cfg = params.config
    N, S = images.shape[0], cfg.image_size
    p, g1 = cfg.patch, S // cfg.patch
    x1 = images.reshape(N, g1, p, g1, p).transpose(0, 1, 3, 2, 4).reshape(N, g1, g1, p * p)
    h1 = np.tanh(x1 @ params["enc_w1"] + params["enc_b1"])
    g2, C = cfg.grid, cfg.channels
    x2 = h1.reshape(N, g2, 2, g2, 2, C).transpose(0, 1, 3, 2, 4, 5).reshape(N, g2 * g2, 4 * C)
    a = np.tanh(x2 @ params["enc_w2"] + params["enc_b2"])
    flat = a.reshape(N, -1)
    feat = np.tanh(flat @ params["enc_wf"] + params["enc_bf"])
    return feat, a, (x1, h1, x2, a, flat, feat)


def _encode_backward(params: ModelParams, gfeat, ga, cache, grads):
    cfg = params.config
    x1, h1, x2, a, flat, feat = cache
    N = len(feat)
    gpre = gfeat * (1 - feat ** 2)
    grads["enc_wf"] += flat.T @ gpre
    grads["enc_bf"] += gpre.sum(axis=0)
    ga = ga + (gpre @ params["enc_wf"].T).reshape(a.shape)
    gpre2 = ga * (1 - a ** 2)
    grads["enc_w2"] += np.einsum("nlc,nld->cd", x2, gpre2)
    grads["enc_b2"] += gpre2.sum(axis=(0, 1))
    gx2 = gpre2 @ params["enc_w2"].T
    g2, C = cfg.grid, cfg.channels
    gh1 = gx2.reshape(N, g2, g2, 2, 2, C).transpose(0, 1, 3, 2, 4, 5).reshape(h1.shape)
    gpre1 = gh1 * (1 - h1 ** 2)
    grads["enc_w1"] += np.einsum("nijp,nijc->pc", x1, gpre1)
    grads["enc_b1"] += gpre1.sum(axis=(0, 1, 2))


def _attention(params: ModelParams, a, h_prev):
    pre = np.tanh(a @ params["att_wa"] + (h_prev @ params["att_wh"])[:, None, :] + params["att_b"])
    e = pre @ params["att_v"]
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    z = np.einsum("bl,bld->bd", alpha, a)
    return alpha, z, (a, h_prev, pre, alpha)


def _attention_backward(params: ModelParams, gz, cache, grads):
    a, h_prev, pre, alpha = cache
    galpha = np.einsum("bd,bld->bl", gz, a)
    ga = alpha[:, :, None] * gz[:, None, :]
    ge = alpha * (galpha - (alpha * galpha).sum(axis=1, keepdims=True))
    grads["att_v"] += np.einsum("bla,bl->a", pre, ge)
    graw = ge[:, :, None] * params["att_v"] * (1 - pre ** 2)
    grads["att_wa"] += np.einsum("bld,bla->da", a, graw)
    ga += graw @ params["att_wa"].T
    gsum = graw.sum(axis=1)
    grads["att_wh"] += h_prev.T @ gsum
    grads["att_b"] += gsum.sum(axis=0)
    return ga, gsum @ params["att_wh"].T


def _lstm(params: ModelParams, x, h, c):
    H = params.config.hidden
    gates = x @ params["lstm_w"] + h @ params["lstm_u"] + params["lstm_b"]
    i = _sigmoid(gates[:, :H])
    f = _sigmoid(gates[:, H:2 * H])
    o = _sigmoid(gates[:, 2 * H:3 * H])
    g = np.tanh(gates[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, o, g, tc)


def _lstm_backward(params: ModelParams, gh, gc, cache, grads):
    x, h, c, i, f, o, g, tc = cache
    go = gh * tc
    gc = gc + gh * o * (1 - tc ** 2)
    dgates = np.concatenate([gc * g * i * (1 - i), gc * c * f * (1 - f), go * o * (1 - o),
                             gc * i * (1 - g ** 2)], axis=1)
    grads["lstm_w"] += x.T @ dgates
    grads["lstm_u"] += h.T @ dgates
    grads["lstm_b"] += dgates.sum(axis=0)
    return dgates @ params["lstm_w"].T, dgates @ params["lstm_u"].T, gc * f


def _mlp2(params, prefix, x):
    q1 = np.tanh(x @ params[prefix + "w1"] + params[prefix + "b1"])
    q2 = np.tanh(q1 @ params[prefix + "w2"] + params[prefix + "b2"])
    return q2 @ params[prefix + "w3"] + params[prefix + "b3"], (x, q1, q2)


def _mlp2_backward(params, prefix, gout, cache, grads):
    x, q1, q2 = cache
    grads[prefix + "w3"] += q2.T @ gout
    grads[prefix + "b3"] += gout.sum(axis=0)
    g2 = (gout @ params[prefix + "w3"].T) * (1 - q2 ** 2)
    grads[prefix + "w2"] += q1.T @ g2
    grads[prefix + "b2"] += g2.sum(axis=0)
    g1 = (g2 @ params[prefix + "w2"].T) * (1 - q1 ** 2)
    grads[prefix + "w1"] += x.T @ g1
    grads[prefix + "b1"] += g1.sum(axis=0)
    return g1 @ params[prefix + "w1"].T


def _init_states(params: ModelParams, feat):
    H = params.config.hidden
    out, cache = _mlp2(params, "init_", feat)
    return np.tanh(out[:, H:]), out[:, :H], (cache, out)


def _init_backward(params: ModelParams, gh0, gc0, cache, grads):
    H = params.config.hidden
    mcache, out = cache
    h0 = np.tanh(out[:, H:])
    gout = np.concatenate([gc0, gh0 * (1 - h0 ** 2)], axis=1)
    return _mlp2_backward(params, "init_", gout, mcache, grads)


def _ief(params: ModelParams, h, phi, n_iter):
    caches = []
    for _ in range(n_iter):
        inp = np.concatenate([h, (phi - params.mean_phi) / params.phi_scale], axis=1)
        out, cache = _mlp2(params, "reg_", inp)
        phi = phi + out * params.phi_scale
        caches.append(cache)
    return phi, caches


def _ief_backward(params: ModelParams, gphi, caches, grads):
    H = params.config.hidden
    gh = 0.0
    for cache in reversed(caches):
        ginp = _mlp2_backward(params, "reg_", gphi * params.phi_scale, cache, grads)
        gh = gh + ginp[:, :H]
        gphi = gphi + ginp[:, H:] / params.phi_scale
    return gh, gphi


# --------------------------------------------------------------------------
# public single-step operations


@dataclass(frozen=True, eq=False)
class EncodedFrame:
    feature: np.ndarray
    low_level_map: np.ndarray


@dataclass(frozen=True, eq=False)
class RecurrentState:
    c: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if np.shape(self.c) != np.shape(self.h):
            raise DimensionError("cell and hidden states must have equal dimensions")


def _check_image(params, image):
    S = params.config.image_size
    img = np.asarray(image, dtype=np.float64)
    if img.shape[-2:] != (S, S):
        raise DimensionError(f"image must be {S}x{S}, got {img.shape[-2:]}")
    return img


def encode(image, params: ModelParams) -> EncodedFrame:
    img = _check_image(params, image)
    feat, a, _ = _encode(params, img.reshape(1, *img.shape[-2:]))
    return EncodedFrame(feat[0], a[0])


def attention(annotation_map, h_prev, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(annotation_map, dtype=np.float64)
    if a.shape != (params.config.annotations, params.config.feature_dim):
        raise DimensionError(f"annotation map must be {params.config.annotations}x{params.config.feature_dim}")
    alpha, z, _ = _attention(params, a[None], np.asarray(h_prev, dtype=np.float64)[None])
    return alpha[0], z[0]


def lstm_step(x, state: RecurrentState, params: ModelParams) -> RecurrentState:
    h, c, _ = _lstm(params, np.asarray(x, dtype=np.float64)[None], state.h[None], state.c[None])
    return RecurrentState(c[0], h[0])


def init_states(feature, params: ModelParams) -> RecurrentState:
    h0, c0, _ = _init_states(params, np.asarray(feature, dtype=np.float64)[None])
    return RecurrentState(c0[0], h0[0])


def regress_ief(h, phi_init, params: ModelParams, n_iter: int = 3) -> np.ndarray:
    """Flat ``phi`` after ``n_iter`` additive refinements of ``phi_init``."""
    if n_iter < 1:
        raise ValidationError(f"n_iter must be >= 1, got {n_iter}")
    phi0 = phi_init.to_array() if isinstance(phi_init, RecoveryVector) else np.asarray(phi_init, dtype=np.float64)
    phi, _ = _ief(params, np.asarray(h, dtype=np.float64)[None], phi0[None], n_iter)
    return phi[0]


# --------------------------------------------------------------------------
# clip forward / backward


def clip_forward(params: ModelParams, images, n_iter: int = 3):
    """``images (B, T, S, S)`` -> ``phis (B, T, 88)`` and the tape for backward."""
    imgs = _check_image(params, images)
    if imgs.ndim != 4 or imgs.shape[1] < 1:
        raise DimensionError("images must be (B, T, S, S) with T >= 1")
    B, T = imgs.shape[:2]
    feat, amap, enc_cache = _encode(params, imgs.reshape(B * T, *imgs.shape[2:]))
    feat = feat.reshape(B, T, -1)
    amap = amap.reshape(B, T, *amap.shape[1:])
    h, c, init_cache = _init_states(params, feat[:, 0])
    phi = np.broadcast_to(params.mean_phi, (B, PHI_DIM)).copy()
    phis, steps = [], []
    for t in range(T):
        alpha, z, att_cache = _attention(params, amap[:, t], h)
        x = np.concatenate([feat[:, t], z, (phi - params.mean_phi) / params.phi_scale], axis=1)
        h, c, lstm_cache = _lstm(params, x, h, c)
        phi, ief_cache = _ief(params, h, phi, n_iter)
        phis.append(phi)
        steps.append((att_cache, lstm_cache, ief_cache, alpha))
    tape = {"B": B, "T": T, "enc": enc_cache, "init": init_cache, "steps": steps}
    return np.stack(phis, axis=1), tape


def clip_backward(params: ModelParams, gphis, tape) -> dict:
    """Parameter gradients given ``dLoss/dphis (B, T, 88)``."""
    B, T = tape["B"], tape["T"]
    cfg = params.config
    D = cfg.feature_dim
    grads = params.zeros_like()
    gfeat = np.zeros((B, T, D))
    gamap = np.zeros((B, T, cfg.annotations, D))
    gh = np.zeros((B, cfg.hidden))
    gc = np.zeros((B, cfg.hidden))
    gphi_next = np.zeros((B, PHI_DIM))
    for t in range(T - 1, -1, -1):
        att_cache, lstm_cache, ief_cache, _ = tape["steps"][t]
        gh_ief, gphi_prev = _ief_backward(params, gphis[:, t] + gphi_next, ief_cache, grads)
        gx, gh, gc = _lstm_backward(params, gh + gh_ief, gc, lstm_cache, grads)
        gfeat[:, t] += gx[:, :D]
        gphi_prev = gphi_prev + gx[:, 2 * D:] / params.phi_scale
        ga, gh_att = _attention_backward(params, gx[:, D:2 * D], att_cache, grads)
        gamap[:, t] += ga
        gh = gh + gh_att
        gphi_next = gphi_prev
    gfeat[:, 0] += _init_backward(params, gh, gc, tape["init"], grads)
    _encode_backward(params, gfeat.reshape(B * T, D), gamap.reshape(B * T, cfg.annotations, D),
                     tape["enc"], grads)
    return grads


def recover_clip(frames, params: ModelParams, n_iter: int = 3) -> list:
    """Recovery vectors for a clip of ``T`` preview images."""
    imgs = _check_image(params, frames)
    if imgs.ndim == 2:
        imgs = imgs[None]
    if imgs.ndim != 3 or len(imgs) < 1:
        raise DimensionError("a clip is a (T, S, S) stack with T >= 1")
    phis, _ = clip_forward(params, imgs[None], n_iter)
    return [RecoveryVector.from_array(p) for p in phis[0]]


# --------------------------------------------------------------------------
# losses


@dataclass(frozen=True, eq=False)
class ClipTargets:
    """Ground truth for ``B`` clips of ``T`` frames.

    ``joints3d`` is camera-frame and pelvis-centered; ``delta`` gates the 3D
    terms per clip.
    """

    keypoints2d: np.ndarray  # (B, T, Q, 2)
    visibility: np.ndarray  # (B, T, Q)
    joints3d: np.ndarray  # (B, T, Q, 3)
    theta: np.ndarray  # (B, T, 72)
    beta: np.ndarray  # (B, T, 10)
    delta: np.ndarray  # (B,)

    def __post_init__(self):
        B, T = np.shape(self.theta)[:2]
        Q = np.shape(self.keypoints2d)[2]
        expect = {"keypoints2d": (B, T, Q, 2), "visibility": (B, T, Q), "joints3d": (B, T, Q, 3),
                  "theta": (B, T, 72), "beta": (B, T, NUM_BETAS), "delta": (B,)}
        for name, shape in expect.items():
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != shape:
                raise DimensionError(f"target {name} has shape {a.shape}, expected {shape}")
            object.__setattr__(self, name, a)

    def select(self, idx) -> "ClipTargets":
        return ClipTargets(*(getattr(self, n)[idx] for n in
                             ("keypoints2d", "visibility", "joints3d", "theta", "beta", "delta")))


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0


def phi_joints(jm: JointModel, phis):
    """Camera-oriented joints ``R J(theta, beta)`` for ``phis (..., 88)``."""
    flat = phis.reshape(-1, PHI_DIM)
    J, _ = jm.forward(flat[:, THETA], flat[:, BETA])
    R = rodrigues_batch(flat[:, ROT])
    return np.einsum("nab,njb->nja", R, J).reshape(phis.shape[:-1] + (jm.K, 3))


def clip_loss_and_grad(phis, targets: ClipTargets, jm: JointModel, lam: float = 1.0,
                       need_grad: bool = True, l1_signs=None):
    """Mean over clips of ``sum_t lam (L_proj + delta L_3D)_t + L_shape``.

    Returns ``(loss, terms, dLoss/dphis)``; ``terms`` holds batch means of
    each component (unweighted by ``lam``). ``l1_signs`` replaces ``|r|`` in
    the reprojection term by ``l1_signs * r``, which is the same smooth piece
    wherever the signs match those of the residuals.
    """
    B, T = phis.shape[:2]
    n = B * T
    flat = phis.reshape(n, PHI_DIM)
    theta, beta = flat[:, THETA], flat[:, BETA]
    J, jcache = jm.forward(theta, beta)
    R, dR = rodrigues_batch(flat[:, ROT], jacobian=True)
    s = np.exp(flat[:, SCALE])
    X = np.einsum("nab,njb->nja", R, J)
    x2 = s[:, None, None] * X[..., :2] + flat[:, None, TRANS]

    kp = targets.keypoints2d.reshape(n, -1, 2)
    vis = targets.visibility.reshape(n, -1)
    gt3 = targets.joints3d.reshape(n, -1, 3)
    delta = np.repeat(targets.delta, T)
    diff2 = kp - x2
    sg = np.sign(diff2) if l1_signs is None else np.asarray(l1_signs, dtype=np.float64).reshape(diff2.shape)
    l_proj = (vis[:, :, None] * sg * diff2).sum(axis=(1, 2))
    Xc = X - X[:, :1]
    d3 = gt3 - Xc
    l_joint = (d3 ** 2).sum(axis=(1, 2))
    dth = theta - targets.theta.reshape(n, 72)
    dbe = beta - targets.beta.reshape(n, NUM_BETAS)
    l_smpl = (dth ** 2).sum(axis=1) + (dbe ** 2).sum(axis=1)
    betas = beta.reshape(B, T, NUM_BETAS)
    dshape = betas[:, 1:] - betas[:, :-1]
    l_shape = (dshape ** 2).sum(axis=(1, 2))

    per_clip = (lam * (l_proj + delta * (l_joint + l_smpl))).reshape(B, T).sum(axis=1) + l_shape
    loss = float(per_clip.mean())
    terms = {"proj": float(l_proj.sum() / B), "joint3d": float(l_joint.sum() / B),
             "smpl": float(l_smpl.sum() / B), "shape": float(l_shape.sum() / B)}
    if not need_grad:
        return loss, terms, None

    w = lam / B
    g = np.zeros((n, PHI_DIM))
    gx2 = -w * vis[:, :, None] * sg
    g[:, TRANS] = gx2.sum(axis=1)
    g[:, SCALE] = (gx2 * X[..., :2]).sum(axis=(1, 2)) * s
    gX = np.zeros_like(X)
    gX[..., :2] = s[:, None, None] * gx2
    gXc = -2.0 * (w * delta)[:, None, None] * d3
    gX += gXc
    gX[:, 0] -= gXc.sum(axis=1)
    gJ = np.einsum("nja,nab->njb", gX, R)
    gR = np.einsum("nja,njb->nab", gX, J)
    g[:, ROT] = np.einsum("nab,nabc->nc", gR, dR)
    g[:, THETA] = 2.0 * (w * delta)[:, None] * dth
    g[:, BETA] = 2.0 * (w * delta)[:, None] * dbe
    gth, gbe = jm.backward(gJ, jcache)
    g[:, THETA] += gth
    g[:, BETA] += gbe
    gb = g[:, BETA].reshape(B, T, NUM_BETAS)
    gb[:, 1:] += 2.0 * dshape / B
    gb[:, :-1] -= 2.0 * dshape / B
    g[:, BETA] = gb.reshape(n, NUM_BETAS)
    return loss, terms, g.reshape(B, T, PHI_DIM)


def frame_loss(phi, gt, template_or_model, delta: bool = True) -> tuple[float, dict]:
    """Single-frame ``L_proj + delta (L_3Djoint + L_smpl)`` and its terms.

    ``gt`` needs ``keypoints2d``, ``visibility``, ``joints3d`` (camera frame),
    ``theta`` and ``beta`` attributes.
    """
    jm = template_or_model if isinstance(template_or_model, JointModel) else JointModel(template_or_model)
    p = phi.to_array() if isinstance(phi, RecoveryVector) else np.asarray(phi, dtype=np.float64)
    targets = targets_from_frames([[gt]], [delta])
    _, terms, _ = clip_loss_and_grad(p.reshape(1, 1, PHI_DIM), targets, jm, 1.0, need_grad=False)
    terms = {k: terms[k] for k in ("proj", "joint3d", "smpl")}
    total = terms["proj"] + (terms["joint3d"] + terms["smpl"] if delta else 0.0)
    return total, terms


def clip_loss(phis, gt_clip, template_or_model, lam: float = 1.0, delta: bool = True) -> float:
    jm = template_or_model if isinstance(template_or_model, JointModel) else JointModel(template_or_model)
    arr = np.stack([p.to_array() if isinstance(p, RecoveryVector) else np.asarray(p, dtype=np.float64)
                    for p in phis])
    targets = targets_from_frames([list(gt_clip)], [delta])
    return clip_loss_and_grad(arr[None], targets, jm, lam, need_grad=False)[0]


def targets_from_frames(clips, deltas=None) -> ClipTargets:
    """Targets from nested lists of annotated frames (``clips[b][t]``)."""
    B, T = len(clips), len(clips[0])
    if any(len(c) != T for c in clips):
        raise DimensionError("all clips in a batch must have the same length")
    deltas = np.ones(B) if deltas is None else np.asarray(deltas, dtype=np.float64)

    def stack(fn):
        return np.array([[fn(f) for f in clip] for clip in clips], dtype=np.float64)

    j3 = stack(lambda f: np.asarray(f.joints3d) - np.asarray(f.joints3d)[0])
    return ClipTargets(stack(lambda f: f.keypoints2d), stack(lambda f: f.visibility), j3,
                       stack(lambda f: f.theta), stack(lambda f: f.beta), deltas)


# --------------------------------------------------------------------------
# objective, gradient check


def batch_objective(params: ModelParams, images, targets: ClipTargets, jm: JointModel,
                    lam: float = 1.0, n_iter: int = 3, need_grad: bool = True, l1_signs=None):
    """Loss, terms and (optionally) parameter gradients for one batch."""
    phis, tape = clip_forward(params, images, n_iter)
    loss, terms, gphis = clip_loss_and_grad(phis, targets, jm, lam, need_grad, l1_signs)
    grads = clip_backward(params, gphis, tape) if need_grad else None
    return loss, terms, grads


def _residual_signs(phis, targets: ClipTargets, jm: JointModel) -> np.ndarray:
    flat = phis.reshape(-1, PHI_DIM)
    X = phi_joints(jm, flat)
    x2 = np.exp(flat[:, SCALE])[:, None, None] * X[..., :2] + flat[:, None, TRANS]
    return np.sign(targets.keypoints2d.reshape(x2.shape) - x2)


@dataclass(frozen=True)
class GradCheckReport:
    errors: dict
    checked: dict
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list:
        return [f"{name:10s} entries={self.checked[name]:6d} rel_err={err:.3e}"
                for name, err in self.errors.items()]


def grad_check(params: ModelParams, batch, tolerance: float = 1e-4, jm: JointModel | None = None,
               template: BodyTemplate | None = None, lam: float = 1.0, n_iter: int = 3,
               step: float = 1e-5, max_entries: int | None = None, seed: int = 0,
               gradient_fn=None, freeze_l1_signs: bool = True) -> GradCheckReport:
    """Compare analytic gradients with central differences, per parameter group.

    ``batch`` is ``(images, targets)``. The error for a group is
    ``||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||)`` over the checked
    entries (all of them unless ``max_entries`` is given). ``gradient_fn``
    replaces the analytic gradient, e.g. with a corrupted one.

    With ``freeze_l1_signs`` the differenced objective keeps the reprojection
    residual signs of the unperturbed point. It equals the loss there and has
    the same gradient, but stays smooth when a residual lies within one step
    of zero, where plain central differences straddle the ``|r|`` kink.
    """
    if jm is None:
        if template is None:
            raise ValidationError("grad_check needs a JointModel or a template")
        jm = JointModel(template)
    images, targets = batch
    signs = None
    if freeze_l1_signs:
        signs = _residual_signs(clip_forward(params, images, n_iter)[0], targets, jm)
    if gradient_fn is None:
        _, _, analytic = batch_objective(params, images, targets, jm, lam, n_iter)
    else:
        analytic = gradient_fn(params, images, targets, jm)
    rng = np.random.default_rng(seed)
    work = params.copy()
    errors, checked = {}, {}
    for name, tensor in work.tensors.items():
        flat = tensor.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        fd = np.empty(len(idx))
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            lp = batch_objective(work, images, targets, jm, lam, n_iter, False, signs)[0]
            flat[i] = orig - step
            lm = batch_objective(work, images, targets, jm, lam, n_iter, False, signs)[0]
            flat[i] = orig
            fd[n] = (lp - lm) / (2 * step)
        ga = analytic[name].reshape(-1)[idx]
        denom = max(np.linalg.norm(ga), np.linalg.norm(fd), 1e-12)
        errors[name] = float(np.linalg.norm(ga - fd) / denom)
        checked[name] = len(idx)
    return GradCheckReport(errors, checked, tolerance)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    clip_length: int = 4
    lam: float = 1.0
    ief_iterations: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.lam < 0:
            raise ValidationError("learning_rate and lam must be >= 0")
        if self.batch_size < 1 or self.clip_length < 1 or self.ief_iterations < 1 or self.max_steps < 0:
            raise ValidationError("batch_size, clip_length and ief_iterations must be >= 1; max_steps >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValidationError("Adam moments must lie in [0, 1) and eps > 0")


@dataclass(frozen=True, eq=False)
class ToyDataset:
    """Clips ready for training: ``images (C, T, S, S)`` and matching targets."""

    images: np.ndarray
    targets: ClipTargets

    def __len__(self):
        return len(self.images)


class Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def update(self, params: ModelParams, grads: dict):
        c = self.cfg
        self.t += 1
        b1t = 1 - c.adam_beta1 ** self.t
        b2t = 1 - c.adam_beta2 ** self.t
        for name, p in params.tensors.items():
            g = grads[name]
            self.m[name] = c.adam_beta1 * self.m[name] + (1 - c.adam_beta1) * g
            self.v[name] = c.adam_beta2 * self.v[name] + (1 - c.adam_beta2) * g * g
            p -= c.learning_rate * (self.m[name] / b1t) / (np.sqrt(self.v[name] / b2t) + c.adam_eps)


def mean_phi_from_targets(targets: ClipTargets, rotation, scale: float, translation) -> np.ndarray:
    phi = np.zeros(PHI_DIM)
    phi[THETA] = targets.theta.reshape(-1, 72).mean(axis=0)
    phi[BETA] = targets.beta.reshape(-1, NUM_BETAS).mean(axis=0)
    phi[ROT] = rotation
    phi[TRANS] = translation
    phi[SCALE] = np.log(scale)
    return phi


def train_toy(data: ToyDataset, params: ModelParams, jm: JointModel, cfg: TrainConfig = TrainConfig(),
              log_path=None, log_every: int = 1, callback=None):
    """Adam on the clip objective. Returns ``(params, loss_curve)``.

    Batches are drawn without replacement from a seeded permutation; with
    fewer clips than ``batch_size`` every step sees all clips.
    """
    params = params.copy()
    opt = Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    C = len(data)
    bs = min(cfg.batch_size, C)
    order = rng.permutation(C)
    cursor = 0
    curve = []
    fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        if fh:
            fh.write(f"# lr={cfg.learning_rate} lam={cfg.lam} batch={bs} ief={cfg.ief_iterations} seed={cfg.seed}\n")
            fh.write("step total proj joint3d smpl shape\n")
        for step_idx in range(cfg.max_steps):
            if cursor + bs > C:
                order = rng.permutation(C)
                cursor = 0
            idx = np.sort(order[cursor:cursor + bs])
            cursor += bs
            loss, terms, grads = batch_objective(params, data.images[idx], data.targets.select(idx), jm,
                                                 cfg.lam, cfg.ief_iterations)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite loss or gradient at step {step_idx}", step=step_idx)
            curve.append(loss)
            if fh and step_idx % log_every == 0:
                fh.write(f"{step_idx} {loss:.9g} {terms['proj']:.9g} {terms['joint3d']:.9g} "
                         f"{terms['smpl']:.9g} {terms['shape']:.9g}\n")
            if callback is not None:
                callback(step_idx, loss, terms)
            opt.update(params, grads)
    finally:
        if fh:
            fh.close()
    return params, np.array(curve)


def evaluate_loss(params: ModelParams, data: ToyDataset, jm: JointModel, lam: float = 1.0,
                  n_iter: int = 3) -> float:
    return batch_objective(params, data.images, data.targets, jm, lam, n_iter, need_grad=False)[0]


def recovered_joints(params: ModelParams, images, jm: JointModel, n_iter: int = 3) -> np.ndarray:
    """Camera-oriented predicted joints ``(B, T, K, 3)`` for a batch of clips."""
    phis, _ = clip_forward(params, images, n_iter)
    return phi_joints(jm, phis)


# --------------------------------------------------------------------------
# serialization

_MAGIC = b"MFPARAMS"
_VERSION = 1


def save_params(params: ModelParams, path) -> None:
    """Binary file: magic, version, JSON model config, then named float64 tensors."""
    tensors = dict(params.tensors)
    tensors["mean_phi"] = params.mean_phi
    tensors["phi_scale"] = params.phi_scale
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    out = [_MAGIC, struct.pack("<II", _VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_params(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValidationError(f"{path}: not a parameter file (bad magic)")
    pos = 8
    version, clen = struct.unpack_from("<II", raw, pos)
    pos += 8
    if version != _VERSION:
        raise ValidationError(f"{path}: parameter file version {version} is not supported")
    cfg = ModelConfig(**json.loads(raw[pos:pos + clen].decode("utf-8")))
    pos += clen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    tensors = {}
    try:
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + klen].decode("utf-8")
            pos += klen
            (ndim,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, ValueError) as exc:
        raise ValidationError(f"{path}: truncated parameter file ({exc})") from None
    mean_phi = tensors.pop("mean_phi", None)
    phi_scale = tensors.pop("phi_scale", None)
    if mean_phi is None or phi_scale is None:
        raise ValidationError(f"{path}: missing mean_phi or phi_scale")
    return ModelParams(cfg, tensors, mean_phi, phi_scale)


def save_recovery(vectors, path) -> None:
    """One recovery vector per line as JSON."""
    lines = [json.dumps(v.to_dict(), sort_keys=True) for v in vectors]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_recovery(path) -> list:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(RecoveryVector(d["theta"], d["beta"], d["global_rotation"], d["translation"], d["scale"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad recovery record: {exc}") from None
    return out



# --------------------------------------------------------------------------
# toy data


def make_toy_sequences(template: BodyTemplate, n_clips: int = 8, clip_length: int = 4, seed: int = 0,
                       view: str = "N", resolution: int = 64, camera_distance: float = 24.0,
                       pose_sigma: float = 0.25, shape_sigma: float = 0.5) -> list:
    """Short synthetic clips (no garment), one ``{view: SequenceAnnotation}`` per clip.

    Each clip interpolates between two random poses drawn around the rest
    pose; each clip has its own random shape.
    """
    from .body_model import BodyPose, BodyShape
    from .pose_sequence import interpolate
    from .scene_gen import SceneConfig, generate_sequence

    if n_clips < 1 or clip_length < 1:
        raise ValidationError("n_clips and clip_length must be >= 1")
    rng = np.random.default_rng(seed)
    scene = SceneConfig(seed=seed, viewpoints=(view,), resolution=(resolution, resolution),
                        camera_distance=camera_distance, leadin_frames=0)
    K = template.joint_count
    out = []
    for c in range(n_clips):
        ends = []
        for _ in range(2):
            theta = rng.normal(0.0, pose_sigma, size=(K, 3))
            theta[0] = [0.0, 0.0, rng.uniform(-0.4, 0.4)]
            ends.append(BodyPose(theta))
        shape = BodyShape(rng.normal(0.0, shape_sigma, size=NUM_BETAS))
        if clip_length == 1:
            from .pose_sequence import PoseSequence
            seq = PoseSequence(((ends[0], shape),))
        else:
            seq = interpolate(ends[0], ends[1], clip_length, shape=shape)
        out.append(generate_sequence(seq, template, None, scene, source_id=f"toy_{c:03d}"))
    return out


def toy_dataset(sequences, template: BodyTemplate, image_size: int = 64, clip_length: int | None = None,
                view: str | None = None, deltas=None) -> ToyDataset:
    """Silhouettes and targets from annotated sequences, cut into equal-length clips."""
    from .scene_gen import rasterize_preview

    clips = []
    for seq in sequences:
        ann = seq if not isinstance(seq, dict) else seq[view if view is not None else sorted(seq)[0]]
        frames = list(ann.frames)
        T = clip_length or len(frames)
        clips.extend(frames[i:i + T] for i in range(0, len(frames) - T + 1, T))
    if not clips:
        raise ValidationError("no complete clips in the dataset")
    images = np.array([[rasterize_preview(f, "silhouette", template.faces, resolution=image_size)
                        for f in clip] for clip in clips], dtype=np.float64)
    return ToyDataset(images, targets_from_frames(clips, deltas))


def mean_phi_from_sequences(sequences, view: str | None = None) -> np.ndarray:
    """Dataset mean of ``phi``: mean pose and shape, plus the camera-implied weak perspective."""
    from .body_model import matrix_to_axis_angle

    frames = []
    for seq in sequences:
        ann = seq if not isinstance(seq, dict) else seq[view if view is not None else sorted(seq)[0]]
        frames.extend(ann.frames)
    phi = np.zeros(PHI_DIM)
    phi[THETA] = np.mean([f.theta for f in frames], axis=0)
    phi[BETA] = np.mean([f.beta for f in frames], axis=0)
    phi[ROT] = np.mean([matrix_to_axis_angle(f.camera.rotation) for f in frames], axis=0)
    phi[TRANS] = np.mean([f.keypoints2d[0] for f in frames], axis=0)
    depth = np.mean([f.joints3d[0, 2] for f in frames])
    phi[SCALE] = np.log(frames[0].camera.focal_px / depth)
    return phi
