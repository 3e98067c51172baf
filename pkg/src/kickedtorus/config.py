"""Strict JSON experiment configs.

One document format, one parser. Unknown keys are rejected at every level
because a silently ignored typo in a parameter name would invalidate the
results a run was meant to produce. Defaults are applied during parsing, so
a parsed config is complete, and ``to_document`` re-serializes it to an
equivalent document (the summary file uses this for lossless round trips).
"""

import json
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .families import coupled_standard, linear_test, strong_coupling2
from .noise import none_model, rotational_model, shift_model

EXPERIMENTS = (
    "spectrum",
    "sweep",
    "f2",
    "cone-escape",
    "noise-check",
    "transversality",
    "metric-check",
    "uniformity",
)

FAMILY_VARIANTS = ("CoupledStandard", "StrongCoupling2", "LinearTest")
NOISE_VARIANTS = ("Rotational", "Shift", "None")

_MAX_SEED = 2**64 - 1

# experiments that run the map need a family; noise defaults to the "None"
# variant except where the experiment is about the noise itself
_NEEDS_FAMILY = ("spectrum", "sweep", "f2", "cone-escape", "noise-check", "uniformity")
_NEEDS_NOISE = ("noise-check",)
_LIST_L_OK = ("sweep", "f2")
_NEEDS_NONCONSTANT_KICK = ("f2", "cone-escape")

_TOP_KEYS = (
    "experiment",
    "family",
    "noise",
    "n_steps",
    "trials",
    "beta",
    "seed",
    "out_path",
    "threads",
    "burn_in",
)

_FAMILY_KEYS = ("variant", "N", "L", "mu", "A")
_NOISE_KEYS = ("variant", "mode", "per_axis", "c", "zeta", "epsilon")

# rendered verbatim by the CLI --help epilog
CONFIG_KEY_DOCS = (
    ("experiment", "one of: " + ", ".join(EXPERIMENTS) + " (the subcommand may supply it)"),
    ("seed", "unsigned 64-bit run seed; 0 draws one from system entropy and records it"),
    ("family", "map family object (required for map experiments)"),
    ("family.variant", "CoupledStandard | StrongCoupling2 | LinearTest"),
    ("family.N", "site count, integer >= 1 (CoupledStandard)"),
    ("family.L", "kick strength >= 1; a list of values for sweep and f2"),
    ("family.mu", "symmetric zero-diagonal N x N coupling matrix (CoupledStandard)"),
    ("family.A", "square integer matrix (LinearTest)"),
    ("noise", "noise model object; omitted means the 'None' variant"),
    ("noise.variant", "Rotational | Shift | None"),
    ("noise.mode", "faithful | light center layout (Rotational, default faithful)"),
    ("noise.per_axis", "centers per axis, integer >= 1 (Rotational light mode)"),
    ("noise.c", "noise amplitude, positive; omitted means the calibrated maximum"),
    ("noise.zeta", "density-bound record, positive (Rotational, optional)"),
    ("noise.epsilon", "translation amplitude >= 0 (Shift)"),
    ("n_steps", "steps per trajectory / samples per estimate / window length, >= 1"),
    ("trials", "independent trials (or sampled pairs), integer >= 1, default 1"),
    ("beta", "criticality exponent in (0, 1), default 0.5"),
    ("out_path", "output stem; the run writes <out_path>.csv and <out_path>.json"),
    ("threads", "worker threads over trials, integer >= 1, default: available cores"),
    ("burn_in", "unrecorded alignment steps, integer >= 0, default 1000"),
)


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully defaulted description of one run."""

    experiment: str
    seed: int
    family: Optional[dict]
    noise: Optional[dict]
    n_steps: int
    trials: int
    beta: float
    out_path: str
    threads: int
    burn_in: int

    def to_document(self):
        """JSON-ready dict that parses back to an equal RunConfig."""
        doc = {"experiment": self.experiment, "seed": self.seed}
        if self.family is not None:
            doc["family"] = json.loads(json.dumps(self.family))
        if self.noise is not None:
            doc["noise"] = json.loads(json.dumps(self.noise))
        doc.update(
            n_steps=self.n_steps,
            trials=self.trials,
            beta=self.beta,
            out_path=self.out_path,
            threads=self.threads,
            burn_in=self.burn_in,
        )
        return doc

    def with_overrides(self, seed=None, out_path=None, threads=None):
        """Apply command-line overrides and re-validate the changed fields."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=_check_seed(seed))
        if out_path is not None:
            cfg = replace(cfg, out_path=_check_out_path(out_path))
        if threads is not None:
            if not isinstance(threads, int) or threads < 1:
                raise ConfigError("threads must be an integer >= 1")
            cfg = replace(cfg, threads=threads)
        return cfg

    def l_values(self):
        """Kick strengths this run covers, one output row per value."""
        if self.family is None or "L" not in self.family:
            return [None]
        lval = self.family["L"]
        if isinstance(lval, list):
            return list(lval)
        return [lval]


def _reject_unknown(obj, allowed, where):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _as_int(obj, key, where, minimum=None, maximum=None, bound_text=None):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{where}{key} must be an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}{key} must be {bound_text or f'>= {minimum}'}, got {val}")
    if maximum is not None and val > maximum:
        raise ConfigError(f"{where}{key} must be {bound_text or f'<= {maximum}'}, got {val}")
    return val


def _as_number(obj, key, where):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}{key} must be a number, got {val!r}")
    val = float(val)
    if not np.isfinite(val):
        raise ConfigError(f"{where}{key} must be finite, got {val}")
    return val


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed <= _MAX_SEED:
        raise ConfigError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def _check_out_path(out_path):
    if not isinstance(out_path, str) or not out_path:
        raise ConfigError("out_path must be a non-empty string")
    return out_path


def _number_matrix(val, key):
    arr = np.asarray(val, dtype=object)
    try:
        arr = arr.astype(np.float64)
    except (TypeError, ValueError):
        raise ConfigError(f"family.{key} must be a rectangular matrix of numbers") from None
    if arr.ndim != 2:
        raise ConfigError(f"family.{key} must be a 2-d matrix, got {arr.ndim} dims")
    return arr


def _parse_family(obj, experiment):
    if not isinstance(obj, dict):
        raise ConfigError("family must be an object")
    if "variant" not in obj:
        raise ConfigError("missing required key 'variant' in family")
    variant = obj["variant"]
    if variant not in FAMILY_VARIANTS:
        raise ConfigError(
            f"family.variant must be one of {', '.join(FAMILY_VARIANTS)}, got {variant!r}"
        )
    applies = {
        "CoupledStandard": ("variant", "N", "L", "mu"),
        "StrongCoupling2": ("variant", "L"),
        "LinearTest": ("variant", "A"),
    }[variant]
    for key in obj:
        if key in applies:
            continue
        if key in _FAMILY_KEYS:
            raise ConfigError(f"family key {key!r} does not apply to variant {variant!r}")
        raise ConfigError(f"unknown key {key!r} in family")

    out = {"variant": variant}
    if variant == "LinearTest":
        if "A" not in obj:
            raise ConfigError("missing required key 'A' in family")
        amat = _number_matrix(obj["A"], "A")
        linear_test(amat)
        out["A"] = amat.tolist()
        return out

    if "L" not in obj:
        raise ConfigError("missing required key 'L' in family")
    lraw = obj["L"]
    if isinstance(lraw, list):
        if experiment not in _LIST_L_OK:
            raise ConfigError(
                f"family.L must be a single number for experiment {experiment!r}"
            )
        if not lraw:
            raise ConfigError("family.L list must be non-empty")
        lvals = []
        for item in lraw:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"family.L entries must be numbers, got {item!r}")
            lvals.append(float(item))
        out["L"] = lvals
    else:
        if isinstance(lraw, bool) or not isinstance(lraw, (int, float)):
            raise ConfigError(f"family.L must be a number, got {lraw!r}")
        lvals = [float(lraw)]
        out["L"] = float(lraw)

    if variant == "CoupledStandard":
        if "N" not in obj:
            raise ConfigError("missing required key 'N' in family")
        nsites = _as_int(obj, "N", "family.", minimum=1)
        out["N"] = nsites
        mu = None
        if "mu" in obj:
            mu = _number_matrix(obj["mu"], "mu")
            out["mu"] = mu.tolist()
        for lval in lvals:
            coupled_standard(nsites, lval, mu)
    else:
        for lval in lvals:
            strong_coupling2(lval)
    return out


def _parse_noise(obj):
    if not isinstance(obj, dict):
        raise ConfigError("noise must be an object")
    if "variant" not in obj:
        raise ConfigError("missing required key 'variant' in noise")
    variant = obj["variant"]
    if variant not in NOISE_VARIANTS:
        raise ConfigError(
            f"noise.variant must be one of {', '.join(NOISE_VARIANTS)}, got {variant!r}"
        )
    applies = {
        "Rotational": ("variant", "mode", "per_axis", "c", "zeta"),
        "Shift": ("variant", "epsilon"),
        "None": ("variant",),
    }[variant]
    for key in obj:
        if key in applies:
            continue
        if key in _NOISE_KEYS:
            raise ConfigError(f"noise key {key!r} does not apply to variant {variant!r}")
        raise ConfigError(f"unknown key {key!r} in noise")

    out = {"variant": variant}
    if variant == "None":
        return out
    if variant == "Shift":
        if "epsilon" not in obj:
            raise ConfigError("missing required key 'epsilon' in noise")
        eps = _as_number(obj, "epsilon", "noise.")
        if eps < 0.0:
            raise ConfigError(f"noise.epsilon must be >= 0, got {eps}")
        out["epsilon"] = eps
        return out

    mode = obj.get("mode", "faithful")
    if mode not in ("faithful", "light"):
        raise ConfigError(f"noise.mode must be 'faithful' or 'light', got {mode!r}")
    out["mode"] = mode
    if mode == "light":
        if "per_axis" not in obj:
            raise ConfigError("missing required key 'per_axis' in noise (light mode)")
        out["per_axis"] = _as_int(obj, "per_axis", "noise.", minimum=1)
    elif "per_axis" in obj:
        raise ConfigError("noise key 'per_axis' applies only to light mode")
    if "c" in obj:
        cval = _as_number(obj, "c", "noise.")
        if cval <= 0.0:
            raise ConfigError(f"noise.c must be positive, got {cval}")
        out["c"] = cval
    if "zeta" in obj:
        zval = _as_number(obj, "zeta", "noise.")
        if zval <= 0.0:
            raise ConfigError(f"noise.zeta must be positive, got {zval}")
        out["zeta"] = zval
    return out


def parse_config(document, experiment=None):
    """Parse and validate one UTF-8 JSON config document.

    Args:
        document: the config text.
        experiment: experiment name supplied outside the document (the CLI
            subcommand); must agree with the document when both are present.

    Returns:
        RunConfig with all defaults applied.

    Raises:
        ConfigError: syntax error (with line and column), unknown key,
            missing key, type violation, or range violation.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"config syntax error at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from None
    if not isinstance(obj, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(obj, _TOP_KEYS, "config")

    doc_exp = obj.get("experiment")
    if doc_exp is None and experiment is None:
        raise ConfigError("missing required config key 'experiment'")
    if doc_exp is not None and doc_exp not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}, got {doc_exp!r}"
        )
    if doc_exp is not None and experiment is not None and doc_exp != experiment:
        raise ConfigError(
            f"config experiment {doc_exp!r} does not match subcommand {experiment!r}"
        )
    exp = doc_exp if doc_exp is not None else experiment
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")

    if "seed" not in obj:
        raise ConfigError("missing required config key 'seed'")
    seed = _check_seed(obj["seed"])

    n_steps = _as_int(obj, "n_steps", "", minimum=1) if "n_steps" in obj else 10_000
    trials = _as_int(obj, "trials", "", minimum=1) if "trials" in obj else 1
    if "beta" in obj:
        beta = _as_number(obj, "beta", "")
        if not 0.0 < beta < 1.0:
            raise ConfigError(f"beta must lie in (0, 1), got {beta}")
    else:
        beta = 0.5
    out_path = _check_out_path(obj["out_path"]) if "out_path" in obj else "results"
    if "threads" in obj:
        threads = _as_int(obj, "threads", "", minimum=1)
    else:
        threads = os.cpu_count() or 1
    burn_in = _as_int(obj, "burn_in", "", minimum=0) if "burn_in" in obj else 1000

    family = None
    if obj.get("family") is not None:
        family = _parse_family(obj["family"], exp)
    elif exp in _NEEDS_FAMILY:
        raise ConfigError(f"experiment {exp!r} requires config key 'family'")

    noise = None
    if obj.get("noise") is not None:
        noise = _parse_noise(obj["noise"])
    elif exp in _NEEDS_NOISE:
        raise ConfigError(f"experiment {exp!r} requires config key 'noise'")
    elif family is not None:
        noise = {"variant": "None"}

    if family is not None and family["variant"] == "LinearTest":
        if exp in _NEEDS_NONCONSTANT_KICK:
            raise ConfigError(
                f"experiment {exp!r} does not support family variant 'LinearTest'"
            )

    return RunConfig(
        experiment=exp,
        seed=seed,
        family=family,
        noise=noise,
        n_steps=n_steps,
        trials=trials,
        beta=beta,
        out_path=out_path,
        threads=threads,
        burn_in=burn_in,
    )


def build_family(family, l_value=None):
    """Construct the MapFamily a validated family dict describes.

    l_value picks one entry when family['L'] is a list (sweep and f2 rows).
    """
    variant = family["variant"]
    if variant == "LinearTest":
        return linear_test(np.asarray(family["A"], dtype=np.float64))
    lval = l_value if l_value is not None else family["L"]
    if isinstance(lval, list):
        raise ConfigError("family.L is a list; pass l_value to pick one entry")
    if variant == "StrongCoupling2":
        return strong_coupling2(lval)
    mu = np.asarray(family["mu"], dtype=np.float64) if "mu" in family else None
    return coupled_standard(family["N"], lval, mu)


def build_noise(noise, N):
    """Construct the NoiseModel a validated noise dict describes."""
    if noise is None or noise["variant"] == "None":
        return none_model(N)
    if noise["variant"] == "Shift":
        return shift_model(N, noise["epsilon"])
    return rotational_model(
        N,
        per_axis=noise.get("per_axis"),
        c=noise.get("c"),
        zeta=noise.get("zeta"),
        mode=noise.get("mode", "faithful"),
    )
