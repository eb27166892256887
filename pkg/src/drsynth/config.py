"""INI-backed configuration for the command-line tools.

One flat key = value file with three sections mirroring the package
areas: ``[synthgen]`` (mode, contrast and subclass ranges, seed),
``[augment]`` (spatial, corruption, and resolution ranges), and
``[epg]`` (sequence and relaxometry ranges).  Pairs are written as
"lo, hi"; blank means "unset" for optional keys.  Reference relaxometry
intervals use one key per class: ``reference_3 = t1lo:t1hi t2lo:t2hi
pdlo:pdhi``.

Loading starts from the package defaults and overrides whatever keys are
present; unknown sections or keys are errors so typos cannot silently
fall back to defaults.  ``config_sections`` emits every effective value,
defaults included, which is what generation writes into provenance
sidecars.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .augment import AffineRanges, AugmentProfile, CorruptionConfig, ResolutionSim, SvfConfig
from .epg import ReferenceInterval, RelaxometryRanges, SequenceRanges
from .errors import ConfigError
from .generator import GenerationConfig, GeneratorMode


def _tokens(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _float(text: str, ctx: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{ctx}: expected a number, got {text!r}") from exc


def _int(text: str, ctx: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{ctx}: expected an integer, got {text!r}") from exc


def _pair(text: str, ctx: str, cast=_float) -> tuple:
    toks = _tokens(text)
    if len(toks) != 2:
        raise ConfigError(f"{ctx}: expected 'lo, hi', got {text!r}")
    return cast(toks[0], ctx), cast(toks[1], ctx)


def _bool(text: str, ctx: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{ctx}: expected a boolean, got {text!r}")


def _interval(text: str, ctx: str) -> ReferenceInterval:
    toks = _tokens(text)
    if len(toks) != 3:
        raise ConfigError(f"{ctx}: expected 't1lo:t1hi t2lo:t2hi pdlo:pdhi', got {text!r}")
    pairs = []
    for tok in toks:
        lohi = tok.split(":")
        if len(lohi) != 2:
            raise ConfigError(f"{ctx}: expected lo:hi, got {tok!r}")
        pairs.append((_float(lohi[0], ctx), _float(lohi[1], ctx)))
    return ReferenceInterval(t1_ms=pairs[0], t2_ms=pairs[1], pd=pairs[2])


def _fmt_pair(pair) -> str:
    return f"{pair[0]!r}, {pair[1]!r}"


def _fmt_interval(iv: ReferenceInterval) -> str:
    return (
        f"{iv.t1_ms[0]!r}:{iv.t1_ms[1]!r} "
        f"{iv.t2_ms[0]!r}:{iv.t2_ms[1]!r} "
        f"{iv.pd[0]!r}:{iv.pd[1]!r}"
    )


def config_sections(cfg: GenerationConfig) -> dict[str, dict[str, str]]:
    """Every effective value as section -> key -> string, defaults included."""
    synthgen = {
        "mode": cfg.mode.value,
        "profile": cfg.profile.value,
        "mu": _fmt_pair(cfg.mu_range),
        "sigma": _fmt_pair(cfg.sigma_range),
        "subclasses": f"{cfg.k_range[0]}, {cfg.k_range[1]}",
        "nonbrain_subclasses": (
            "" if cfg.nonbrain_k_range is None else f"{cfg.nonbrain_k_range[0]}, {cfg.nonbrain_k_range[1]}"
        ),
        "master_seed": str(cfg.master_seed),
    }
    aug = {
        "rotation_rad": repr(cfg.affine.rotation_rad),
        "scale_delta": repr(cfg.affine.scale_delta),
        "translation_mm": repr(cfg.affine.translation_mm),
        "shear": repr(cfg.affine.shear),
        "svf_control_points": str(cfg.svf.control_points),
        "svf_sigma_vox": repr(cfg.svf.sigma_vox),
        "svf_steps": str(cfg.svf.integration_steps),
        "bias_control_points": str(cfg.corruption.bias_control_points),
        "bias_log_sigma": repr(cfg.corruption.bias_log_sigma),
        "gamma": _fmt_pair(cfg.corruption.gamma_range),
        "noise_sigma": _fmt_pair(cfg.corruption.noise_sigma_range),
        "blur_sigma_mm": _fmt_pair(cfg.corruption.blur_sigma_mm_range),
        "simple_noise_sigma": repr(cfg.corruption.simple_noise_sigma),
        "op_probability": repr(cfg.corruption.op_probability),
        "inplane_mm": _fmt_pair(cfg.resolution.inplane_range_mm),
        "thickness_mm": _fmt_pair(cfg.resolution.thickness_range_mm),
        "slice_axis": "" if cfg.resolution.slice_axis is None else str(cfg.resolution.slice_axis),
    }
    epg = {
        "esp_ms": repr(cfg.sequence.esp_ms),
        "etl": str(cfg.sequence.etl),
        "excitation_deg": repr(cfg.sequence.excitation_deg),
        "refocus_deg": _fmt_pair(cfg.sequence.refocus_range_deg),
        "te_eff_ms": _fmt_pair(cfg.sequence.te_eff_range_ms),
        "voxelwise": "true" if cfg.epg_voxelwise else "false",
        "t1_ms": _fmt_pair(cfg.relaxometry.t1_range_ms),
        "t2_ms": _fmt_pair(cfg.relaxometry.t2_range_ms),
        "pd": _fmt_pair(cfg.relaxometry.pd_range),
    }
    for cid, iv in sorted(cfg.relaxometry.reference.items()):
        epg[f"reference_{cid}"] = _fmt_interval(iv)
    return {"synthgen": synthgen, "augment": aug, "epg": epg}


def config_text(cfg: GenerationConfig) -> str:
    lines = []
    for section, kv in config_sections(cfg).items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in kv.items())
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: GenerationConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_text(cfg))


_KNOWN_KEYS = {name: set(kv) for name, kv in config_sections(GenerationConfig()).items()}


def _apply_synthgen(cfg: GenerationConfig, kv: dict[str, str]) -> GenerationConfig:
    if "mode" in kv:
        try:
            cfg = replace(cfg, mode=GeneratorMode(kv["mode"].strip().lower()))
        except ValueError:
            valid = ", ".join(m.value for m in GeneratorMode)
            raise ConfigError(f"synthgen.mode: {kv['mode']!r} is not one of {valid}") from None
    if "profile" in kv:
        try:
            cfg = replace(cfg, profile=AugmentProfile(kv["profile"].strip().lower()))
        except ValueError:
            valid = ", ".join(p.value for p in AugmentProfile)
            raise ConfigError(f"synthgen.profile: {kv['profile']!r} is not one of {valid}") from None
    if "mu" in kv:
        cfg = replace(cfg, mu_range=_pair(kv["mu"], "synthgen.mu"))
    if "sigma" in kv:
        cfg = replace(cfg, sigma_range=_pair(kv["sigma"], "synthgen.sigma"))
    if "subclasses" in kv:
        cfg = replace(cfg, k_range=_pair(kv["subclasses"], "synthgen.subclasses", _int))
    if "nonbrain_subclasses" in kv:
        text = kv["nonbrain_subclasses"].strip()
        rng = None if not text else _pair(text, "synthgen.nonbrain_subclasses", _int)
        cfg = replace(cfg, nonbrain_k_range=rng)
    if "master_seed" in kv:
        cfg = replace(cfg, master_seed=_int(kv["master_seed"], "synthgen.master_seed"))
    return cfg


def _apply_augment(cfg: GenerationConfig, kv: dict[str, str]) -> GenerationConfig:
    aff = cfg.affine
    for key, attr in (
        ("rotation_rad", "rotation_rad"),
        ("scale_delta", "scale_delta"),
        ("translation_mm", "translation_mm"),
        ("shear", "shear"),
    ):
        if key in kv:
            aff = replace(aff, **{attr: _float(kv[key], f"augment.{key}")})
    svf = cfg.svf
    if "svf_control_points" in kv:
        svf = replace(svf, control_points=_int(kv["svf_control_points"], "augment.svf_control_points"))
    if "svf_sigma_vox" in kv:
        svf = replace(svf, sigma_vox=_float(kv["svf_sigma_vox"], "augment.svf_sigma_vox"))
    if "svf_steps" in kv:
        svf = replace(svf, integration_steps=_int(kv["svf_steps"], "augment.svf_steps"))
    cor = cfg.corruption
    if "bias_control_points" in kv:
        cor = replace(cor, bias_control_points=_int(kv["bias_control_points"], "augment.bias_control_points"))
    if "bias_log_sigma" in kv:
        cor = replace(cor, bias_log_sigma=_float(kv["bias_log_sigma"], "augment.bias_log_sigma"))
    if "gamma" in kv:
        cor = replace(cor, gamma_range=_pair(kv["gamma"], "augment.gamma"))
    if "noise_sigma" in kv:
        cor = replace(cor, noise_sigma_range=_pair(kv["noise_sigma"], "augment.noise_sigma"))
    if "blur_sigma_mm" in kv:
        cor = replace(cor, blur_sigma_mm_range=_pair(kv["blur_sigma_mm"], "augment.blur_sigma_mm"))
    if "simple_noise_sigma" in kv:
        cor = replace(cor, simple_noise_sigma=_float(kv["simple_noise_sigma"], "augment.simple_noise_sigma"))
    if "op_probability" in kv:
        cor = replace(cor, op_probability=_float(kv["op_probability"], "augment.op_probability"))
    res = cfg.resolution
    if "inplane_mm" in kv:
        res = replace(res, inplane_range_mm=_pair(kv["inplane_mm"], "augment.inplane_mm"))
    if "thickness_mm" in kv:
        res = replace(res, thickness_range_mm=_pair(kv["thickness_mm"], "augment.thickness_mm"))
    if "slice_axis" in kv:
        text = kv["slice_axis"].strip()
        axis = None if not text else _int(text, "augment.slice_axis")
        if axis is not None and axis not in (0, 1, 2):
            raise ConfigError(f"augment.slice_axis: must be 0, 1, or 2, got {axis}")
        res = replace(res, slice_axis=axis)
    return replace(cfg, affine=aff, svf=svf, corruption=cor, resolution=res)


def _apply_epg(cfg: GenerationConfig, kv: dict[str, str]) -> GenerationConfig:
    seq = cfg.sequence
    if "esp_ms" in kv:
        seq = replace(seq, esp_ms=_float(kv["esp_ms"], "epg.esp_ms"))
    if "etl" in kv:
        seq = replace(seq, etl=_int(kv["etl"], "epg.etl"))
    if "excitation_deg" in kv:
        seq = replace(seq, excitation_deg=_float(kv["excitation_deg"], "epg.excitation_deg"))
    if "refocus_deg" in kv:
        seq = replace(seq, refocus_range_deg=_pair(kv["refocus_deg"], "epg.refocus_deg"))
    if "te_eff_ms" in kv:
        seq = replace(seq, te_eff_range_ms=_pair(kv["te_eff_ms"], "epg.te_eff_ms"))
    relax = cfg.relaxometry
    if "t1_ms" in kv:
        relax = replace(relax, t1_range_ms=_pair(kv["t1_ms"], "epg.t1_ms"))
    if "t2_ms" in kv:
        relax = replace(relax, t2_range_ms=_pair(kv["t2_ms"], "epg.t2_ms"))
    if "pd" in kv:
        relax = replace(relax, pd_range=_pair(kv["pd"], "epg.pd"))
    reference = dict(relax.reference)
    for key, value in kv.items():
        if key.startswith("reference_"):
            cid = _int(key[len("reference_") :], f"epg.{key}")
            reference[cid] = _interval(value, f"epg.{key}")
    relax = replace(relax, reference=reference)
    out = replace(cfg, sequence=seq, relaxometry=relax)
    if "voxelwise" in kv:
        out = replace(out, epg_voxelwise=_bool(kv["voxelwise"], "epg.voxelwise"))
    return out


def apply_sections(cfg: GenerationConfig, sections: dict[str, dict[str, str]]) -> GenerationConfig:
    """Override a config from parsed section -> key -> value strings."""
    for name, kv in sections.items():
        if name not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{name}]")
        for key in kv:
            if key not in _KNOWN_KEYS[name] and not (name == "epg" and key.startswith("reference_")):
                raise ConfigError(f"unknown key {key!r} in section [{name}]")
    cfg = _apply_synthgen(cfg, sections.get("synthgen", {}))
    cfg = _apply_augment(cfg, sections.get("augment", {}))
    cfg = _apply_epg(cfg, sections.get("epg", {}))
    return cfg


def load_config(path, base: GenerationConfig | None = None) -> GenerationConfig:
    """Read an INI file, overriding ``base`` (package defaults if None)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    sections = {name: dict(cp.items(name)) for name in cp.sections()}
    return apply_sections(base if base is not None else GenerationConfig(), sections)


@dataclass(frozen=True)
class RunConfig:
    """One resolved command-line invocation."""

    subcommand: str
    in_dir: str = ""
    out_dir: str = ""
    generation: GenerationConfig = None
    count: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"sample count must be >= 1, got {self.count}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")
