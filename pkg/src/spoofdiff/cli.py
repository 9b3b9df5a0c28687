"""Command-line pipeline driver.

Subcommands mirror the experimental flow: ``corpus`` builds the synthetic
domains, ``train-diffusion`` fits the two denoising models, ``despoof`` runs
the bridge and dumps reconstructions plus noise maps, ``train-detector`` fits
one of the four input configurations, and ``eval`` scores a protocol and
writes the metrics report with its threshold sweep and figures.

All commands are reproducible from (config, seed); artifacts carry no
timestamps.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoints import load_denoiser, load_detector, save_denoiser, save_detector
from .config import RunConfig, RunPaths, load_config
from .corpus import (DOMAINS, SampleRecord, build_protocols, generate_domain,
                     load_depth, load_image, load_noise_map, read_manifest,
                     save_image, save_noise_map, write_domain)
from .denoiser import (DOMAIN_GENUINE_ONLY, DOMAIN_SPOOF_UNION, DenoiserConfig,
                       init_denoiser)
from .detector import (DetectorConfig, DetectorDataset, init_detector,
                       score_dataset, train_detector)
from .diffusion import despoof as run_bridge
from .diffusion import train_diffusion
from .metrics import MetricsReport, ScoreSet, apcer_bpcer, eer, hter, sweep_table
from .numerics import Tensor
from .report import (save_image_panel, save_loss_curve, save_montage,
                     save_threshold_curves, write_table)
from .schedule import build_linear_schedule
from .seeding import derive_u64

DESPOOF_BATCH = 128


class CommandError(RuntimeError):
    """Raised for anticipated failures; turns into a nonzero exit."""


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def _require(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise CommandError(f"missing {path} ({hint})")
    return Path(path)


def _records_for(paths: RunPaths, domain: str, split: str | None = None,
                 label: str | None = None) -> list[SampleRecord]:
    manifest = _require(paths.manifest(domain),
                        "run `spoofdiff corpus` first")
    records = read_manifest(manifest)
    if split and split != "all":
        records = [r for r in records if r.split == split]
    if label:
        records = [r for r in records if r.label == label]
    return records


def _load_images(paths: RunPaths, domain: str, records: list[SampleRecord],
                 dtype=np.float32) -> np.ndarray:
    base = paths.domain_dir(domain)
    return np.stack([load_image(base / r.image_path, dtype) for r in records])


def _load_depths(paths: RunPaths, domain: str, records: list[SampleRecord],
                 dtype=np.float32) -> np.ndarray:
    base = paths.domain_dir(domain)
    return np.stack([load_depth(base / r.depth_path, dtype) for r in records])


def _load_noise(paths: RunPaths, domain: str, steps: int,
                records: list[SampleRecord], dtype=np.float32) -> np.ndarray:
    base = paths.despoof_dir(domain, steps) / "noise"
    maps = []
    for r in records:
        p = base / f"{r.id}.png"
        _require(p, f"run `spoofdiff despoof --domain {domain} --steps {steps}` first")
        maps.append(load_noise_map(p, dtype))
    return np.stack(maps)


def _denoiser_pair(paths: RunPaths):
    ckpt_s = _require(paths.diffusion_ckpt(DOMAIN_SPOOF_UNION),
                      "run `spoofdiff train-diffusion --domain all` first")
    ckpt_g = _require(paths.diffusion_ckpt(DOMAIN_GENUINE_ONLY),
                      "run `spoofdiff train-diffusion --domain genuine` first")
    params_s, schedule_s = load_denoiser(ckpt_s)
    params_g, schedule_g = load_denoiser(ckpt_g)
    if (schedule_s.T, schedule_s.beta_start, schedule_s.beta_end) != \
            (schedule_g.T, schedule_g.beta_start, schedule_g.beta_end):
        raise CommandError("the two diffusion checkpoints carry different schedules")
    return params_s, params_g, schedule_s


def _detector_dataset(paths: RunPaths, domain: str, records: list[SampleRecord],
                      inputs: str, steps: int) -> DetectorDataset:
    rgb = _load_images(paths, domain, records)
    depth = _load_depths(paths, domain, records)
    noise = None
    if inputs in ("noise", "rgb_noise"):
        noise = _load_noise(paths, domain, steps, records)
    return DetectorDataset(rgb=rgb, depth=depth,
                           labels=[r.label for r in records], noise=noise)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_corpus(cfg: RunConfig) -> int:
    paths = RunPaths(cfg.run.out_dir)
    total = 0
    for domain in DOMAINS:
        records, images, depths = generate_domain(
            cfg.run.seed, domain, cfg.corpus.genuine_per_domain,
            cfg.corpus.spoof_per_domain, cfg.corpus.image_size)
        out_dir = paths.domain_dir(domain)
        write_domain(out_dir, records, images, depths)
        montage = [images[r.id] for r in records[:8]] + \
                  [images[r.id] for r in records if r.label == "spoof"][:8]
        save_montage(out_dir / "montage.png", montage, ncols=8,
                     title=f"domain {domain}: genuine (top) / spoof (bottom)")
        _require(paths.manifest(domain), "corpus write failed")
        total += len(records)
        print(f"domain {domain}: {len(records)} samples -> {out_dir}")
    print(f"corpus complete: {total} records")
    return 0


def cmd_train_diffusion(cfg: RunConfig, domain_choice: str) -> int:
    paths = RunPaths(cfg.run.out_dir)
    source = cfg.protocol.source_domain()
    tag = DOMAIN_SPOOF_UNION if domain_choice == "all" else DOMAIN_GENUINE_ONLY
    label = None if domain_choice == "all" else "genuine"
    train_records = _records_for(paths, source, "train", label)
    dev_records = _records_for(paths, source, "dev", label)
    if not train_records:
        raise CommandError(f"no training records for domain {source!r}")
    images = _load_images(paths, source, train_records)
    holdout = _load_images(paths, source, dev_records) if dev_records else None

    # both diffusion models share one init seed: starting from identical
    # weights keeps their ODE fields close, which the bridge depends on
    dcfg = DenoiserConfig(
        image_size=cfg.corpus.image_size, channels=3,
        base_width=cfg.denoiser.base_width, depth_levels=cfg.denoiser.depth_levels,
        time_embed_dim=cfg.denoiser.time_embed_dim,
        seed=derive_u64(cfg.run.seed, "denoiser-init"))
    params = init_denoiser(dcfg, tag)
    schedule = build_linear_schedule(cfg.schedule.timesteps, cfg.schedule.beta_start,
                                     cfg.schedule.beta_end)
    rows = train_diffusion(params, images, schedule, cfg.diffusion_train,
                           seed=derive_u64(cfg.run.seed, "train-diffusion", tag),
                           holdout=holdout)

    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    paths.logs.mkdir(parents=True, exist_ok=True)
    ckpt = paths.diffusion_ckpt(tag)
    save_denoiser(ckpt, params, schedule)
    log_path = paths.logs / f"train_diffusion_{tag}.tsv"
    write_table(log_path, ("step", "loss", "roundtrip_mse"), rows)
    save_loss_curve(paths.logs / f"train_diffusion_{tag}.png",
                    [r[0] for r in rows], [r[1] for r in rows],
                    f"diffusion training ({tag}, domain {source})")
    _require(ckpt, "checkpoint write failed")
    final_rt = next((r[2] for r in reversed(rows) if np.isfinite(r[2])), float("nan"))
    print(f"trained {tag} on domain {source}: {len(rows)} steps, "
          f"final loss {rows[-1][1]:.4f}, roundtrip mse {final_rt:.5f} -> {ckpt}")
    return 0


def cmd_despoof(cfg: RunConfig, domain: str, split: str, steps: int) -> int:
    paths = RunPaths(cfg.run.out_dir)
    params_s, params_g, schedule = _denoiser_pair(paths)
    records = _records_for(paths, domain, split)
    if not records:
        raise CommandError(f"no records for domain {domain!r} split {split!r}")
    out_dir = paths.despoof_dir(domain, steps)
    (out_dir / "recon").mkdir(parents=True, exist_ok=True)
    (out_dir / "noise").mkdir(parents=True, exist_ok=True)

    energies: list[tuple[str, float]] = []
    panel_inputs, panel_recons, panel_noise = [], [], []
    for lo in range(0, len(records), DESPOOF_BATCH):
        chunk = records[lo:lo + DESPOOF_BATCH]
        x = Tensor(_load_images(paths, domain, chunk))
        x_g, noise = run_bridge(x, params_s, params_g, schedule, steps=steps)
        for i, r in enumerate(chunk):
            save_image(out_dir / "recon" / f"{r.id}.png", x_g.data[i])
            save_noise_map(out_dir / "noise" / f"{r.id}.png", noise.map.data[i])
            energies.append((r.id, float(noise.map.data[i].mean())))
            if len(panel_inputs) < cfg.despoof.panel_samples:
                panel_inputs.append(x.data[i])
                panel_recons.append(x_g.data[i])
                panel_noise.append(noise.map.data[i])
    write_table(out_dir / "energies.tsv", ("id", "noise_energy"), energies)
    save_image_panel(out_dir / "panel.png",
                     [panel_inputs, panel_recons, panel_noise],
                     ["input", "reconstruction", "noise"],
                     f"de-spoofing bridge (domain {domain}, {steps} steps)")
    _require(out_dir / "energies.tsv", "despoof write failed")
    mean_e = float(np.mean([e for _, e in energies]))
    print(f"despoofed {len(records)} samples (domain {domain}, split {split}, "
          f"{steps} steps), mean noise energy {mean_e:.4f} -> {out_dir}")
    return 0


def cmd_train_detector(cfg: RunConfig, inputs: str, steps: int) -> int:
    paths = RunPaths(cfg.run.out_dir)
    source = cfg.protocol.source_domain()
    train_set = _detector_dataset(paths, source, _records_for(paths, source, "train"),
                                  inputs, steps)
    dev_set = _detector_dataset(paths, source, _records_for(paths, source, "dev"),
                                inputs, steps)

    dtc = DetectorConfig(
        image_size=cfg.corpus.image_size, input_mode=inputs,
        cdc_theta=cfg.detector.cdc_theta, crop_fraction=cfg.detector.crop_fraction,
        aux_heads=cfg.detector.aux_heads and inputs in ("rgb_rgb", "rgb_noise"),
        seed=derive_u64(cfg.run.seed, "detector-init", inputs))
    params = init_detector(dtc)
    rows = train_detector(params, train_set, cfg.detector_train,
                          seed=derive_u64(cfg.run.seed, "train-detector", inputs),
                          dev_set=dev_set)

    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    paths.logs.mkdir(parents=True, exist_ok=True)
    ckpt = paths.detector_ckpt(inputs, steps)
    save_detector(ckpt, params)
    log_path = paths.logs / f"train_detector_{inputs}_steps{steps}.tsv"
    write_table(log_path, ("step", "loss", "lr", "dev_loss"), rows)
    save_loss_curve(paths.logs / f"train_detector_{inputs}_steps{steps}.png",
                    [r[0] for r in rows], [r[1] for r in rows],
                    f"detector training ({inputs})")
    _require(ckpt, "checkpoint write failed")
    best_dev = min((r[3] for r in rows if np.isfinite(r[3])), default=float("nan"))
    print(f"trained detector ({inputs}) on domain {source}: {len(rows)} steps, "
          f"best dev loss {best_dev:.5f} -> {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig, protocol_name: str, inputs: str, steps: int,
             score_fusion: bool = False) -> int:
    paths = RunPaths(cfg.run.out_dir)
    ckpt = _require(paths.detector_ckpt(inputs, steps),
                    f"run `spoofdiff train-detector --inputs {inputs}` first")
    params = load_detector(ckpt)

    if protocol_name == "intra":
        src = cfg.protocol.source_domain()
        domains = [src]
    else:
        src = "a" if protocol_name == "cross_ab" else "b"
        domains = ["a", "b"]
    records: list[SampleRecord] = []
    for domain in domains:
        records.extend(_records_for(paths, domain))
    protocol = build_protocols(records, protocol_name)
    dst = protocol.test[0].domain

    def scores_for(part: list[SampleRecord], domain: str) -> np.ndarray:
        ds = _detector_dataset(paths, domain, part, inputs, steps)
        return score_dataset(params, ds, score_fusion=score_fusion)

    dev_scores = scores_for(protocol.dev, src)
    dev_set = ScoreSet(dev_scores, [r.label for r in protocol.dev])
    _, threshold = eer(dev_set)

    test_scores = scores_for(protocol.test, dst)
    test_set = ScoreSet(test_scores, [r.label for r in protocol.test])
    apcer, bpcer = apcer_bpcer(test_set, threshold)
    test_eer, _ = eer(test_set)
    report = MetricsReport(apcer=apcer, bpcer=bpcer, acer=(apcer + bpcer) / 2.0,
                           eer=test_eer, hter=hter(test_set, threshold),
                           threshold=threshold)

    out_dir = paths.eval_dir(protocol_name, inputs, steps)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    write_table(out_dir / "results.tsv", MetricsReport.FIELDS,
                [tuple(getattr(report, f) for f in MetricsReport.FIELDS)])
    sweep = sweep_table(test_set)
    write_table(out_dir / "sweep.tsv", ("threshold", "far", "frr"), sweep)
    save_threshold_curves(out_dir / "curves.png", sweep, report.eer, threshold,
                          f"{protocol_name} / {inputs} / {steps} steps")
    scores_rows = [(r.id, r.label, float(s)) for r, s in zip(protocol.test, test_scores)]
    write_table(out_dir / "scores.tsv", ("id", "label", "score"), scores_rows)
    _require(out_dir / "report.txt", "report write failed")
    print(f"eval {protocol_name}/{inputs}: eer {report.eer:.4f}, "
          f"hter {report.hter:.4f}, acer {report.acer:.4f} -> {out_dir}")
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="path to a key = value config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the root seed")
    common.add_argument("--out", type=Path, default=None,
                        help="override the output directory")

    parser = argparse.ArgumentParser(
        prog="spoofdiff",
        description="De-spoofing diffusion pipeline for face anti-spoofing.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("corpus", parents=[common],
                   help="generate both synthetic domains")

    p = sub.add_parser("train-diffusion", parents=[common],
                       help="train a denoising diffusion model")
    p.add_argument("--domain", choices=("all", "genuine"), required=True,
                   help="all: union of genuine and attacks; genuine: genuine only")

    p = sub.add_parser("despoof", parents=[common],
                       help="bridge samples to the genuine domain, dump noise maps")
    p.add_argument("--domain", choices=DOMAINS, default=None,
                   help="corpus domain to process (default: protocol source)")
    p.add_argument("--split", choices=("train", "dev", "test", "all"), default="all")
    p.add_argument("--steps", type=int, default=None,
                   help="DDIM steps for the bridge (default from config)")

    p = sub.add_parser("train-detector", parents=[common],
                       help="train one detector input configuration")
    p.add_argument("--inputs", choices=("rgb", "noise", "rgb_rgb", "rgb_noise"),
                   required=True)
    p.add_argument("--steps", type=int, default=None,
                   help="which despoof step count produced the noise maps")

    p = sub.add_parser("eval", parents=[common],
                       help="score a protocol's test split and write the report")
    p.add_argument("--protocol", choices=("intra", "cross_ab", "cross_ba"),
                   default=None, help="default from config")
    p.add_argument("--inputs", choices=("rgb", "noise", "rgb_rgb", "rgb_noise"),
                   default="rgb_noise")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--score-fusion", action="store_true",
                   help="fuse the per-branch auxiliary scores (needs aux heads)")
    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.run.out_dir = str(args.out)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_run_config(args)
        if args.command == "corpus":
            return cmd_corpus(cfg)
        if args.command == "train-diffusion":
            return cmd_train_diffusion(cfg, args.domain)
        if args.command == "despoof":
            domain = args.domain or cfg.protocol.source_domain()
            steps = args.steps or cfg.despoof.steps
            return cmd_despoof(cfg, domain, args.split, steps)
        if args.command == "train-detector":
            steps = args.steps or cfg.despoof.steps
            return cmd_train_detector(cfg, args.inputs, steps)
        if args.command == "eval":
            protocol = args.protocol or cfg.protocol.scheme
            steps = args.steps or cfg.despoof.steps
            return cmd_eval(cfg, protocol, args.inputs, steps, args.score_fusion)
        raise CommandError(f"unknown command {args.command!r}")
    except (CommandError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
