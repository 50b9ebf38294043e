"""Configuration-driven experiment runner.

Subcommands: prepare, train, evaluate, compare, gradcheck. Exit codes:
0 success, 2 configuration error, 3 numerical divergence. Set
HULLGAN_OUT_ROOT to relocate relative output directories; pass
--no-timestamps for byte-reproducible artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, data, metrics, models, nn, plots, training
from .config import ConfigError, ExperimentConfig, load_config
from .hull import convex_hull_2d
from .training import DivergenceError


def _resolve_outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg["output_dir"])
    root = os.environ.get("HULLGAN_OUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _update_manifest(outdir: Path, cfg: ExperimentConfig, new_files: list[str],
                     no_timestamps: bool, extra: dict | None = None) -> None:
    path = outdir / "manifest.json"
    manifest = {}
    if path.exists():
        manifest = json.loads(path.read_text(encoding="utf-8"))
    manifest["config_hash"] = cfg.config_hash()
    manifest["code_version"] = __version__
    files = manifest.setdefault("files", {})
    for name in new_files:
        files[name] = _sha256(outdir / name)
    if extra:
        manifest.update(extra)
    if no_timestamps:
        manifest.pop("written_at", None)
    else:
        manifest["written_at"] = datetime.now(timezone.utc).isoformat()
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _build_dataset(cfg: ExperimentConfig):
    kind = cfg["dataset.kind"]
    name = cfg["name"]
    if kind == "blobs":
        centers = cfg["dataset.centers"]
        train = data.make_blobs(
            cfg["dataset.counts"], centers, cfg["dataset.stddev"],
            cfg["dataset.seed"], name=f"{name}:train",
        )
        test = data.make_blobs(
            [cfg["eval.test_per_class"]] * len(centers), centers,
            cfg["dataset.stddev"], cfg["eval.seed"], name=f"{name}:test",
        )
        return train, test
    if kind == "rings":
        radii = cfg["dataset.radii"]
        train = data.make_rings(
            cfg["dataset.counts"], radii, cfg["dataset.noise"],
            cfg["dataset.seed"], name=f"{name}:train",
        )
        test = data.make_rings(
            [cfg["eval.test_per_class"]] * len(radii), radii,
            cfg["dataset.noise"], cfg["eval.seed"], name=f"{name}:test",
        )
        return train, test
    images, labels = Path(cfg["dataset.images"]), Path(cfg["dataset.labels"])
    for p in (images, labels):
        if not p.exists():
            raise ConfigError(f"input file not found: {p}")
    full = data.load_idx(images, labels, cfg["dataset.downscale"], name=name)
    train, test = data.split_dataset(full, cfg["eval.split_fraction"], cfg["eval.seed"])
    if cfg["dataset.imbalance"]:
        train = data.apply_imbalance(train, cfg["dataset.imbalance"], cfg["dataset.seed"])
    return train, test


def _load_prepared(cfg: ExperimentConfig):
    outdir = _resolve_outdir(cfg)
    train_path, test_path = outdir / "train.csv", outdir / "test.csv"
    if not train_path.exists() or not test_path.exists():
        raise ConfigError(f"prepared dataset not found in {outdir}; run prepare first")
    k = sum(1 for line in (outdir / "priors.csv").read_text(encoding="utf-8").splitlines()[1:] if line)
    name = cfg["name"]
    train = data.load_csv(train_path, name=f"{name}:train", num_classes=k)
    test = data.load_csv(test_path, name=f"{name}:test", num_classes=k)
    return outdir, train, test


def cmd_prepare(cfg: ExperimentConfig, no_timestamps: bool) -> int:
    outdir = _resolve_outdir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    train, test = _build_dataset(cfg)
    data.save_csv(train, outdir / "train.csv")
    data.save_csv(test, outdir / "test.csv")
    priors = data.class_priors(train)
    counts = train.class_counts()
    with open(outdir / "priors.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("class,count,prior\n")
        for c in range(train.num_classes):
            f.write(f"{c},{counts[c]},{priors.priors[c]!r}\n")
    extra = {
        "dataset": {
            "train_rows": train.n,
            "test_rows": test.n,
            "num_classes": train.num_classes,
            "counts": counts.tolist(),
            "ascending_order": priors.ascending_order.tolist(),
        }
    }
    if "warning" in train.metadata:
        extra["dataset"]["warning"] = train.metadata["warning"]
    _update_manifest(outdir, cfg, ["train.csv", "test.csv", "priors.csv"], no_timestamps, extra)
    print(f"prepared {train.n} train / {test.n} test rows in {outdir}")
    print("class counts:", " ".join(map(str, counts)))
    return 0


def _equalize_targets(ds: data.Dataset) -> list[int]:
    return [int(ds.class_counts().max())] * ds.num_classes


def cmd_train(cfg: ExperimentConfig, no_timestamps: bool) -> int:
    outdir, train, _ = _load_prepared(cfg)
    tcfg = cfg.training_config()
    method = cfg["method"]
    if method == "hullgan":
        result = training.train_hull_gan(train, tcfg)
    elif method == "plain":
        result = training.train_plain_classifier(train, tcfg)
    elif method == "smote":
        balanced = data.smote_oversample(train, cfg["smote.k"], _equalize_targets(train), tcfg.seed)
        result = training.train_plain_classifier(balanced, tcfg)
    elif method == "oversample":
        balanced = data.random_oversample(train, _equalize_targets(train), tcfg.seed)
        result = training.train_plain_classifier(balanced, tcfg)
    elif method == "vanilla_gan":
        result = training.train_vanilla_gan(train, tcfg)
    elif method == "cgan":
        result = training.train_cgan(train, tcfg)
    else:  # pragma: no cover - config validation rejects this earlier
        raise ConfigError(f"unknown method {method!r}")

    models.save_model(result.model, outdir / "checkpoint.bin")
    result.curve.to_csv(outdir / "losses.csv", include_wall=not no_timestamps)
    plots.line_chart_svg(
        outdir / "losses.svg",
        result.curve.iterations,
        [
            ("loss_G", result.curve.loss_g),
            ("loss_D", result.curve.loss_d),
            ("loss_C", result.curve.loss_c),
        ],
        title=f"{method} training loss",
    )
    _update_manifest(
        outdir, cfg, ["checkpoint.bin", "losses.csv", "losses.svg"], no_timestamps,
        {"method": method, "iterations": len(result.curve.iterations)},
    )
    print(f"trained {method} for {len(result.curve.iterations)} iterations -> {outdir}")
    return 0


def _eval_predictions(cfg: ExperimentConfig, model, train: data.Dataset, test: data.Dataset):
    """Returns (probs, preds, raw_space_predict_fn, generated_samples)."""
    tcfg = cfg.training_config()
    if isinstance(model, models.PlainModel):
        if train.dim != model.f_net.in_dim and model.f_net.layers:
            raise ConfigError(
                f"checkpoint expects feature width {model.f_net.in_dim}, dataset has {train.dim}"
            )
        probs, preds = training.predict(model.f_net, model.c_net, test.features)
        fn = lambda pts: training.predict(model.f_net, model.c_net, pts)[1]
        return probs, preds, fn, None

    if isinstance(model, models.HullGanModel):
        if cfg["eval.mode"] == "adversarial-c":
            probs, preds = training.predict(model.f_net, model.c_net, test.features)
            fn = lambda pts: training.predict(model.f_net, model.c_net, pts)[1]
        else:
            balanced = training.rebalance_dataset(train, model, "equalize", seed=tcfg.seed)
            retrained = training.retrain_classifier(balanced, tcfg).model
            test_feats = models.extract_features(model.f_net, test.features)
            probs, preds = training.predict(retrained.f_net, retrained.c_net, test_feats)
            fn = lambda pts: training.predict(
                retrained.f_net, retrained.c_net, models.extract_features(model.f_net, pts)
            )[1]
        gen = _hullgan_samples(model, tcfg)
        return probs, preds, fn, gen

    if isinstance(model, models.CGanModel):
        balanced = training.cgan_rebalance(train, model, "equalize", seed=tcfg.seed)
        plain = training.train_plain_classifier(balanced, tcfg).model
        probs, preds = training.predict(plain.f_net, plain.c_net, test.features)
        fn = lambda pts: training.predict(plain.f_net, plain.c_net, pts)[1]
        rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 11]))
        labels = np.repeat(np.arange(model.num_classes), 100).astype(np.int64)
        z = np.hstack([
            rng.standard_normal((len(labels), model.latent_dim)),
            models.one_hot(labels, model.num_classes),
        ])
        gen = (nn.forward(model.g_net, z)[-1], labels)
        return probs, preds, fn, gen

    if isinstance(model, models.VanillaGanModel):
        plain = training.train_plain_classifier(train, tcfg).model
        probs, preds = training.predict(plain.f_net, plain.c_net, test.features)
        fn = lambda pts: training.predict(plain.f_net, plain.c_net, pts)[1]
        rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 11]))
        z = rng.standard_normal((max(100 * train.num_classes, 1000), model.latent_dim))
        samples = nn.forward(model.g_net, z)[-1]
        gen = (samples, fn(samples))
        return probs, preds, fn, gen

    raise ConfigError(f"cannot evaluate checkpoint of type {type(model).__name__}")


def _hullgan_samples(model: models.HullGanModel, tcfg: training.TrainingConfig):
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 11]))
    labels, _ = training.sample_minority_labels(
        model.priors, 100 * max(model.num_classes - 1, 1), "uniform_minority", rng
    )
    z = models.sample_latent(model.conditioner, labels, model.g.latent_dim, rng)
    samples, _, _ = models.generator_forward(model.g, z, labels)
    return samples, labels


def _vanilla_skew(outdir: Path, model: models.VanillaGanModel, train: data.Dataset, seed: int) -> None:
    centroids = np.stack([
        train.features[train.labels == c].mean(axis=0) for c in range(train.num_classes)
    ])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 12]))
    z = rng.standard_normal((10_000, model.latent_dim))
    samples = nn.forward(model.g_net, z)[-1]
    nearest = np.linalg.norm(samples[:, None, :] - centroids[None], axis=2).argmin(axis=1)
    frac = np.bincount(nearest, minlength=train.num_classes) / len(samples)
    with open(outdir / "skew.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("class,generated_fraction\n")
        for c in range(train.num_classes):
            f.write(f"{c},{frac[c]!r}\n")


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: str | None, no_timestamps: bool) -> int:
    outdir, train, test = _load_prepared(cfg)
    ckpt = Path(checkpoint) if checkpoint else outdir / "checkpoint.bin"
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}; run train first")
    model = models.load_model(ckpt, dataset=train)
    probs, preds, predict_fn, gen = _eval_predictions(cfg, model, train, test)

    report = metrics.f1_report(preds, test.labels, test.num_classes)
    unc = metrics.uncertainty_metrics(probs)
    metrics.metrics_to_csv(report, outdir / "metrics.csv")
    metrics.uncertainty_to_csv(unc, outdir / "uncertainty.csv")
    (outdir / "metrics.txt").write_text(metrics.metrics_to_text(report), encoding="utf-8")
    written = ["metrics.csv", "uncertainty.csv", "metrics.txt"]

    if isinstance(model, models.VanillaGanModel):
        _vanilla_skew(outdir, model, train, cfg.training_config().seed)
        written.append("skew.csv")

    if test.dim == 2:
        written.extend(_write_2d_plots(outdir, cfg, train, test, predict_fn, gen))

    _update_manifest(
        outdir, cfg, written, no_timestamps,
        {"eval_mode": cfg["eval.mode"], "macro_f1": report.macro_f1,
         "average_accuracy": report.average_accuracy},
    )
    print(metrics.metrics_to_text(report), end="")
    print(f"wrote {', '.join(written)} -> {outdir}")
    return 0


def _write_2d_plots(outdir, cfg, train, test, predict_fn, gen) -> list[str]:
    pts = np.vstack([train.features, test.features])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.08 * (hi - lo + 1e-9)
    lo, hi = lo - pad, hi + pad
    cols, rows = 80, 60
    gx = np.linspace(lo[0], hi[0], cols)
    gy = np.linspace(lo[1], hi[1], rows)
    grid = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
    classes = predict_fn(grid).reshape(rows, cols)
    hulls = [
        convex_hull_2d(train.features[train.labels == c]) if np.any(train.labels == c) else None
        for c in range(train.num_classes)
    ]
    plots.decision_boundary_svg(
        outdir / "boundary.svg", classes, (lo[0], hi[0], lo[1], hi[1]),
        train.features, train.labels, hulls,
        title=f"{cfg['method']} decision regions",
    )
    written = ["boundary.svg"]
    if gen is not None:
        samples, labels = gen
        if samples.shape[1] == 2:
            plots.scatter_svg(
                outdir / "generated.svg", train.features, train.labels,
                samples, labels, hulls, title=f"{cfg['method']} generated samples",
            )
            written.append("generated.svg")
    return written


def _read_metric_rows(outdir: Path) -> dict:
    text = (outdir / "metrics.csv").read_text(encoding="utf-8").splitlines()
    macro = avg = None
    for line in text:
        if line.startswith("macro,"):
            macro = float(line.split(",")[3])
        if line.startswith("average_accuracy,"):
            avg = float(line.split(",")[3])
    unc = {}
    for line in (outdir / "uncertainty.csv").read_text(encoding="utf-8").splitlines()[1:]:
        if line:
            name, _, mean = line.split(",")
            unc[name] = float(mean)
    return {"macro_f1": macro, "average_accuracy": avg, **unc}


def cmd_compare(config_paths: list[str], overrides: list[str], out: str,
                no_timestamps: bool) -> int:
    rows = []
    ref_hash = None
    for path in config_paths:
        cfg = load_config(path, overrides)
        outdir = _resolve_outdir(cfg)
        manifest_path = outdir / "manifest.json"
        if not manifest_path.exists() or not (outdir / "metrics.csv").exists():
            raise ConfigError(f"{cfg['name']}: not evaluated yet (missing outputs in {outdir})")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        test_hash = manifest.get("files", {}).get("test.csv")
        if ref_hash is None:
            ref_hash = test_hash
        elif test_hash != ref_hash:
            raise ConfigError(
                f"{cfg['name']}: evaluation split differs from the first run; "
                "compare requires a shared test set"
            )
        rows.append((cfg["name"], cfg["method"], _read_metric_rows(outdir)))

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = ["macro_f1", "average_accuracy", "least_confidence", "margin_of_confidence",
            "ratio_of_confidence", "entropy"]
    with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("name,method," + ",".join(cols) + "\n")
        for name, method, vals in rows:
            f.write(f"{name},{method}," + ",".join(repr(vals[c]) for c in cols) + "\n")
    lines = [f"{'name':<20} {'method':<12} " + " ".join(f"{c:>20}" for c in cols)]
    for name, method, vals in rows:
        lines.append(
            f"{name:<20} {method:<12} " + " ".join(f"{vals[c]:>20.4f}" for c in cols)
        )
    (out_dir / "comparison.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_gradcheck(n_seeds: int) -> int:
    results = nn.run_grad_check_suite(n_seeds)
    worst: dict[str, float] = {}
    for name, _, err in results:
        worst[name] = max(worst.get(name, 0.0), err)
    ok = True
    for name, err in worst.items():
        status = "PASS" if err < 1e-4 else "FAIL"
        ok &= err < 1e-4
        print(f"{name:<32} max_rel_err={err:.3e} {status}")
    print(f"gradcheck {'passed' if ok else 'FAILED'} over {n_seeds} seeds")
    return 0 if ok else 1


def _add_common(parser):
    parser.add_argument("config", help="experiment config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config value")
    parser.add_argument("--no-timestamps", action="store_true",
                        help="omit wall-clock fields for byte-reproducible outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hullgan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("prepare", help="materialize dataset, split and priors"))
    _add_common(sub.add_parser("train", help="train the configured method"))

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", default=None, help="checkpoint path override")

    p_cmp = sub.add_parser("compare", help="tabulate evaluated runs side by side")
    p_cmp.add_argument("configs", nargs="+", help="experiment config files")
    p_cmp.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")
    p_cmp.add_argument("--out", default="comparison", help="output directory")
    p_cmp.add_argument("--no-timestamps", action="store_true")

    p_gc = sub.add_parser("gradcheck", help="run the gradient fidelity suite")
    p_gc.add_argument("--seeds", type=int, default=20)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seeds)
        if args.command == "compare":
            return cmd_compare(args.configs, args.overrides, args.out, args.no_timestamps)
        cfg = load_config(args.config, args.overrides)
        if args.command == "prepare":
            return cmd_prepare(cfg, args.no_timestamps)
        if args.command == "train":
            return cmd_train(cfg, args.no_timestamps)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint, args.no_timestamps)
    except DivergenceError as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
