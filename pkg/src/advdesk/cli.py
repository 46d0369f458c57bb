"""Command-line driver for reproducible experiments.

Every command is driven by one experiment-config JSON plus a handful of
overriding flags, writes its artifacts only under --out, and is fully
reproducible: the (config, seed) pair determines every output byte.

Exit codes: 0 success, 1 domain failure (diverged training, mismatched
stages), 2 usage or configuration error. Nothing is written on exit 2.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import attacks, defenses, detectors, natadv
from .data import Dataset, write_pgm
from .errors import AdvdeskError, ConfigError, MigrationError, ParseError
from .experiment import (
    attack_from_spec,
    build_dataset,
    build_model,
    load_config,
    read_csv,
    read_report,
    save_experiment,
    update_report,
    write_csv,
)
from .nn import Model, TrainConfig, accuracy, backward, forward, load_model, train_sgd


@dataclass
class CommandOutcome:
    exit_code: int
    artifacts_written: list[str] = field(default_factory=list)
    summary: str = ""


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _load_cfg(args) -> dict:
    if not args.config:
        raise ConfigError("--config PATH is required")
    try:
        cfg = load_config(args.config)
    except ParseError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _seed_of(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _out_dir(args) -> str:
    if not args.out:
        raise ConfigError("--out DIR is required")
    return args.out


def _eval_split(train_ds: Dataset, eval_ds: Dataset) -> Dataset:
    return eval_ds if len(eval_ds) else train_ds


def _load_target_model(args, out_dir: str) -> Model:
    path = args.model or os.path.join(out_dir, "model.json")
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path} (train first or pass --model)")
    return load_model(path)


def _train_cfg(cfg: dict, seed: int) -> TrainConfig:
    section = cfg.get("train", {})
    return TrainConfig(
        epochs=int(section.get("epochs", 200)),
        lr=float(section.get("lr", 0.5)),
        batch_size=int(section.get("batch_size", 32)),
        seed=seed,
    )


def _parse_epsilons(text: str) -> list[float]:
    """A single value '0.2' or an inclusive sweep 'start:stop:step'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"epsilon sweep must be start:stop:step, got '{text}'")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("epsilon sweep step must be > 0")
        values = []
        k = 0
        while start + k * step <= stop + 1e-12:
            values.append(round(start + k * step, 12))
            k += 1
        return values
    return [float(text)]


def _attack_specs(cfg: dict, args) -> list[dict]:
    if getattr(args, "attack", None):
        spec = {"name": args.attack}
        base = next((a for a in cfg.get("attacks", []) if a.get("name") == args.attack), None)
        if base:
            spec = dict(base)
        return [spec]
    specs = cfg.get("attacks")
    if not specs:
        raise ConfigError("config has no attacks section and no --attack was given")
    return [dict(s) for s in specs]


def _single_attack_spec(cfg: dict, owner: str) -> dict:
    spec = cfg.get(owner, {}).get("attack")
    if spec is None:
        specs = cfg.get("attacks")
        if not specs:
            raise ConfigError(f"config.{owner}.attack is missing and there is no attacks list")
        spec = specs[0]
    return dict(spec)


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    train_ds, eval_ds = build_dataset(cfg, seed)
    tc = _train_cfg(cfg, seed)
    mode = cfg.get("train", {}).get("mode", "plain")
    models = {}
    history = None
    if mode == "plain":
        model0 = build_model(cfg, train_ds.feature_dim, train_ds.class_count, seed)
        model, history = train_sgd(model0, train_ds, tc.epochs, tc.lr, tc.batch_size, tc.seed)
        models["model"] = model
    elif mode == "adversarial":
        spec = cfg.get("train", {}).get("attack")
        if spec is None:
            raise ConfigError("train.mode=adversarial needs a train.attack spec")
        name, atk = attack_from_spec(spec, seed)
        mix = float(cfg.get("train", {}).get("mix_ratio", 0.5))
        model0 = build_model(cfg, train_ds.feature_dim, train_ds.class_count, seed)
        model, history = defenses.adversarial_train(model0, train_ds, name, atk, mix, tc)
        models["model"] = model
    elif mode == "distill":
        section = cfg.get("distill", {})
        dconf = defenses.DistillConfig(
            temperature=float(section.get("temperature", 100.0)),
            teacher_epochs=int(section.get("teacher_epochs", tc.epochs)),
            student_epochs=int(section.get("student_epochs", tc.epochs)),
            hidden=tuple(cfg.get("model", {}).get("hidden", [16, 16])),
            activation=cfg.get("model", {}).get("activation", "relu"),
            lr=section.get("lr"),
            batch_size=tc.batch_size,
        )
        teacher, student = defenses.distill(train_ds, dconf, seed)
        models["model"] = student
        models["teacher"] = teacher
    else:
        raise ConfigError(f"unknown train.mode '{mode}'")
    model = models["model"]
    train_acc = accuracy(model, train_ds.features, train_ds.labels)
    metrics = {"train_accuracy": train_acc}
    if len(eval_ds):
        metrics["eval_accuracy"] = accuracy(model, eval_ds.features, eval_ds.labels)
    tables = {}
    if history is not None:
        tables["training_curve"] = (["epoch", "loss"], [[i, v] for i, v in enumerate(history)])
    written = save_experiment(cfg, out, models=models, tables=tables, metrics=metrics)
    summary = " ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items()))
    return CommandOutcome(0, written, f"train[{mode}] {summary}")


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------


def _dump_triptych(out: str, attack_name: str, sample_id, x0, x_adv, shape) -> list[str]:
    delta = np.abs(x_adv - x0)
    scale = delta.max()
    scaled = delta / scale if scale > 0 else delta
    paths = []
    for tag, img in (("orig", x0), ("adv", x_adv), ("delta", scaled)):
        path = os.path.join(out, f"{attack_name}_{sample_id}_{tag}.pgm")
        write_pgm(np.asarray(img).reshape(shape), path)
        paths.append(path)
    return paths


def cmd_attack(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    specs = _attack_specs(cfg, args)
    override_eps = _parse_epsilons(args.epsilon) if args.epsilon else None
    for spec in specs:  # fail on unknown names before touching the disk
        attack_from_spec(spec, seed)
    model = _load_target_model(args, out)
    train_ds, eval_ds = build_dataset(cfg, seed)
    ds = _eval_split(train_ds, eval_ds)
    rows = []
    metrics = {}
    dumped: list[str] = []
    os.makedirs(out, exist_ok=True)
    for spec in specs:
        name, base = attack_from_spec(spec, seed)
        epsilons = override_eps if override_eps is not None else [base.epsilon]
        for eps in epsilons:
            atk = attacks.AttackConfig(
                epsilon=eps, alpha=base.alpha, iterations=base.iterations,
                momentum_decay=base.momentum_decay, target=base.target,
                theta=base.theta, upsilon=base.upsilon, seed=seed,
            )
            successes = 0
            for i in range(len(ds)):
                result = attacks.run_attack(name, model, ds.sample(i), atk)
                rows.append(attacks.report_row(i, result, atk))
                successes += int(result.success)
                if args.dump_images and ds.image_shape and i < 8:
                    dumped += _dump_triptych(out, f"{name}_eps{eps}", i, ds.sample(i).x,
                                             result.x_adv, ds.image_shape)
            metrics[f"success_rate_{name}_eps{eps}"] = successes / len(ds)
    metrics["clean_accuracy"] = accuracy(model, ds.features, ds.labels)
    written = save_experiment(cfg, out, tables={"report": (list(attacks.REPORT_COLUMNS), rows)},
                              metrics=metrics)
    summary = f"attack rows={len(rows)} clean_accuracy={metrics['clean_accuracy']:.4f}"
    return CommandOutcome(0, written + dumped, summary)


# ---------------------------------------------------------------------------
# defend
# ---------------------------------------------------------------------------


def cmd_defend(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    pipeline_spec = cfg.get("defense", {}).get("pipeline")
    if not pipeline_spec:
        raise ConfigError("config.defense.pipeline is required for defend")
    name, atk = attack_from_spec(_single_attack_spec(cfg, "defense"), seed)
    model = _load_target_model(args, out)
    train_ds, eval_ds = build_dataset(cfg, seed)
    ds = _eval_split(train_ds, eval_ds)
    pipeline = defenses.build_pipeline(pipeline_spec, ds.image_shape)
    rows = []
    n_clean = n_adv = n_def = 0
    for i in range(len(ds)):
        sample = ds.sample(i)
        result = attacks.run_attack(name, model, sample, atk)
        defended = pipeline(result.x_adv)
        pred_def = int(np.argmax(forward(model, defended).logits))
        rows.append([i, name, atk.epsilon, sample.label, result.predicted_before,
                     result.predicted_after, pred_def])
        n_clean += int(result.predicted_before == sample.label)
        n_adv += int(result.predicted_after == sample.label)
        n_def += int(pred_def == sample.label)
    n = len(ds)
    metrics = {
        "clean_accuracy": n_clean / n,
        "adv_accuracy_pre_defense": n_adv / n,
        "adv_accuracy_post_defense": n_def / n,
    }
    header = ["sample_id", "attack", "epsilon", "true", "pred_clean", "pred_adv", "pred_defended"]
    written = save_experiment(cfg, out, tables={"defend": (header, rows)}, metrics=metrics)
    summary = (f"defend adv_accuracy {metrics['adv_accuracy_pre_defense']:.4f} -> "
               f"{metrics['adv_accuracy_post_defense']:.4f}")
    return CommandOutcome(0, written, summary)


# ---------------------------------------------------------------------------
# distill
# ---------------------------------------------------------------------------


def cmd_distill(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    train_ds, eval_ds = build_dataset(cfg, seed)
    section = cfg.get("distill", {})
    tc = _train_cfg(cfg, seed)
    dconf = defenses.DistillConfig(
        temperature=float(section.get("temperature", 100.0)),
        teacher_epochs=int(section.get("teacher_epochs", tc.epochs)),
        student_epochs=int(section.get("student_epochs", tc.epochs)),
        hidden=tuple(cfg.get("model", {}).get("hidden", [16, 16])),
        activation=cfg.get("model", {}).get("activation", "relu"),
        lr=section.get("lr"),
        batch_size=tc.batch_size,
    )
    teacher, student = defenses.distill(train_ds, dconf, seed)
    held = _eval_split(train_ds, eval_ds)
    grad_norms = sorted(
        float(np.sum(np.abs(backward(student, held.features[i], int(held.labels[i])).input_grad)))
        for i in range(len(held))
    )
    metrics = {
        "teacher_accuracy": accuracy(teacher, held.features, held.labels),
        "student_accuracy": accuracy(student, held.features, held.labels),
        "student_median_grad_l1": grad_norms[len(grad_norms) // 2],
    }
    written = save_experiment(cfg, out, models={"model": student, "teacher": teacher},
                              metrics=metrics)
    summary = (f"distill student_accuracy={metrics['student_accuracy']:.4f} "
               f"median_grad_l1={metrics['student_median_grad_l1']:.3e}")
    return CommandOutcome(0, written, summary)


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


def _detector_scorer(spec: dict, model: Model, train_ds: Dataset, attack_name: str,
                     atk: attacks.AttackConfig, seed: int):
    """Build a score(x) callable for one detector spec; higher = more adversarial."""
    name = spec["name"]
    if name == "squeeze":
        pipeline_specs = spec.get("pipeline")
        if not pipeline_specs:
            pipeline_specs = [{"op": "bit_depth", "bits": 3}]
            if train_ds.image_shape:
                pipeline_specs.append({"op": "median"})
        squeezers = [defenses.build_squeezer(s, train_ds.image_shape) for s in pipeline_specs]
        return lambda x: detectors.squeeze_score(model, x, squeezers)[0]
    if name == "kde":
        banks = detectors.kde_fit(model, train_ds)
        bandwidth = spec.get("bandwidth")
        return lambda x: -detectors.kde_score(model, banks, x, bandwidth)
    if name == "magnet":
        pool = [
            detectors.train_autoencoder(
                train_ds, spec.get("ae_hidden", [32]), int(spec.get("ae_epochs", 200)),
                float(spec.get("ae_lr", 0.1)), seed + k,
            )
            for k in range(int(spec.get("pool", 1)))
        ]
        ae = pool[0]
        t_div = float(spec.get("t_div", 10.0))
        def magnet_score(x):
            verdict = detectors.magnet_detect(ae, model, x, 0.0, 0.0, t_div)
            return max(verdict.components["reconstruction_error"], verdict.components["divergence"])
        return magnet_score
    if name == "binary":
        adv_rows = np.stack([
            attacks.run_attack(attack_name, model, train_ds.sample(i), atk).x_adv
            for i in range(len(train_ds))
        ])
        tc = TrainConfig(epochs=int(spec.get("epochs", 100)), lr=float(spec.get("lr", 0.2)),
                         batch_size=int(spec.get("batch_size", 32)), seed=seed)
        _, verdict_fn = detectors.binary_detector(
            model, train_ds.features, adv_rows, int(spec.get("layer_index", 0)),
            spec.get("hidden", [16]), tc,
        )
        return verdict_fn.score
    raise ConfigError(f"unknown detector '{name}'")


def cmd_detect(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    section = cfg.get("detect", {})
    det_specs = section.get("detectors")
    if not det_specs:
        raise ConfigError("config.detect.detectors is required for detect")
    fpr = float(section.get("fpr", 0.05))
    attack_name, atk = attack_from_spec(_single_attack_spec(cfg, "detect"), seed)
    model = _load_target_model(args, out)
    train_ds, eval_ds = build_dataset(cfg, seed)
    if len(eval_ds) < 4:
        raise ConfigError("detect needs dataset.eval_n of at least 4 for validation/test splits")
    val_ds, test_ds = eval_ds.split(len(eval_ds) // 2)
    rows = []
    metrics = {}
    tables = {}
    for spec in det_specs:
        name = spec["name"]
        scorer = _detector_scorer(spec, model, train_ds, attack_name, atk, seed)
        val_clean = [scorer(val_ds.features[i]) for i in range(len(val_ds))]
        threshold = detectors.threshold_at_fpr(val_clean, fpr)
        scored = []
        for i in range(len(test_ds)):
            x = test_ds.features[i]
            x_adv = attacks.run_attack(attack_name, model, test_ds.sample(i), atk).x_adv
            s_clean = scorer(x)
            s_adv = scorer(x_adv)
            scored.append((s_clean, False))
            scored.append((s_adv, True))
            rows.append([f"clean:{i}", name, s_clean, threshold, int(s_clean > threshold)])
            rows.append([f"adv:{i}", name, s_adv, threshold, int(s_adv > threshold)])
        metrics[f"auc_{name}"] = detectors.roc_auc(scored)
        metrics[f"clean_flag_rate_{name}"] = float(
            np.mean([s > threshold for s, is_adv in scored if not is_adv])
        )
        metrics[f"threshold_{name}"] = threshold
        tables[f"roc_{name}"] = (["fpr", "tpr"], [list(p) for p in detectors.roc_curve(scored)])
    header = ["sample_id", "detector", "score", "threshold", "verdict"]
    tables["detections"] = (header, rows)
    written = save_experiment(cfg, out, tables=tables, metrics=metrics)
    summary = "detect " + " ".join(
        f"auc_{s['name']}={metrics['auc_' + s['name']]:.3f}" for s in det_specs
    )
    return CommandOutcome(0, written, summary)


# ---------------------------------------------------------------------------
# natadv
# ---------------------------------------------------------------------------


def cmd_natadv(args) -> CommandOutcome:
    cfg = _load_cfg(args)
    seed = _seed_of(args, cfg)
    out = _out_dir(args)
    section = cfg.get("natadv")
    if not section:
        raise ConfigError("config.natadv section is required for natadv")
    train_ds, eval_ds = build_dataset(cfg, seed)
    held = _eval_split(train_ds, eval_ds)
    tc = _train_cfg(cfg, seed)
    model0 = build_model(cfg, train_ds.feature_dim, train_ds.class_count, seed)
    classifier, _ = train_sgd(model0, train_ds, tc.epochs, tc.lr, tc.batch_size, tc.seed)
    z_dim = int(section.get("z_dim", 2))
    hidden = section.get("hidden", [16, 16])
    generator, critic = natadv.wgan_train(
        train_ds, z_dim, hidden, int(section.get("n_critic", 5)),
        float(section.get("clip_c", 0.05)), int(section.get("steps", 800)),
        float(section.get("lr", 0.05)), seed, batch_size=int(section.get("batch_size", 64)),
    )
    inverter, _parts = natadv.inverter_train(
        generator, train_ds, float(section.get("inverter_lambda", 1.0)),
        int(section.get("inverter_steps", 800)), float(section.get("inverter_lr", 0.05)), seed,
    )
    n_eval = min(int(section.get("n_eval", 16)), len(held))
    stoch_rows, hybrid_rows = [], []
    stoch_results, hybrid_results = [], []
    for i in range(n_eval):
        x = held.features[i]
        sres = natadv.iterative_stochastic_search(
            generator, inverter, classifier, x, float(section.get("delta_r", 0.05)),
            int(section.get("n_per_ring", 32)), float(section.get("max_radius", 2.0)), seed + i,
        )
        hres = natadv.hybrid_shrinking_search(
            generator, inverter, classifier, x, float(section.get("r_hi", 2.0)),
            int(section.get("n_per_iter", 32)), int(section.get("iters", 8)), seed + i,
        )
        stoch_results.append(sres)
        hybrid_results.append(hres)
        for res, rows in ((sres, stoch_rows), (hres, hybrid_rows)):
            for t in res.trace:
                rows.append([i, t.iteration, t.radius, t.candidate_count, t.best_delta_z, int(t.success)])
    metrics = {
        "stochastic_success_rate": float(np.mean([r.success for r in stoch_results])),
        "hybrid_success_rate": float(np.mean([r.success for r in hybrid_results])),
        "stochastic_mean_queries": float(np.mean([r.classifier_queries for r in stoch_results])),
        "hybrid_mean_queries": float(np.mean([r.classifier_queries for r in hybrid_results])),
    }
    header = ["sample_id", "iteration", "radius", "candidate_count", "best_delta_z", "success"]
    written = save_experiment(cfg, out, models={"generator": generator, "critic": critic,
                                                "inverter": inverter},
                              tables={"natadv_stochastic": (header, stoch_rows),
                                      "natadv_hybrid": (header, hybrid_rows)},
                              metrics=metrics)
    summary = (f"natadv success stochastic={metrics['stochastic_success_rate']:.2f} "
               f"hybrid={metrics['hybrid_success_rate']:.2f} "
               f"queries {metrics['stochastic_mean_queries']:.0f}/{metrics['hybrid_mean_queries']:.0f}")
    return CommandOutcome(0, written, summary)


# ---------------------------------------------------------------------------
# eval and report
# ---------------------------------------------------------------------------


def cmd_eval(args) -> CommandOutcome:
    out = _out_dir(args)
    report_path = os.path.join(out, "report.json")
    if not os.path.exists(report_path):
        raise ConfigError(f"no report.json under {out}; run the experiment stages first")
    doc = read_report(report_path)
    metrics: dict[str, float] = {}
    attack_csv = os.path.join(out, "report.csv")
    defend_csv = os.path.join(out, "defend.csv")
    attack_ids = defend_ids = None
    if os.path.exists(attack_csv):
        header, rows = read_csv(attack_csv)
        attack_ids = sorted({r[header.index("sample_id")] for r in rows})
        success_col = header.index("success")
        if rows:
            metrics["overall_attack_success_rate"] = float(
                np.mean([float(r[success_col]) for r in rows])
            )
    if os.path.exists(defend_csv):
        header, rows = read_csv(defend_csv)
        defend_ids = sorted({r[header.index("sample_id")] for r in rows})
        true_i = header.index("true")
        clean_i = header.index("pred_clean")
        adv_i = header.index("pred_adv")
        def_i = header.index("pred_defended")
        n = len(rows)
        metrics["clean_accuracy"] = sum(r[true_i] == r[clean_i] for r in rows) / n
        metrics["adv_accuracy_pre_defense"] = sum(r[true_i] == r[adv_i] for r in rows) / n
        metrics["adv_accuracy_post_defense"] = sum(r[true_i] == r[def_i] for r in rows) / n
    if attack_ids is not None and defend_ids is not None:
        missing = sorted(set(attack_ids) ^ set(defend_ids))
        if missing:
            raise AdvdeskError(f"stage sample ids diverge; first offending id: {missing[0]}")
    detect_csv = os.path.join(out, "detections.csv")
    if os.path.exists(detect_csv):
        header, rows = read_csv(detect_csv)
        det_i = header.index("detector")
        score_i = header.index("score")
        id_i = header.index("sample_id")
        for det in sorted({r[det_i] for r in rows}):
            scored = [
                (float(r[score_i]), r[id_i].startswith("adv:"))
                for r in rows if r[det_i] == det
            ]
            metrics[f"auc_{det}"] = detectors.roc_auc(scored)
    for key, value in doc.get("metrics", {}).items():
        metrics.setdefault(key, value)
    eval_rows = [[k, v] for k, v in sorted(metrics.items())]
    eval_path = os.path.join(out, "eval.csv")
    write_csv(eval_path, ["metric", "value"], eval_rows)
    update_report(out, doc.get("experiment_id", "experiment"), metrics, {"eval": "eval.csv"})
    summary = "eval " + " ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items())[:4])
    return CommandOutcome(0, [eval_path, report_path], summary)


def cmd_report(args) -> CommandOutcome:
    out = _out_dir(args)
    path = os.path.join(out, "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"no report.json under {out}")
    doc = read_report(path)
    lines = [f"experiment: {doc.get('experiment_id')}"]
    for key, value in sorted(doc.get("metrics", {}).items()):
        lines.append(f"  {key} = {value:.6g}")
    for name, rel in sorted(doc.get("tables", {}).items()):
        lines.append(f"  table {name}: {rel}")
    text = "\n".join(lines)
    if not args.quiet:
        print(text)
    return CommandOutcome(0, [], f"report metrics={len(doc.get('metrics', {}))}")


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advdesk",
        description="Desk-scale adversarial ML workbench: train models, attack them, "
                    "defend, detect, and search latent space, all reproducibly.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p: argparse.ArgumentParser, needs_model: bool = False) -> None:
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", help="output directory (all artifacts land here)")
        p.add_argument("--dump-images", action="store_true", dest="dump_images",
                       help="write PGM triptychs (original, adversarial, |delta| rescaled) "
                            "for image datasets")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if needs_model:
            p.add_argument("--model", help="model JSON path (default: <out>/model.json)")

    p = sub.add_parser("train", help="train a plain, adversarially trained, or distilled model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run evasion attacks and write per-sample report rows")
    common(p, needs_model=True)
    p.add_argument("--attack", help="run a single attack: fgsm|bim|illc|mifgsm|jsma")
    p.add_argument("--epsilon", help="budget override: one value '0.2' or a sweep '0:0.3:0.05'")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="apply a squeeze pipeline to adversarial inputs and "
                                      "compare accuracy before/after")
    common(p, needs_model=True)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("distill", help="teacher/student distillation at high temperature")
    common(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("detect", help="fit detectors, threshold at a validation false-positive "
                                      "rate, and report ROC/AUC")
    common(p, needs_model=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("natadv", help="train a small WGAN plus inverter and run both "
                                      "latent-space adversarial searches")
    common(p)
    p.set_defaults(func=cmd_natadv)

    p = sub.add_parser("eval", help="join stage outputs under --out into a final metrics table")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print the metrics digest of an experiment directory")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else (0 if code is None else 2)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        outcome = args.func(args)
    except (ConfigError, MigrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AdvdeskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if outcome.summary and not args.quiet:
        print(outcome.summary)
    return outcome.exit_code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
