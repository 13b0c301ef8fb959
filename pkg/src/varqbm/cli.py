"""Command-line interface: ``varqbm {gibbs,train-gen,disc,count-circuits}``.

Every run reads an optional JSON config (``--config``) and writes its data
files into ``--out``. Data files are byte-deterministic for a fixed config and
seed; the wall-clock timestamp goes to ``metadata.json`` only.

Exit status: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .ansatz import AnsatzTemplate
from .counting import MODES, asymptotic_class, closed_form, count_circuits
from .qcore import PauliParseError, PauliString, PauliSum, exact_gibbs, fidelity, reduced_state
from .regularize import RegularizationPolicy, default_lambda_grid
from .varqite import EvolutionConfig, EvolutionError, prepare_gibbs

logger = logging.getLogger("varqbm")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config helpers
# --------------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return cfg


def _section(cfg: dict, key: str) -> dict:
    sec = cfg.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be an object")
    return sec


def parse_hamiltonian(spec) -> PauliSum:
    """A string like ``"1.0 ZZ - 0.2 ZI"`` or a list of ``[coeff, word]``."""
    if isinstance(spec, str):
        return PauliSum.parse(spec)
    if isinstance(spec, list) and spec:
        try:
            return PauliSum.from_terms([(float(c), str(w)) for c, w in spec])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, PauliParseError):
                raise
            raise ConfigError(f"bad Hamiltonian term list: {exc}") from None
    raise ConfigError("hamiltonian must be a string or a nonempty list of [coefficient, word]")


def evolution_config(cfg: dict, tau=None) -> EvolutionConfig:
    evo = _section(cfg, "evolution")
    reg = _section(evo, "regularization")
    policy = RegularizationPolicy(
        scheme=reg.get("scheme", "tikhonov-grid"),
        lambda_grid=tuple(reg.get("lambda_grid", default_lambda_grid())),
        epsilon=float(reg.get("epsilon", 1e-6)),
        fallback_lambda=float(reg.get("fallback_lambda", 1e-6)),
    )
    return EvolutionConfig(tau=tau, n_steps=int(evo.get("n_steps", 10)), regularization=policy)


def _depth(cfg: dict) -> int:
    depth = int(_section(cfg, "ansatz").get("depth", 2))
    if depth < 1:
        raise ConfigError("ansatz depth must be at least 1")
    return depth


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else _fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _to_jsonable(x):
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _to_jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _write_metadata(out: Path, command: str, args, cfg: dict, extra: dict | None = None) -> None:
    from . import __version__

    meta = {
        "command": command,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed": args.seed,
        "oracle_check": args.oracle_check,
        "config": cfg,
    }
    meta.update(extra or {})
    _write_json(out / "metadata.json", _to_jsonable(meta))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_gibbs(args, cfg: dict) -> int:
    h = parse_hamiltonian(cfg.get("hamiltonian", "1.0 Z"))
    kbt = float(cfg.get("kbt", 1.0))
    if not kbt > 0:
        raise ConfigError("kbt must be positive")
    ansatz = AnsatzTemplate(h.n_qubits, _depth(cfg))
    evo = evolution_config(cfg)
    rho, sol = prepare_gibbs(h, ansatz, evo, kbt)
    target = exact_gibbs(h, kbt) if args.oracle_check else None

    rows = []
    for step, omega in enumerate(sol.omega_trajectory):
        row = [step, float(np.linalg.norm(omega)), None if step == 0 else sol.residuals[step - 1]]
        if target is not None:
            sigma = reduced_state(sol.state(step), ansatz.system_qubits)
            row.append(fidelity(sigma, target))
        rows.append(row)
    header = ["step", "omega_norm", "residual"] + (["fidelity"] if target is not None else [])
    out = Path(args.out)
    _write_csv(out / "steps.csv", header, rows)
    _write_json(out / "density_matrix.json", {"real": rho.real.tolist(), "imag": rho.imag.tolist()})
    summary = {
        "n_qubits": h.n_qubits,
        "n_params": sol.circuit.n_params,
        "n_steps": evo.n_steps,
        "tau": 1.0 / (2.0 * kbt),
        "circuit_counts": sol.circuit_counts.as_dict(),
    }
    if target is not None:
        summary["final_fidelity"] = rows[-1][-1]
        summary["target"] = {"real": target.real.tolist(), "imag": target.imag.tolist()}
    _write_json(out / "summary.json", _to_jsonable(summary))
    _write_metadata(out, "gibbs", args, cfg)
    if target is not None:
        print(f"final fidelity {rows[-1][-1]:.6f}")
    return EXIT_OK


def cmd_train_gen(args, cfg: dict) -> int:
    from .qbm import (
        OptimizerConfig,
        QbmModel,
        TargetDistribution,
        derive_seeds,
        exact_distribution,
        l1_distance,
        train_generative,
    )

    template = tuple(PauliString(w) for w in cfg.get("hamiltonian_template", ["ZZ", "IZ", "ZI"]))
    n = template[0].n_qubits
    visible = tuple(cfg.get("visible", range(n)))
    target = TargetDistribution(tuple(cfg.get("target", [0.5, 0.0, 0.0, 0.5])))
    if target.n_visible != len(visible):
        raise ConfigError(f"target has {target.n_visible} visible bits, config lists {len(visible)} visible qubits")
    model = QbmModel(template, np.zeros(len(template)), visible, AnsatzTemplate(n, _depth(cfg)), float(cfg.get("kbt", 1.0)))
    o = _section(cfg, "optimizer")
    opt = OptimizerConfig(
        learning_rate=float(o.get("learning_rate", 0.1)),
        beta1=float(o.get("beta1", 0.7)),
        beta2=float(o.get("beta2", 0.99)),
        max_iterations=int(o.get("max_iterations", 50)),
        epsilon_div=float(o.get("epsilon_div", 1e-8)),
    )
    n_seeds = int(cfg.get("n_seeds", 10))
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    seeds = derive_seeds(args.seed, n_seeds)
    records = train_generative(model, target, opt, evolution_config(cfg), seeds)

    out = Path(args.out)
    ok = [r for r in records if r.error is None]
    for k, rec in enumerate(records):
        if rec.error is None:
            _write_csv(
                out / f"seed_{k:02d}.csv",
                ["iteration", "loss", "l1_distance"],
                [[i, lo, d] for i, (lo, d) in enumerate(zip(rec.losses, rec.distances))],
            )
    summary = {
        "target": list(target.probabilities),
        "seeds": seeds,
        "n_iterations": opt.max_iterations,
        "failures": [{"run": k, "seed": r.seed, "error": r.error} for k, r in enumerate(records) if r.error],
        "optimizer": {
            "scheme": "amsgrad",
            "learning_rate": opt.learning_rate,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "epsilon_div": opt.epsilon_div,
            "bias_correction": True,
        },
    }
    if ok:
        losses = np.array([r.losses for r in ok])
        dists = np.array([r.distances for r in ok])
        finals = dists[:, -1]
        best, worst = ok[int(np.argmin(finals))], ok[int(np.argmax(finals))]

        def describe(r):
            d = {"seed": r.seed, "final_l1": r.final_distance, "distribution": r.final_distribution, "theta": r.theta}
            if args.oracle_check:
                d["exact_distribution"] = exact_distribution(model, r.theta)
                d["exact_l1"] = l1_distance(d["exact_distribution"], target)
            return d

        summary.update(
            {
                "loss_mean": losses.mean(axis=0),
                "loss_std": losses.std(axis=0),
                "l1_mean": dists.mean(axis=0),
                "l1_std": dists.std(axis=0),
                "final_l1": finals,
                "median_final_l1": float(np.median(finals)),
                "best": describe(best),
                "worst": describe(worst),
            }
        )
    _write_json(out / "summary.json", _to_jsonable(summary))
    _write_metadata(out, "train-gen", args, cfg)
    if not ok:
        logger.error("all %d training runs failed", len(records))
        return EXIT_NUMERIC
    print(f"median final l1 {summary['median_final_l1']:.6f} over {len(ok)} runs")
    return EXIT_OK


def cmd_disc(args, cfg: dict) -> int:
    from .disc import (
        DegenerateFeatureError,
        DiscPreprocessor,
        conditional_loss,
        evaluate,
        fraud_probabilities,
        generate_synthetic,
        predict_labels,
        read_transactions,
        records_to_arrays,
        train_discriminative,
        MetricsReport,
    )

    data = _section(cfg, "dataset")
    if "train" in data or "test" in data:
        paths = [Path(data.get("train", "")), Path(data.get("test", ""))]
        for p in paths:
            if not p.is_file():
                raise ConfigError(f"dataset file {p} does not exist")
        train, test = (read_transactions(p) for p in paths)
    else:
        syn = _section(cfg, "synthetic")
        train, test = generate_synthetic(
            args.seed,
            n_train=int(syn.get("n_train", 500)),
            n_test=int(syn.get("n_test", 250)),
            fraud_train=float(syn.get("fraud_train", 0.15)),
            fraud_test=float(syn.get("fraud_test", 0.10)),
            label_independent=bool(syn.get("label_independent", False)),
        )
    xtr, ytr = records_to_arrays(train)
    xte, yte = records_to_arrays(test)
    try:
        pre = DiscPreprocessor(add_bias=bool(cfg.get("add_bias", False))).fit(xtr)
    except DegenerateFeatureError as exc:
        raise ConfigError(f"stage preprocess: {exc}") from None
    ztr, zte = pre.transform(xtr), pre.transform(xte)

    tr = _section(cfg, "training")
    bound = tr.get("bound", 1.0)
    try:
        res = train_discriminative(
            ztr,
            ytr,
            seed=int(tr.get("seed", args.seed)),
            maxiter=int(tr.get("maxiter", 100)),
            fd_step=float(tr.get("fd_step", 1e-6)),
            patience=int(tr.get("patience", 10)),
            bound=None if bound is None else float(bound),
        )
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        raise EvolutionError(f"stage train: {exc}") from None

    depth = _depth(cfg)
    evo = evolution_config(cfg)
    report, p_var = evaluate(res.hamiltonian, zte, yte, evo, depth)
    majority = float(max(np.mean(yte), 1 - np.mean(yte)))
    result = {
        "metrics": report.as_dict(),
        "majority_baseline": majority,
        "near_baseline": bool(report.accuracy < majority + 0.02),
        "train_loss_initial": res.initial_loss,
        "train_loss_final": res.final_loss,
        "train_iterations": res.n_iterations,
        "train_stop": res.stopped,
        "optimizer": res.optimizer,
        "n_features": int(ztr.shape[1]),
        "theta": res.hamiltonian.theta,
    }
    if args.oracle_check:
        p_ex = fraud_probabilities(res.hamiltonian, zte)
        margin = np.abs(2 * p_ex - 1) > 0.05
        result["exact_metrics"] = MetricsReport.from_predictions(yte, predict_labels(p_ex)).as_dict()
        result["label_agreement_above_margin"] = bool(np.all(predict_labels(p_ex)[margin] == predict_labels(p_var)[margin]))
        result["test_loss_exact"] = conditional_loss(res.hamiltonian, zte, yte)
        result["test_loss_varqite"] = conditional_loss(res.hamiltonian, zte, yte, "varqite", evo, depth)
    out = Path(args.out)
    _write_json(out / "metrics.json", _to_jsonable(result))
    _write_csv(
        out / "predictions.csv",
        ["index", "label", "p_fraud", "predicted"],
        [[i, int(t), float(p), int(q)] for i, (t, p, q) in enumerate(zip(yte, p_var, predict_labels(p_var)))],
    )
    _write_metadata(out, "disc", args, cfg)
    print(f"accuracy {report.accuracy:.4f} (majority baseline {majority:.4f}), F1 {report.f1:.4f}")
    return EXIT_OK


def cmd_count_circuits(args, cfg: dict) -> int:
    t = args.t if args.t is not None else cfg.get("t", 10)
    q = args.q if args.q is not None else cfg.get("q", 4)
    p = args.p if args.p is not None else cfg.get("p", 3)
    modes = [args.mode] if args.mode else cfg.get("modes", list(MODES))
    try:
        t, q, p = int(t), int(q), int(p)
    except (TypeError, ValueError):
        raise ConfigError("t, q and p must be integers") from None
    reports = []
    for mode in modes:
        counts = count_circuits(t, q, p, mode)
        reports.append(
            {
                "mode": mode,
                "t": t,
                "q": q,
                "p": p,
                "counted": counts.as_dict(),
                "closed_form": closed_form(t, q, p, mode),
                "matches_closed_form": counts.total == closed_form(t, q, p, mode),
                "asymptotic_class": asymptotic_class(mode),
            }
        )
    text = json.dumps({"reports": reports}, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        (out / "circuit_counts.json").write_text(text)
        _write_metadata(out, "count-circuits", args, cfg)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gibbs": cmd_gibbs,
    "train-gen": cmd_train_gen,
    "disc": cmd_disc,
    "count-circuits": cmd_count_circuits,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=0, help="top-level random seed")
    common.add_argument("--oracle-check", action="store_true", help="compare against exact dense oracles")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="varqbm", description="Variational quantum Boltzmann machines")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gibbs", parents=[common], help="VarQITE Gibbs-state preparation")
    sub.add_parser("train-gen", parents=[common], help="generative QBM training over several seeds")
    sub.add_parser("disc", parents=[common], help="discriminative QBM pipeline")
    cc = sub.add_parser("count-circuits", parents=[common], help="circuit-count report")
    cc.add_argument("--t", type=int, help="time steps")
    cc.add_argument("--q", type=int, help="ansatz parameters")
    cc.add_argument("--p", type=int, help="Hamiltonian parameters")
    cc.add_argument("--mode", choices=MODES)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are validation errors here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command != "count-circuits" or args.out:
            if not args.out:
                raise ConfigError("--out is required")
            Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except (EvolutionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
