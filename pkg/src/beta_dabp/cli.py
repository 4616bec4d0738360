"""``beta`` command line: gen-data, train-source, serve, adapt, eval, check-bound.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import blackbox, data, diagnostics, division, nn, trainer

log = logging.getLogger("beta")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _widths(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="beta", description="Black-box domain adaptation by easy/hard domain division.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic source/target pair as CSV")
    g.add_argument("--kind", choices=["two-moons", "blobs"], required=True)
    g.add_argument("--out", required=True, help="output directory (source.csv, target.csv)")
    g.add_argument("--n", type=int, default=None, help="samples per domain")
    g.add_argument("--noise", type=float, default=0.1, help="two-moons noise sigma")
    g.add_argument("--rotation", type=float, default=30.0, help="two-moons target rotation in degrees")
    g.add_argument("--dim", type=int, default=4, help="blobs feature dimension")
    g.add_argument("--classes", type=int, default=3, help="blobs class count")
    g.add_argument("--shift", type=float, default=None, help="blobs target mean shift")
    g.add_argument("--seed", type=int, default=None)

    t = sub.add_parser("train-source", help="fit the source model and save a checkpoint")
    t.add_argument("--data", required=True, help="labeled source CSV")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--label-column", default="label")
    t.add_argument("--hidden", type=_widths, default=(64, 64))
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("serve", help="answer hard-label queries for a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--listen", default="127.0.0.1:9000", help="host:port, or '-' for stdin/stdout")

    a = sub.add_parser("adapt", help="run the full adaptation pipeline")
    a.add_argument("--config", required=True, help="JSON file of configuration overrides")
    a.add_argument("--target", required=True, help="target CSV; a label column, if present, is used only for diagnostics")
    a.add_argument("--api", default=None, help="host:port, checkpoint path or pipe:<checkpoint> (or set BETA_API_ADDR)")
    a.add_argument("--out", default="beta_out", help="output directory")
    a.add_argument("--label-column", default="label")
    a.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    e = sub.add_parser("eval", help="print target accuracy of a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--label-column", default="label")

    c = sub.add_parser("check-bound", help="empirical subdomain error-bound check for a checkpoint")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True, help="target CSV with a ground-truth label column")
    c.add_argument("--api", default=None)
    c.add_argument("--label-column", default="label")
    c.add_argument("--tau", type=float, default=0.8)
    c.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    c.add_argument("--out", default=None, help="write bound_report.json here")
    c.add_argument("--seed", type=int, default=0)
    return p


def _load_labeled(path, column, domain) -> data.LabeledVectorSet:
    with Path(path).open(encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    return data.load_csv(path, column if column in header else None, domain)


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "two-moons":
        kw = {"noise_sigma": args.noise, "rotation_deg": args.rotation}
        if args.n is not None:
            kw["n"] = args.n
        if args.seed is not None:
            kw["seed"] = args.seed
        src, tgt = data.two_moons_task(**kw)
    else:
        kw = {"d": args.dim, "k": args.classes}
        for name, val in (("n", args.n), ("mean_shift", args.shift), ("seed", args.seed)):
            if val is not None:
                kw[name] = val
        src, tgt = data.gaussian_shift_task(**kw)
    data.save_csv(src, out / "source.csv")
    data.save_csv(tgt, out / "target.csv")
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'} ({len(src)} + {len(tgt)} rows)")
    return 0


def cmd_train_source(args) -> int:
    src = data.load_csv(args.data, args.label_column, "source")
    model = blackbox.train_source_model(src, hidden=args.hidden, epochs=args.epochs, lr=args.lr, seed=args.seed)
    nn.checkpoint_save(model, args.out)
    acc = diagnostics.accuracy(model.predict(src.features), src.labels)
    print(f"source_acc={acc!r}")
    return 0


def cmd_serve(args) -> int:
    model = nn.checkpoint_load(args.checkpoint)
    if args.listen == "-":
        blackbox.serve_stream(model, sys.stdin.buffer, sys.stdout.buffer)
        return 0
    server = blackbox.serve(model, args.listen, background=True)
    print(f"serving {args.checkpoint} on {server.endpoint}", file=sys.stderr, flush=True)
    try:
        server._thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_adapt(args) -> int:
    config = trainer.BetaConfig.load(args.config)
    if args.seed is not None:
        config = trainer.BetaConfig.from_dict({**config.to_dict(), "seed": args.seed})
    target = _load_labeled(args.target, args.label_column, "target")
    out = Path(args.out)
    with blackbox.connect(args.api) as bb:
        result = trainer.run_beta(config, bb, target)
    diagnostics.export_metrics(result.report, out)
    nn.checkpoint_save(result.net_a, out / "net_a.ckpt")
    nn.checkpoint_save(result.net_b, out / "net_b.ckpt")
    if result.bound_estimates:
        diagnostics.write_bound_report(result.bound_estimates, out / "bound_report.json")
    s = result.report.summary
    print(f"acc_a={s['acc_a']!r} acc_b={s['acc_b']!r} queries={s['queries']} -> {out}")
    return 0


def cmd_eval(args) -> int:
    model = nn.checkpoint_load(args.model)
    ds = data.load_csv(args.data, args.label_column, "target")
    print(f"acc={diagnostics.accuracy(model.predict(ds.features), diagnostics.ground_truth(ds))!r}")
    return 0


def cmd_check_bound(args) -> int:
    model = nn.checkpoint_load(args.model)
    ds = data.load_csv(args.data, args.label_column, "target")
    truth = diagnostics.ground_truth(ds)
    try:
        alphas = [float(a) for a in args.alphas.split(",")]
    except ValueError:
        raise UsageError(f"--alphas must be comma-separated numbers, got {args.alphas!r}") from None
    with blackbox.connect(args.api) as bb:
        pseudo = bb.predict_hard(ds.features)
    split, _ = division.division_for(model, ds.features, pseudo, args.tau, "model")
    estimates = diagnostics.check_bound(
        model, ds.features, split.easy, split.hard, split.easy_labels, split.hard_soft, truth, alphas, seed=args.seed
    )
    print("alpha lhs rhs holds corollary")
    for e in estimates:
        print(f"{e.alpha!r} {e.lhs!r} {e.rhs!r} {e.holds} {e.corollary_holds}")
    if args.out:
        diagnostics.write_bound_report(estimates, args.out)
    return 0 if all(e.holds and e.corollary_holds for e in estimates) else 2


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-source": cmd_train_source,
    "serve": cmd_serve,
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "check-bound": cmd_check_bound,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, json.JSONDecodeError) as e:
        print(f"beta {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
