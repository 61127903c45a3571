"""Command line entry point: ``hiercoop <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from hiercoop.channel import ChannelParams
from hiercoop.cutset import cutset_report, dense_simo_upper_bound
from hiercoop.errors import InvalidArgument, InvalidRegime, NearFieldViolation, NumericError
from hiercoop.experiment import SweepConfig, VerifyConfig, make_instance, run_sweep, verify_lemmas
from hiercoop.mimo import (
    default_quantizer, mi_with_stderr, paley_zygmund_bound, pz_threshold,
    quantized_mutual_information, received_power_bounds, rho_range, sample_session_geometry,
)
from hiercoop.netmodel import DENSE, EXTENDED


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidArgument("config file must hold a JSON object")
    return data


def _emit(obj: dict, out_dir, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text + "\n")
    print(text)


def _params(ns) -> ChannelParams:
    return ChannelParams(ns.G, ns.alpha, ns.P, ns.N0)


def cmd_sweep(ns) -> int:
    data = _load_config(ns.config)
    if ns.seed is not None:
        data["seed"] = ns.seed
    if ns.out is not None:
        data["output_path"] = ns.out
    if ns.workers is not None:
        data["workers"] = ns.workers
    if ns.timing:
        data["timing"] = True
    cfg = SweepConfig.from_dict(data)
    res = run_sweep(cfg)
    for key, entry in sorted(res.summary["fits"].items()):
        fit = entry.get("fit")
        slope = f"{fit['slope']:.3f}" if fit else "n/a"
        print(f"{key}: slope {slope}, failure fraction {entry['failure_fraction']:.2f}, errors {entry['errors']}")
    print(f"wrote {res.csv_path} and {res.summary_path}")
    return res.exit_code


def cmd_verify(ns) -> int:
    data = _load_config(ns.config)
    if ns.seed is not None:
        data["seed"] = ns.seed
    if ns.trials is not None:
        data["trials"] = ns.trials
    report = verify_lemmas(VerifyConfig.from_dict(data))
    _emit(report, ns.out, "lemmas.json")
    return 0 if report["passed"] else 1


def cmd_mimo_mi(ns) -> int:
    params = _params(ns)
    P1, P2 = received_power_bounds(params)
    a, b = rho_range(params.alpha)
    t = pz_threshold(a)
    q = default_quantizer(params)
    rows = []
    for M in ns.M:
        H, r_sd, _ = sample_session_geometry(M, params, seed=ns.seed or 0)
        sigma_sq = params.P * r_sd ** params.alpha / M
        mi, se = mi_with_stderr(H, sigma_sq, params.N0, ns.trials, ns.seed or 0)
        qmi = quantized_mutual_information(H, sigma_sq, params.N0, q, ns.trials, ns.seed or 0)
        rows.append({"M": M, "mi": mi, "stderr": se,
                     "mi_per_antenna": mi / M, "quantized_mi": qmi,
                     "pz_bound": paley_zygmund_bound(a, b, params.snr, M, t)})
    _emit({"alpha": params.alpha, "P1": P1, "P2": P2, "t": t, "rows": rows}, ns.out, "mimo_mi.json")
    return 0


def cmd_cutset(ns) -> int:
    params = _params(ns)
    inst = make_instance(ns.n, EXTENDED, ns.seed or 0)
    rep = cutset_report(inst, params, ns.epsilon, ns.seed or 0, with_spectral=ns.spectral)
    _emit(rep.to_dict(), ns.out, "cutset.json")
    return 0


def cmd_dense_bound(ns) -> int:
    params = _params(ns)
    inst = make_instance(ns.n, DENSE, ns.seed or 0)
    bound = dense_simo_upper_bound(inst, params)
    _emit({"n": ns.n, "alpha": params.alpha, "seed": ns.seed or 0, "bound": bound,
           "bound_over_nlogn": bound / (ns.n * math.log2(ns.n))}, ns.out, "dense_bound.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="parallel worker processes")

    chan = argparse.ArgumentParser(add_help=False)
    chan.add_argument("--alpha", type=float, default=2.0)
    chan.add_argument("--P", type=float, default=1.0)
    chan.add_argument("--G", type=float, default=1.0)
    chan.add_argument("--N0", type=float, default=1.0)

    p = argparse.ArgumentParser(prog="hiercoop", description="Capacity scaling simulator for cooperative ad hoc networks")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", parents=[common], help="run a scaling sweep and fit exponents")
    s.add_argument("--timing", action="store_true", help="fill the runtime_ms column (breaks byte-identical reruns)")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify-lemmas", parents=[common], help="run the invariant suites")
    v.add_argument("--trials", type=int)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("mimo-mi", parents=[common, chan], help="MIMO mutual information versus M")
    m.add_argument("--M", type=int, nargs="+", default=[8, 16, 32, 64])
    m.add_argument("--trials", type=int, default=200)
    m.set_defaults(func=cmd_mimo_mi)

    c = sub.add_parser("cutset", parents=[common, chan], help="cutset bound on one extended instance")
    c.add_argument("--n", type=int, default=1024)
    c.add_argument("--epsilon", type=float, default=0.05)
    c.add_argument("--spectral", action="store_true", help="also compute the equalized spectral norm")
    c.set_defaults(func=cmd_cutset)

    d = sub.add_parser("dense-bound", parents=[common, chan], help="dense SIMO upper bound on one instance")
    d.add_argument("--n", type=int, default=1024)
    d.set_defaults(func=cmd_dense_bound)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (InvalidArgument, InvalidRegime, NearFieldViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
