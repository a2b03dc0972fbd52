"""Command-line driver for the certification / attack / compile / simulate
pipeline.

All randomness is derived from one --seed flag: every independent work item i
uses numpy's SeedSequence([seed, i]), so campaigns and simulations are
reproducible bit-for-bit regardless of --threads.

Exit codes: 0 on success, 1 for domain failures (no attack found, fit
impossible), 2 for usage or parse errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .approx import CertifiedActivationPoly  # noqa: F401  (re-export surface)
from .attack import PerturbationSpec, attack_campaign, campaign_csv
from .circuit import (CompileError, GrammarError, compile_network,
                      parse_circuit, required_depth, select_params,
                      serialize_circuit)
from .diffbound import diff_bound
from .network import (Dataset, NetworkFormatError, forward_many, load_dataset,
                      load_network, load_polynetwork, save_polynetwork)
from .ranges import (CertificationError, CertifyConfig, build_polynet,
                     certify_network, constant_ranges, sampled_ranges,
                     save_bounds, with_diff)
from .sim import FailureValue, SimContext, run_many

USAGE_ERROR = 2
DOMAIN_ERROR = 1


def _profile(text: str) -> tuple[int, int]:
    try:
        q, s = (int(t) for t in text.split(","))
        return q, s
    except ValueError:
        raise argparse.ArgumentTypeError("profile must be 'qbits,scalebits'")


def _degrees(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("degrees must be comma-separated ints")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polycert",
        description="certified polynomial networks and overflow-robust "
                    "CKKS circuit design")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=0, help="global random seed")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for independent rows/neurons")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="build a certified polynomial network")
    c.add_argument("network")
    c.add_argument("-o", "--output", required=True, help="polynomial network file")
    c.add_argument("--report", help="bounds report file")
    c.add_argument("--degree", type=int, default=27)
    c.add_argument("--eps-q", type=float, default=1e-10)
    c.add_argument("--mode", choices=("heterogeneous", "uniform"),
                   default="heterogeneous")
    c.add_argument("--domain", choices=("zonotope", "interval"),
                   default="zonotope")
    c.add_argument("--surrogate-cache", help="directory for surrogate cache files")

    a = sub.add_parser("attack", help="overflow-attack campaign against a "
                                      "sampling-designed variant")
    a.add_argument("network")
    a.add_argument("polynet", help="certified polynomial network file")
    a.add_argument("dataset")
    a.add_argument("-o", "--output", required=True, help="campaign CSV")
    a.add_argument("--widen", type=float, default=1.0,
                   help="sampled-range widening factor")
    a.add_argument("--constant-c", type=float, default=None,
                   help="use the fixed [-c, c] range baseline instead of "
                        "sampled ranges")
    a.add_argument("--degree", type=int, default=27)
    a.add_argument("--eps-q", type=float, default=1e-10)
    a.add_argument("--linf-eps", type=float, default=0.0)
    a.add_argument("--per-feature-frac", type=float, default=0.0)
    a.add_argument("--rotate-deg", type=float, default=0.0)
    a.add_argument("--translate-frac", type=float, default=0.0)
    a.add_argument("--discretize", action="store_true")
    a.add_argument("--steps", type=int, default=40)
    a.add_argument("--restarts", type=int, default=3)

    k = sub.add_parser("compile", help="compile a polynomial network to a circuit")
    k.add_argument("polynet")
    k.add_argument("-o", "--output", required=True, help="circuit file")
    k.add_argument("--profile", type=_profile, default=(30, 40),
                   help="modulus/scale bits, e.g. 30,40 or 45,60")
    k.add_argument("--params-out", help="write the parameter summary here")

    s = sub.add_parser("simulate", help="run a circuit on fixed-point CKKS "
                                        "arithmetic semantics")
    s.add_argument("circuit")
    s.add_argument("dataset", help="dataset file holding the inputs")
    s.add_argument("-o", "--output", required=True, help="outputs file")
    s.add_argument("--profile", type=_profile, default=(30, 40))
    s.add_argument("--depth", type=int, default=None,
                   help="override chain depth (default: circuit requirement)")
    s.add_argument("--noise-bits", type=float, default=None,
                   help="enable gaussian op noise with this std (bits)")
    s.add_argument("--polynet", help="reference polynomial network for error stats")
    s.add_argument("--trace", help="write per-op execution traces here")

    r = sub.add_parser("report", help="error-vs-degree CSV for a network")
    r.add_argument("network")
    r.add_argument("dataset")
    r.add_argument("-o", "--output", required=True, help="CSV file")
    r.add_argument("--degrees", type=_degrees, default=[5, 10, 20, 40])
    r.add_argument("--eps-q", type=float, default=1e-10)
    r.add_argument("--domain", choices=("zonotope", "interval"),
                   default="zonotope")
    return ap


def cmd_certify(args) -> int:
    net = load_network(args.network, from_path=True)
    cfg = CertifyConfig(degree=args.degree, eps_q_target=args.eps_q,
                        mode=args.mode, domain=args.domain,
                        cache_dir=args.surrogate_cache, threads=args.threads)
    try:
        pnet, report = certify_network(net, cfg)
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    save_polynetwork(pnet, args.output)
    if args.report:
        save_bounds(report, args.report)
    total = sum(v.size for v in report.lo.values())
    print(f"certified {args.network}: {total} neuron ranges, "
          f"max eps {max(float(np.max(e)) for e in pnet.eps.values()):.3g}")
    return 0


def cmd_attack(args) -> int:
    net = load_network(args.network, from_path=True)
    pnet_cert = load_polynetwork(args.polynet, from_path=True)
    data = load_dataset(args.dataset, from_path=True, net=net)
    if args.constant_c is not None:
        bounds = constant_ranges(net, args.constant_c)
    else:
        bounds = sampled_ranges(net, data, args.widen)
    cfg = CertifyConfig(degree=args.degree, eps_q_target=args.eps_q,
                        threads=args.threads)
    pnet_sampled = build_polynet(net, bounds, cfg)
    spec = PerturbationSpec(
        linf_eps=args.linf_eps, rotate_deg=args.rotate_deg,
        translate_frac=args.translate_frac,
        per_feature_frac=args.per_feature_frac, discretize=args.discretize,
        steps=args.steps, restarts=args.restarts)
    result = attack_campaign(net, pnet_sampled, pnet_cert, data, spec,
                             seed=args.seed, threads=args.threads)
    with open(args.output, "w") as fh:
        fh.write(campaign_csv(result))
    print(f"attack success: sampled {result.success_rate_sampled:.1%}, "
          f"certified {result.success_rate_certified:.1%}")
    return 0 if result.success_rate_sampled > 0.0 else DOMAIN_ERROR


def cmd_compile(args) -> int:
    pnet = load_polynetwork(args.polynet, from_path=True)
    depth = required_depth(pnet)
    dims = [pnet.in_dim] + [l.out_dim for l in pnet.layers
                            if hasattr(l, "out_dim")]
    n = 1 << max(0, (max(dims) - 1)).bit_length()
    params = select_params(depth, n * n, args.profile)
    desc = compile_network(pnet, params)
    with open(args.output, "w") as fh:
        fh.write(serialize_circuit(desc) + "\n")
    summary = (f"depth {depth}\nring_log2_N {params.ring_log2_N}\n"
               f"slots {params.slot_count}\n"
               f"chain_bits {' '.join(str(b) for b in params.modulus_chain_bits)}\n"
               f"scale_bits {params.scale_bits}\n")
    if args.params_out:
        with open(args.params_out, "w") as fh:
            fh.write(summary)
    print(f"compiled: depth {depth}, N=2^{params.ring_log2_N}, "
          f"{params.slot_count} slots")
    return 0


def cmd_simulate(args) -> int:
    with open(args.circuit) as fh:
        desc = parse_circuit(fh.read().rstrip("\n"))
    data = load_dataset(args.dataset, from_path=True)
    depth = args.depth if args.depth is not None else required_depth(desc)
    params = select_params(depth, _pack_dim(desc) ** 2, args.profile)
    ctx = SimContext(params, noise_std_bits=args.noise_bits, seed=args.seed,
                     collect_trace=args.trace is not None)
    outs, recs = run_many(desc, data.rows, ctx)
    ref = None
    if args.polynet:
        pnet = load_polynetwork(args.polynet, from_path=True)
        _, ref = forward_many(pnet, data.rows)
    failures = 0
    max_err = 0.0
    with open(args.output, "w") as fh:
        fh.write("polycert-sim-outputs 1\n")
        for i, out in enumerate(outs):
            if isinstance(out, FailureValue):
                failures += 1
                fh.write(f"row {i} bottom op {out.first_failing_op} "
                         f"layer {out.layer}\n")
            else:
                fh.write(f"row {i} ok " + " ".join(repr(float(v)) for v in out)
                         + "\n")
                if ref is not None:
                    max_err = max(max_err, float(np.max(np.abs(out - ref[i]))))
        fh.write(f"levels_consumed {recs[0].levels_consumed}\n")
        fh.write(f"failures {failures} of {len(outs)}\n")
        if ref is not None:
            fh.write(f"max_abs_error {max_err!r}\n")
    if args.trace:
        with open(args.trace, "w") as fh:
            for i, rec in enumerate(recs):
                fh.write(f"# run {i}\n")
                fh.write(rec.trace_text())
    print(f"simulated {len(outs)} inputs: {failures} failures"
          + (f", max |sim - poly| {max_err:.3g}" if ref is not None else ""))
    return 0


def _pack_dim(desc) -> int:
    from .sim import _circuit_pack_dim
    return _circuit_pack_dim(desc)


def cmd_report(args) -> int:
    net = load_network(args.network, from_path=True)
    data = load_dataset(args.dataset, from_path=True, net=net)
    rows = ["degree,max_eps_total,verified_diff,sampled_diff"]
    for degree in args.degrees:
        cfg = CertifyConfig(degree=degree, eps_q_target=args.eps_q,
                            domain=args.domain, threads=args.threads)
        pnet, report = certify_network(net, cfg)
        dlo, dhi = diff_bound(net, pnet)
        _, out_f = forward_many(net, data.rows)
        _, out_p = forward_many(pnet, data.rows)
        sampled = float(np.max(np.abs(out_p - out_f))) if len(data) else 0.0
        verified = float(np.max(np.maximum(np.abs(dlo), np.abs(dhi))))
        eps_max = max(float(np.max(e)) for e in pnet.eps.values())
        rows.append(f"{degree},{eps_max!r},{verified!r},{sampled!r}")
    with open(args.output, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(args.degrees)} rows to {args.output}")
    return 0


_COMMANDS = {
    "certify": cmd_certify,
    "attack": cmd_attack,
    "compile": cmd_compile,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NetworkFormatError, GrammarError, CompileError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
