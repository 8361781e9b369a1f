"""Command-line entry point: ``vrdlab <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 invalid model/config, 4 no bitflip / victim
not found, 5 analysis error, 6 integrity error, 7 seed collision, 8 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import campaign, ecc, mitigation, sampling, timing
from .errors import ConfigError, VrdError
from .profiler import MeasurementSeries

EXIT_IO = 8


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_list(conv):
    def parse(text):
        return [conv(t) for t in text.split(",") if t.strip()]
    return parse


def cmd_profile(args):
    if args.config:
        cfg = campaign.CampaignConfig.load(args.config, out=args.out, seed=args.seed, iterations=args.iterations)
    elif args.model:
        if not args.out:
            raise ConfigError("--out is required without a config file")
        cfg = campaign.CampaignConfig(
            model_file=args.model, out=args.out, iterations=args.iterations or 1000,
            rows=args.rows, seed=args.seed or 0,
            patterns=args.patterns or ["Checkered0"], t_aggon=args.taggon or ["tRAS"],
            temperatures=args.temps or ["C50"])
    else:
        raise ConfigError("profile needs --config or --model")
    path = campaign.run_campaign(cfg, jobs=args.jobs)
    print(path)


def cmd_analyze(args):
    which = args.which if args.which is not None else list(campaign.ALL_ANALYSES)
    report = campaign.analyze(args.manifest, which, args.out, mc_iterations=args.mc, seed=args.seed or 0)
    _emit({k: [str(p) for p in v] for k, v in report.items()}, None)


def cmd_report(args):
    report = campaign.analyze(args.manifest, campaign.ALL_ANALYSES, args.out,
                              mc_iterations=args.mc, seed=args.seed or 0)
    from . import plotting

    _, series = campaign.load_manifest(args.manifest)
    root = Path(args.manifest)
    root = root if root.is_dir() else root.parent
    fig_dir = Path(args.out or root / "analysis") / "figures"
    figs = plotting.render_report(series, [campaign._name(s) for s in series], fig_dir)
    listing = {k: [str(p) for p in v] for k, v in report.items()}
    listing["figures"] = [str(p) for p in figs]
    _emit(listing, None)


def cmd_sample(args):
    series = MeasurementSeries.read(args.series)
    metrics = [sampling.FIND_MIN, sampling.NORMALIZED_MIN] + [sampling.within_margin(m) for m in args.margin]
    recs = sampling.sampling_rows(series, series.row_address, args.n, metrics, args.mc, args.seed or 0)
    if args.out:
        sampling.write_sampling_csv(args.out, recs)
    else:
        sampling.write_sampling_csv(sys.stdout, recs)


def cmd_esttime(args):
    res = timing.estimate(args.hammers, args.taggon, rows=args.rows, banks=args.banks, parallel=args.parallel,
                          measurements=args.measurements, patterns=args.patterns, temps=args.temps,
                          sequential_readback=args.sequential_readback)
    _emit(res, args.out)


def _ber_of(rec: dict) -> float:
    if "ber" in rec:
        return float(rec["ber"])
    flips = rec.get("bitflips", rec.get("missed_bitflips"))
    if flips is None:
        raise ConfigError(f"batch record needs 'ber' or 'bitflips': {rec}")
    return ecc.row_bitflip_rate(int(flips), int(rec.get("row_bits", 65536)))


def cmd_ecc(args):
    codes = [args.code] if args.code else [k.value for k in ecc.EccKind]
    if args.batch:
        doc = json.loads(Path(args.batch).read_text())
        records = doc if isinstance(doc, list) else doc.get("outcomes", [doc])
        out = []
        for rec in records:
            ber = _ber_of(rec)
            entry = {k: v for k, v in rec.items() if not isinstance(v, (list, dict))}
            entry["ber"] = ber
            entry["ecc"] = {c: ecc.error_probabilities(ecc.EccGeometry.standard(c), ber) for c in codes}
            out.append(entry)
        _emit(out, args.out)
        return
    if args.ber is not None:
        ber = args.ber
    elif args.bitflips is not None:
        ber = ecc.row_bitflip_rate(args.bitflips, args.row_bits)
    else:
        raise ConfigError("ecc needs --ber, --bitflips, or --batch")
    if args.code:
        res = ecc.error_probabilities(ecc.EccGeometry.standard(args.code), ber)
    else:
        res = ecc.ecc_table(ber)
    _emit(res, args.out)


def _parse_params(items):
    params = {}
    for item in items or []:
        key, _, val = item.partition("=")
        if not _:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    return params


def cmd_mitigate(args):
    trace = mitigation.ActivationTrace.read_csv(args.trace, args.rows_per_bank)
    victims = None
    if args.model:
        from .device import load_model_file
        models = load_model_file(args.model)
        default = models.get(-1) or next(iter(models.values()))
        victims = mitigation.VictimPopulation(lambda b, r: models.get(r, default), seed=args.seed or 0)
    guardbands = args.guardband
    outs = []
    for g in guardbands:
        cfg = mitigation.MitigationConfig(args.technique, args.rdt, g, _parse_params(args.param), args.margin_rule)
        if victims is not None:
            victims = mitigation.VictimPopulation(victims._model, seed=args.seed or 0)
        outs.append(mitigation.run(trace, cfg, args.seed or 0, victims).to_dict())
    _emit(outs[0] if len(outs) == 1 else outs, args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output directory or file")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vrdlab", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("profile", parents=[common], help="run a profiling campaign")
    s.add_argument("--config")
    s.add_argument("--model")
    s.add_argument("--iterations", type=int)
    s.add_argument("--rows", type=_csv_list(int))
    s.add_argument("--patterns", type=_csv_list(str))
    s.add_argument("--taggon", type=_csv_list(str))
    s.add_argument("--temps", type=_csv_list(str))
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("analyze", parents=[common], help="statistics over a campaign")
    s.add_argument("--manifest", required=True)
    s.add_argument("--which", type=_csv_list(str), help=",".join(campaign.ALL_ANALYSES))
    s.add_argument("--mc", type=int, default=0, help="Monte-Carlo iterations for sampling metrics")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", parents=[common], help="all analyses plus figures")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mc", type=int, default=0)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sample", parents=[common], help="minimum-RDT sampling metrics for one series")
    s.add_argument("--series", required=True)
    s.add_argument("--n", type=_csv_list(int), default=list(sampling.DEFAULT_N_GRID))
    s.add_argument("--margin", type=_csv_list(float), default=[])
    s.add_argument("--mc", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("esttime", parents=[common], help="RDT test time estimate")
    s.add_argument("--hammers", type=int, required=True)
    s.add_argument("--taggon", default="tras", help="tras | trefi | 9trefi | <ns>")
    s.add_argument("--rows", type=int, default=1)
    s.add_argument("--banks", type=int, default=1)
    s.add_argument("--parallel", type=int, choices=(1, 16), default=1)
    s.add_argument("--measurements", type=int, default=1)
    s.add_argument("--patterns", type=int, default=1)
    s.add_argument("--temps", type=int, default=1)
    s.add_argument("--sequential-readback", action="store_true")
    s.set_defaults(func=cmd_esttime)

    s = sub.add_parser("ecc", parents=[common], help="ECC error probabilities")
    s.add_argument("--code", choices=[k.value for k in ecc.EccKind])
    s.add_argument("--ber", type=float)
    s.add_argument("--bitflips", type=int)
    s.add_argument("--row-bits", type=int, default=65536)
    s.add_argument("--batch", help="JSON list of records with ber or bitflips")
    s.set_defaults(func=cmd_ecc)

    s = sub.add_parser("mitigate", parents=[common], help="run a mitigation over a trace")
    s.add_argument("--technique", required=True, choices=[t.value for t in mitigation.Technique])
    s.add_argument("--rdt", type=int, required=True)
    s.add_argument("--guardband", type=_csv_list(float), default=[0.0])
    s.add_argument("--margin-rule", choices=("scale", "divide"), default="scale")
    s.add_argument("--trace", required=True)
    s.add_argument("--rows-per-bank", type=int)
    s.add_argument("--model", help="victim RDT model file for security evaluation")
    s.add_argument("--param", action="append", help="technique parameter key=value")
    s.set_defaults(func=cmd_mitigate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except VrdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
