"""Command-line entry point.

Verbs: ``analyze`` (scheme fit, ratios, claims ledger), ``simulate``
(scenario runs), ``chain`` (key-chain tooling), ``vectors`` (golden
vector checks), ``report`` (plot-data CSVs).  Exit codes: 0 success,
2 infeasible scheme under --strict, 3 unknown scheme, 4 bad scenario
or input file.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

from .bits import Bits
from .feasibility import (
    FitMode,
    FitReport,
    claims_ledger,
    figure8_rows,
    figure9_rows,
    fit_report,
    fit_reports,
    ratio_report,
)
from .framing import GstTime, assemble_subframe, disassemble_subframe, load_page_vectors
from .schemes import UnknownScheme, characterize
from .sim import ConfigInvalid, ScenarioConfig, run
from .tesla import (
    TAG_SIZES,
    TeslaParams,
    check_chain,
    dump_chain,
    generate_chain,
    load_chain,
)

EXIT_OK = 0
EXIT_STRICT_INFEASIBLE = 2
EXIT_UNKNOWN_SCHEME = 3
EXIT_BAD_CONFIG = 4

VECTORS_ENV = "OSNMA_LAB_VECTORS"


def _vectors_dir() -> Path:
    override = os.environ.get(VECTORS_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("osnmalab").joinpath("vectors")))


def _scenario_path(name: str) -> Path:
    direct = Path(name)
    if direct.exists():
        return direct
    bundled = Path(str(resources.files("osnmalab").joinpath("scenarios", name)))
    if bundled.exists():
        return bundled
    with_ext = bundled.with_suffix(".scenario")
    if with_ext.exists():
        return with_ext
    raise FileNotFoundError(name)


# -- analyze -----------------------------------------------------------------


def _fit_rows(reports: list[FitReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        claims = []
        if r.paper_pkr_blocks is not None:
            claims.append(f"pkr={r.paper_pkr_blocks}")
        if r.paper_kroot_blocks is not None:
            claims.append(f"kroot={r.paper_kroot_blocks}")
        agreement = "-"
        if claims:
            agreement = str(r.paper_pkr_blocks == r.pkr.blocks
                            and r.paper_kroot_blocks == r.kroot.blocks).lower()
        rows.append([
            r.scheme.name, str(r.scheme.pk_bits), str(r.scheme.sig_bits),
            str(r.pkr.blocks), str(r.kroot.blocks), r.mode_required.value,
            f"{r.pkr.airtime_seconds}/{r.kroot.airtime_seconds}",
            ";".join(claims) or "-", agreement,
        ])
    return rows


_FIT_HEADER = ["scheme", "pk_bits", "sig_bits", "pkr_blocks", "kroot_blocks",
               "mode", "airtime_s", "paper_claim", "agreement"]


def _print_table(header: list[str], rows: list[list[str]], out) -> None:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for row in rows:
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def cmd_analyze(args: argparse.Namespace, out=sys.stdout) -> int:
    if args.scheme:
        try:
            reports = [fit_report(characterize(args.scheme), args.lk)]
        except UnknownScheme as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_UNKNOWN_SCHEME
    else:
        reports = fit_reports(args.lk)
    rows = _fit_rows(reports)
    out.write("# scheme fit (root-key length %d bits)\n" % args.lk)
    _print_table(_FIT_HEADER, rows, out)

    out.write("\n# size ratios\n")
    ratio_rows = [[r.numerator, str(r.numerator_bits), r.baseline, str(r.baseline_bits),
                   f"{r.ratio:.3f}"] for r in ratio_report()]
    _print_table(["numerator", "bits", "baseline", "bits", "ratio"], ratio_rows, out)

    out.write("\n# published-claim ledger\n")
    ledger_rows = [[c.key, str(c.claimed), str(c.derived),
                    "agree" if c.agrees else "DIFFERS", c.note or "-"]
                   for c in claims_ledger()]
    _print_table(["claim", "published", "derived", "agreement", "note"], ledger_rows, out)

    if args.csv:
        lines = [",".join(_FIT_HEADER)]
        lines += [",".join(row) for row in rows]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    if args.strict and any(r.mode_required is not FitMode.NOMINAL for r in reports):
        return EXIT_STRICT_INFEASIBLE
    return EXIT_OK


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace, out=sys.stdout) -> int:
    try:
        path = _scenario_path(args.scenario)
    except FileNotFoundError:
        print(f"error: scenario {args.scenario!r} not found", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        config = ScenarioConfig.from_file(path)
        if args.seed is not None:
            config.seed = args.seed
            config.validate()
        log, summary = run(config)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "events.tsv").write_text(log.to_tsv())
        (out_dir / "summary.csv").write_text(summary.as_csv())
    out.write(summary.as_csv())
    return EXIT_OK


# -- chain -------------------------------------------------------------------


def cmd_chain(args: argparse.Namespace, out=sys.stdout) -> int:
    if args.verify:
        chain = load_chain(sys.stdin.read() if args.verify == "-" else Path(args.verify).read_text())
        if check_chain(chain):
            out.write(f"OK: {chain.params.chain_length + 1} keys consistent\n")
            return EXIT_OK
        print("error: chain dump is not self-consistent", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        params = TeslaParams(
            key_bits=args.lk, tag_bits=args.lt, chain_length=args.n,
            start=GstTime(args.wn, args.tow), hash_fn=_hash_choice(args.hash),
            chain_id=args.cid,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    seed = Bits.from_hex(args.seed_hex, args.lk) if args.seed_hex else Bits.zeros(args.lk)
    out.write(dump_chain(generate_chain(params, seed)))
    return EXIT_OK


def _hash_choice(name: str):
    from .tesla import hash_algo
    return hash_algo(name)


# -- vectors -----------------------------------------------------------------


def cmd_vectors(args: argparse.Namespace, out=sys.stdout) -> int:
    directory = Path(args.dir) if args.dir else _vectors_dir()
    path = directory / "subframes.txt"
    if not path.exists():
        print(f"error: no vector file at {path}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    subframes = load_page_vectors(path.read_text())
    failures = 0
    for i, fields in enumerate(subframes):
        payload = assemble_subframe(fields)
        if disassemble_subframe(payload) != fields:
            failures += 1
            out.write(f"subframe {i}: round-trip MISMATCH\n")
        elif args.verbose:
            out.write(f"subframe {i}: hkroot={payload.hkroot_bits.to_hex()}"
                      f" mack={payload.mack_bits.to_hex()[:24]}...\n")
    out.write(f"checked {len(subframes)} subframe vectors, {failures} failures\n")
    return EXIT_OK if not failures else EXIT_BAD_CONFIG


# -- report ------------------------------------------------------------------


def cmd_report(args: argparse.Namespace, out=sys.stdout) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig8 = ["algorithm,bits,classical_or_pqc"]
    fig8 += [f"{name},{bits},{side}" for name, bits, side in figure8_rows()]
    (out_dir / "figure8_public_keys.csv").write_text("\n".join(fig8) + "\n")
    fig9 = ["algorithm,bits,classical_or_pqc"]
    fig9 += [f"{name},{bits},{side}" for name, bits, side in figure9_rows(args.include_sphincs)]
    (out_dir / "figure9_signatures.csv").write_text("\n".join(fig9) + "\n")
    out.write(f"wrote figure8/figure9 CSVs to {out_dir}\n")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osnmalab",
        description="OSNMA message codecs, key-chain tooling, post-quantum fit "
                    "analysis, and spoofing simulation",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("analyze", help="scheme fit, size ratios, claims ledger")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--scheme", help="single scheme name (e.g. falcon512)")
    group.add_argument("--all", action="store_true", help="every characterized scheme (default)")
    p.add_argument("--lk", type=int, default=256, help="root-key length for the signature use case")
    p.add_argument("--lt", type=int, default=40, help="tag length (recorded in CSV context)")
    p.add_argument("--extended", action="store_true",
                   help="kept for symmetry; extended fit is always reported")
    p.add_argument("--csv", help="also write the fit table to this CSV file")
    p.add_argument("--strict", action="store_true",
                   help="exit 2 if any selected scheme does not fit nominal mode")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True, help="path or bundled scenario name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", help="directory for events.tsv and summary.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chain", help="generate or verify a key-chain dump")
    p.add_argument("--lk", type=int, default=128)
    p.add_argument("--lt", type=int, default=TAG_SIZES[-1])
    p.add_argument("--n", type=int, default=10, help="chain length")
    p.add_argument("--hash", default="SHA-256")
    p.add_argument("--cid", type=int, default=0)
    p.add_argument("--wn", type=int, default=0)
    p.add_argument("--tow", type=int, default=0)
    p.add_argument("--seed-hex", help="seed key as hex (zero key if omitted)")
    p.add_argument("--verify", metavar="FILE",
                   help="verify a chain dump instead ('-' reads stdin)")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("vectors", help="check bundled golden vectors")
    p.add_argument("--dir", help=f"vector directory (default: bundled, or ${VECTORS_ENV})")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_vectors)

    p = sub.add_parser("report", help="emit plot-data CSVs for the size figures")
    p.add_argument("--figures", action="store_true", help="write both figure CSVs (default)")
    p.add_argument("--include-sphincs", action="store_true",
                   help="include the SPHINCS+ signature outlier in the signature CSV")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
