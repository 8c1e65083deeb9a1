"""Command-line front end: ``synth``, ``run`` and ``report``.

Each case lives in ``<out>/<case name>/``. ``synth`` writes the image pair
there, ``run`` samples the posterior and writes CSV/JSON/PGM results next
to it, and ``report`` collects every case under ``<out>``.

Exit codes: 0 ok, 2 bad input, 3 chain did not converge, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bench, imageio
from .exceptions import PGMParseError
from .grid import FlowField, GridSpec, ImageField, assemble_system
from .sampler import ChainConfig, HyperPriors, effective_alpha_trace, run_chain
from .solver import CGConfig, TikhonovConfig, tikhonov_solve
from .uq import DEFAULT_Q, mean_flow, uq_field

log = logging.getLogger("bayesopticflow")

EXIT_OK, EXIT_BAD_INPUT, EXIT_NO_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

SYNTHETIC = "synthetic"


class BadInput(Exception):
    pass


@dataclass
class RunManifest:
    name: str = ""
    input: str = SYNTHETIC
    flow_id: int = 1
    noise: str = "gaussian"
    sigma: float | None = None
    grid: tuple[int, int] | None = None
    chain: ChainConfig = field(default_factory=ChainConfig)
    priors: HyperPriors = field(default_factory=HyperPriors)
    q: float = DEFAULT_Q
    out: str = "out"
    stride: int = 3
    cg_tol: float = 1e-6
    cg_max_iter: int = 500

    def __post_init__(self):
        if self.flow_id not in bench.FLOW_IDS:
            raise BadInput(f"flow_id must be one of {bench.FLOW_IDS}, got {self.flow_id}")
        synthetic = self.input == SYNTHETIC
        if self.sigma is None:
            self.sigma = 0.02 if synthetic else 0.05
        if self.grid is None:
            self.grid = (30, 30) if synthetic else (60, 60)
        self.grid = tuple(int(v) for v in self.grid)
        if not self.name:
            stem = SYNTHETIC if synthetic else Path(self.input).stem
            self.name = f"{stem}_flow{self.flow_id}"
        if not 0.0 < self.q < 1.0:
            raise BadInput(f"q must lie in (0, 1), got {self.q}")
        if self.stride < 1:
            raise BadInput(f"stride must be >= 1, got {self.stride}")
        try:
            bench.NoiseSpec(self.noise, self.sigma)
            GridSpec(*self.grid)
            self.cg
        except ValueError as exc:
            raise BadInput(str(exc)) from exc

    @property
    def noise_spec(self) -> bench.NoiseSpec:
        return bench.NoiseSpec(self.noise, self.sigma)

    @property
    def cg(self) -> CGConfig:
        return CGConfig(tol=self.cg_tol, max_iter=self.cg_max_iter)

    @property
    def case_dir(self) -> Path:
        return Path(self.out) / self.name

    def to_json(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        # the file lives inside the output tree, so its location is implied
        del d["out"]
        return d

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "RunManifest":
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"chain_overrides"}
        if unknown:
            raise BadInput(f"unknown manifest keys: {sorted(unknown)}")
        chain_d = dict(d.pop("chain", None) or {})
        chain_d.update(d.pop("chain_overrides", {}))
        try:
            chain = ChainConfig(**chain_d)
            priors = HyperPriors(**(d.pop("priors", None) or {}))
        except (TypeError, ValueError) as exc:
            raise BadInput(f"invalid chain or priors: {exc}") from exc
        return cls(chain=chain, priors=priors, **d)


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 30x30, got {text!r}")
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"grid must look like 30x30, got {text!r}")
    return vals[0], vals[1]


def load_manifests(args) -> list[RunManifest]:
    chain_over = {k: v for k, v in (("iterations", args.iterations), ("burn_in", args.burn_in),
                                    ("seed", args.seed)) if v is not None}
    over = dict(flow_id=args.flow_id, noise=args.noise, sigma=args.sigma, grid=args.grid,
                q=args.q, out=args.out, stride=args.stride, input=args.input, name=args.name,
                cg_max_iter=args.cg_max_iter)
    if args.manifest:
        text = Path(args.manifest).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadInput(f"manifest is not valid JSON: {exc}") from exc
        cases = raw.get("cases", [raw]) if isinstance(raw, dict) else raw
        defaults = raw.get("defaults", {}) if isinstance(raw, dict) else {}
    else:
        cases, defaults = [{}], {}
    out = []
    for case in cases:
        merged = {**defaults, **case}
        if "chain" in defaults and "chain" in case:
            merged["chain"] = {**defaults["chain"], **case["chain"]}
        if chain_over:
            merged["chain_overrides"] = chain_over
        if len(cases) > 1:
            over_case = {**over, "name": None}
        else:
            over_case = over
        out.append(RunManifest.from_dict(merged, **over_case))
    return out


# -- file helpers ---------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, (int, np.integer, str)) else _fmt(r) for r in row])


def write_flow_csv(path: Path, flow: FlowField):
    grid = flow.grid
    x, y = grid.coords()
    rows = ((i, j, x[i], y[j], flow.u[i, j], flow.v[i, j])
            for j in range(grid.n_y) for i in range(grid.n_x))
    write_csv(path, ["i", "j", "x", "y", "u", "v"], rows)


def read_flow_csv(path: Path, grid: GridSpec) -> FlowField:
    u = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i, j = int(row["i"]), int(row["j"])
            u[i, j], v[i, j] = float(row["u"]), float(row["v"])
    return FlowField(grid, u, v)


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands -------------------------------------------------------------

def first_image(man: RunManifest) -> ImageField:
    grid = GridSpec(*man.grid)
    if man.input == SYNTHETIC:
        return bench.make_first_image(grid)
    img = imageio.load_image(man.input)
    if img.grid != grid:
        img = imageio.resize_bilinear(img, *man.grid)
    return img


def build_case(man: RunManifest) -> bench.BenchCase:
    rng = np.random.default_rng(np.random.SeedSequence(man.chain.seed, spawn_key=(1,)))
    return bench.make_case(first_image(man), man.flow_id, man.noise_spec, rng, name=man.name)


def cmd_synth(man: RunManifest) -> int:
    case = build_case(man)
    d = man.case_dir
    d.mkdir(parents=True, exist_ok=True)
    imageio.save_image(d / "F.pgm", case.F)
    imageio.save_image(d / "G.pgm", case.G)
    imageio.save_image(d / "Gbar.pgm", case.Gbar)
    write_flow_csv(d / "truth_flow.csv", case.truth)
    write_json(d / "case.json", man.to_json())
    log.info("wrote synthetic case %s", d)
    return EXIT_OK


def cmd_run(man: RunManifest) -> int:
    d = man.case_dir
    F = imageio.load_image(d / "F.pgm")
    G = imageio.load_image(d / "G.pgm")
    Gbar = imageio.load_image(d / "Gbar.pgm") if (d / "Gbar.pgm").exists() else None
    truth = read_flow_csv(d / "truth_flow.csv", F.grid) if (d / "truth_flow.csv").exists() else None
    if G.grid != F.grid:
        raise BadInput(f"F is {F.grid.shape} but G is {G.grid.shape}")

    sys_ = assemble_system(F, G)
    cfg = man.chain
    result = run_chain(sys_, man.priors, cfg, man.cg)

    alpha = effective_alpha_trace(result)
    write_csv(d / "trace.csv", ["k", "lambda", "delta", "delta_over_lambda"],
              ((k + 1, result.lambda_trace[k], result.delta_trace[k], alpha[k])
               for k in range(cfg.iterations)))

    metrics = {"converged": result.converged, "restart_count": result.restart_count,
               "attempts": result.attempts, "seed": cfg.seed, "q": man.q,
               "iterations": cfg.iterations, "burn_in": cfg.burn_in, "kept": result.kept}
    if result.kept >= 2:
        flow = mean_flow(result, F.grid)
        write_flow_csv(d / "mean_flow.csv", flow)
        uq = uq_field(result, F.grid, man.q)
        rows = ((i, j, e.center[0], e.center[1], e.semi_axes[0], e.semi_axes[1], e.orientation)
                for i, j, e in uq.ellipses(man.stride))
        write_csv(d / "ellipses.csv", ["i", "j", "mu_u", "mu_v", "a", "b", "theta"], rows)

        alpha_mean = float(alpha[cfg.burn_in:].mean())
        tik = tikhonov_solve(sys_, TikhonovConfig(alpha_mean), man.cg)
        tik_flow = FlowField.from_vector(tik.x, F.grid)
        write_flow_csv(d / "tikhonov_flow.csv", tik_flow)

        ghat = bench.reconstruct_second_image(F, flow)
        imageio.save_image(d / "Ghat.pgm", ghat)
        metrics.update(alpha_mean=alpha_mean, tikhonov_converged=tik.converged,
                       mean_area=float(uq.areas().mean()), rmse_g=bench.rmse(ghat, G))
        metrics["rmse_gbar"] = bench.rmse(ghat, Gbar) if Gbar is not None else None
        metrics["aee"] = bench.endpoint_error(flow, truth) if truth is not None else None
        metrics["aee_tikhonov"] = bench.endpoint_error(tik_flow, truth) if truth is not None else None
    write_json(d / "metrics.json", metrics)
    if not result.converged:
        log.error("case %s: chain did not converge (%s)", man.name, result.failure)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_report(out: Path) -> int:
    out = Path(out)
    if not out.is_dir():
        raise FileNotFoundError(f"report directory {out} does not exist")
    cases = sorted(p.parent for p in out.glob("*/metrics.json"))
    summary = out / "summary.txt"
    if not cases:
        summary.write_text(f"no run outputs found under {out}\n")
        print(summary.read_text(), end="")
        return EXIT_OK

    missing = [str(c / name) for c in cases for name in ("F.pgm", "G.pgm", "Ghat.pgm")
               if not (c / name).exists()]
    if missing:
        raise FileNotFoundError("missing run outputs: " + ", ".join(missing))

    lines = [f"{'case':<32} {'aee':>10} {'rmse_g':>10} {'rmse_gbar':>10} {'conv':>5} {'restarts':>8}"]
    closer = 0
    with_gbar = 0
    for c in cases:
        met = json.loads((c / "metrics.json").read_text())
        ghat = imageio.load_image(c / "Ghat.pgm")
        g = imageio.load_image(c / "G.pgm")
        gbar = imageio.load_image(c / "Gbar.pgm") if (c / "Gbar.pgm").exists() else None
        gbar_vec = gbar.vec if gbar is not None else np.full(g.grid.size, np.nan)
        write_csv(c / "scatter.csv", ["pixel", "ghat", "g", "gbar"],
                  ((k, a, b, e) for k, (a, b, e) in enumerate(zip(ghat.vec, g.vec, gbar_vec))))

        def num(key):
            v = met.get(key)
            return "n/a" if v is None else f"{v:.4g}"

        if met.get("rmse_gbar") is not None and met.get("rmse_g") is not None:
            with_gbar += 1
            closer += met["rmse_gbar"] < met["rmse_g"]
        lines.append(f"{c.name:<32} {num('aee'):>10} {num('rmse_g'):>10} {num('rmse_gbar'):>10} "
                     f"{str(met.get('converged')):>5} {met.get('restart_count', 0):>8}")
    lines.append("")
    lines.append(f"cases: {len(cases)}")
    if with_gbar:
        lines.append(f"reconstruction closer to the noiseless image in {closer} of {with_gbar} cases")
    summary.write_text("\n".join(lines) + "\n")
    print(summary.read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="JSON manifest with one case or a 'cases' list")
    common.add_argument("--out", help="output root directory (default: out)")
    common.add_argument("--seed", type=int, help="seed for noise and chain")
    common.add_argument("--iterations", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--q", type=float, help="confidence level of the ellipses")
    common.add_argument("--stride", type=int, help="pixel stride for ellipses.csv")
    common.add_argument("--noise", choices=bench.NOISE_KINDS)
    common.add_argument("--sigma", type=float)
    common.add_argument("--flow-id", dest="flow_id", type=int)
    common.add_argument("--grid", type=_parse_grid, help="e.g. 30x30")
    common.add_argument("--input", help="first image (PGM) or 'synthetic'")
    common.add_argument("--name", help="case name (directory under --out)")
    common.add_argument("--cg-max-iter", dest="cg_max_iter", type=int,
                        help="CG iteration cap per solve (default 500)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bayesopticflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate image pairs and the true flow")
    sub.add_parser("run", parents=[common], help="sample the posterior for existing cases")
    sub.add_parser("report", parents=[common], help="summarize all cases under --out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(Path(args.out or "out"))
        manifests = load_manifests(args)
        command = cmd_synth if args.command == "synth" else cmd_run
        status = EXIT_OK
        for man in manifests:
            rc = command(man)
            status = max(status, rc)
        return status
    except (BadInput, PGMParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
