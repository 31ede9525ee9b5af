"""Command-line front end: ``fpemu <command> ...``.

Exit status is 0 on success, 2 for input or schema errors, 3 for domain
errors and 4 for numerical failures. Each run writes a manifest holding the
command line, every resolved option and per-phase timings; ``fpemu rerun``
replays it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, gp_scalar, gp_vector, force_gdml, synth, vmc
from .descriptors import MolecularConfiguration, coulomb_matrix, inverse_distance_descriptor
from .errors import FpemuError, SchemaError
from .kernels import KernelSpec
from .serialization import (
    VERSION,
    as_inputs,
    dumps,
    load_density_matrix,
    read_json,
    records,
    write_density_binary,
    write_json,
)

log = logging.getLogger("fpemu")

INTERPOLATION_TOL = 1e-8


class _Timer:
    def __init__(self):
        self.phases = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0


def _fmt(v) -> str:
    return repr(float(v))


def _kernel_from_args(args) -> KernelSpec:
    kw = {"family": args.kernel, "gamma": args.gamma if args.gamma else 1.0, "alpha": args.alpha}
    if args.kernel == "product":
        kw["base"] = args.base
    return KernelSpec(**kw)


def _add_kernel_args(p, gamma=1.0):
    p.add_argument("--kernel", choices=("matern_5_2", "power_exponential", "product"), default="matern_5_2")
    p.add_argument("--gamma", type=float, default=gamma, help="range (starting value where fitted)")
    p.add_argument("--alpha", type=float, default=2.0, help="power-exponential roughness in (0, 2]")
    p.add_argument("--base", choices=("power_exponential", "matern_5_2"), default="power_exponential",
                   help="one-dimensional factor of the product kernel")


def _emit_csv(header, rows, out=None):
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


# -- data loading -------------------------------------------------------------


def _descriptor_fn(name):
    return {"inverse_distance": inverse_distance_descriptor, "coulomb": coulomb_matrix}[name]


def _load_scalar(args):
    if getattr(args, "synth_sines", None):
        X, y = synth.two_sine_dataset(args.synth_sines)
        return gp_scalar.TrainingSet(X, y)
    if not args.data:
        raise SchemaError("either --data or --synth-sines is required")
    obj = read_json(args.data, "scalar_dataset")
    if isinstance(obj, list) or "records" in obj:
        desc = _descriptor_fn(args.descriptor)
        recs = [r for r in records(obj) if "energy" in r]
        if not recs:
            raise SchemaError(f"{args.data}: no records carry an energy")
        X = np.array([desc(MolecularConfiguration.from_dict(r["config"])).values for r in recs])
        y = np.array([r["energy"] for r in recs])
        return gp_scalar.TrainingSet(X, y)
    try:
        return gp_scalar.TrainingSet(as_inputs(obj["X"]), obj["y"])
    except ValueError as exc:
        raise SchemaError(f"{args.data}: {exc}") from exc


def _load_force(path):
    obj = read_json(path, "force_dataset")
    recs = records(obj)
    configs = tuple(MolecularConfiguration.from_dict(r["config"]) for r in recs)
    try:
        forces = np.array([np.asarray(r["forces"], dtype=float).reshape(-1) for r in recs])
    except ValueError as exc:
        raise SchemaError(f"{path}: ragged force arrays") from exc
    return force_gdml.ForceTrainingSet(configs, forces)


def _load_density(path):
    obj = read_json(path, "density_dataset")
    try:
        P = load_density_matrix(obj, Path(path).parent)
        return gp_vector.DensityDataset(as_inputs(obj["inputs"]), P, obj.get("grid")), obj.get("loadings")
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _load_inputs(path, p):
    obj = read_json(path, "inputs")
    X = as_inputs(obj["X"])
    if X.size == 0:
        return np.zeros((0, p))
    if X.shape[1] != p and X.shape == (p, 1):
        X = X.T  # a single input given as a flat list
    return X


def _load_model(path):
    obj = read_json(path, "model", check_version=False)
    kind = obj.get("kind", "gp")
    loaders = {
        "gp": gp_scalar.TrainedGP.from_dict,
        "gdml": force_gdml.GDMLModel.from_dict,
        "ppgp": gp_vector.PPGPModel.from_dict,
        "latent": gp_vector.LatentFactorModel.from_dict,
        "ms": _ms_from_dict,
    }
    if kind not in loaders:
        raise SchemaError(f"{path}: unknown model kind {kind!r}")
    return kind, loaders[kind](obj)


def _ms_to_dict(models):
    return {"version": VERSION, "kind": "ms", "models": [m.to_dict() for m in models]}


def _ms_from_dict(d):
    gp_vector._check_version(d, "ms")
    return [gp_scalar.TrainedGP.from_dict(m) for m in d["models"]]


# -- commands -------------------------------------------------------------------


def cmd_synth(args, timer):
    with timer.phase("generate"):
        if args.dataset == "sines":
            X, y = synth.two_sine_dataset(args.n)
            obj = {"version": VERSION, "X": X.tolist(), "y": y.tolist()}
        elif args.dataset == "diatomic":
            configs, E, F = synth.diatomic_dataset(args.n, seed=args.seed)
            obj = {"version": VERSION, "records": [
                {"config": c.to_dict(), "energy": float(e), "forces": f.reshape(-1, 3).tolist()}
                for c, e, f in zip(configs, E, F)]}
        else:
            X, P, A, grid = synth.low_rank_density(args.k, args.n, args.d, args.noise_var, seed=args.seed)
            obj = {"version": VERSION, "grid": grid.tolist(), "inputs": X.tolist(), "loadings": A.tolist()}
            if args.binary:
                bin_path = Path(args.out).with_name(Path(args.out).name + ".P.bin")
                write_density_binary(P, bin_path)
                obj["P"] = {"binary": bin_path.name}
            else:
                obj["P"] = P.tolist()
    with timer.phase("write"):
        write_json(obj, args.out)
    return 0


def _interpolation_check(model, data) -> tuple:
    mean, var = gp_scalar.predict(model, data.X)
    err = float(np.max(np.abs(mean - data.y)))
    vmax = float(np.max(var))
    ok = err <= INTERPOLATION_TOL * max(1.0, float(np.max(np.abs(data.y)))) and vmax <= INTERPOLATION_TOL * max(model.sigma2, 1e-300)
    return ok, err, vmax


def cmd_emulate_fit(args, timer):
    with timer.phase("load"):
        data = _load_scalar(args)
    with timer.phase("fit"):
        model = gp_scalar.fit(gp_scalar.MeanBasis.from_name(args.basis), data, _kernel_from_args(args),
                              args.noise, seed=args.seed)
    with timer.phase("write"):
        write_json(model.to_dict(), args.out)
    print(f"gamma={model.kernel.gamma!r} eta={model.kernel.eta!r} sigma2={model.sigma2!r}")
    if args.noise == "interpolating":
        ok, err, vmax = _interpolation_check(model, data)
        print(f"interpolation check: {'PASS' if ok else 'FAIL'} (max |error| {err:.3e}, max variance {vmax:.3e})")
    return 0


def cmd_predict(args, timer):
    with timer.phase("load"):
        kind, model = _load_model(args.model)
        if kind != "gp":
            raise SchemaError(f"{args.model}: predict expects a scalar GP model, got {kind!r}")
        p = model.X.shape[1]
        X = _load_inputs(args.inputs, p)
    with timer.phase("predict"):
        header = [f"x{j}" for j in range(p)] + ["mean", "variance", "lower", "upper"]
        rows = []
        if X.shape[0]:
            mean, var = gp_scalar.predict(model, X)
            lo, hi = gp_scalar.predictive_interval(model, X, args.level)
            for x, m, v, a, b in zip(X, mean, var, lo, hi):
                rows.append([_fmt(t) for t in x] + [_fmt(m), _fmt(v), _fmt(a), _fmt(b)])
    _emit_csv(header, rows)
    return 0


def cmd_force_fit(args, timer):
    with timer.phase("load"):
        data = _load_force(args.data)
        if args.symmetrize:
            data = force_gdml.symmetrize(data)
    with timer.phase("fit"):
        kernel = _kernel_from_args(args)
        if args.gamma is None or args.gamma <= 0:
            X, _ = force_gdml._descriptors(data.configs)
            d = np.sqrt(np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1))
            kernel = kernel.with_params(gamma=float(d.max()) if d.max() > 0 else 1.0)
        model = force_gdml.fit_forces(data, kernel, args.lambda_c)
    with timer.phase("write"):
        write_json(model.to_dict(), args.out)
    print(f"gamma={model.kernel.gamma!r} lambda_c={model.lam_c!r}")
    return 0


def cmd_force_predict(args, timer):
    with timer.phase("load"):
        kind, model = _load_model(args.model)
        if kind != "gdml":
            raise SchemaError(f"{args.model}: expected a force model, got {kind!r}")
        obj = read_json(args.configs, "configs")
        configs = [MolecularConfiguration.from_dict(c) for c in obj["configs"]]
    with timer.phase("predict"):
        rows = []
        for i, c in enumerate(configs):
            mean, cov = force_gdml.predict_force(model, c)
            F = mean.reshape(-1, 3)
            V = np.diag(cov).reshape(-1, 3)
            for a in range(c.n_atoms):
                rows.append([str(i), str(a)] + [_fmt(v) for v in F[a]] + [_fmt(v) for v in V[a]])
    _emit_csv(["config", "atom", "Fx", "Fy", "Fz", "var_x", "var_y", "var_z"], rows)
    return 0


def cmd_density_fit(args, timer):
    with timer.phase("load"):
        ds, true_A = _load_density(args.data)
        kernel = _kernel_from_args(args)
    with timer.phase("fit"):
        if args.action == "fit-pp":
            model = gp_vector.fit_pp(ds, gp_scalar.MeanBasis.from_name(args.basis), kernel, args.noise, seed=args.seed)
            out = model.to_dict()
            print(f"gamma={model.kernel.gamma!r} eta={model.kernel.eta!r}")
        elif args.action == "fit-ms":
            models = gp_vector.fit_ms(ds, gp_scalar.MeanBasis.from_name(args.basis), kernel, args.noise,
                                      seed=args.seed, threads=args.threads)
            out = _ms_to_dict(models)
        else:
            fixed = gp_vector.dct_basis(ds.k, args.d) if args.basis == "dct" else None
            model = gp_vector.fit_factor_model(ds, kernel, args.d, loadings=fixed, seed=args.seed)
            out = model.to_dict()
            print(f"noise_var={model.noise_var!r} gammas={[k.gamma for k in model.kernels]!r}")
            if true_A is not None:
                angle = gp_vector.max_principal_angle(model.A, np.asarray(true_A, dtype=float))
                print(f"max principal angle to reference loadings: {angle:.6e} rad")
    with timer.phase("write"):
        write_json(out, args.out)
    return 0


def cmd_density_predict(args, timer):
    with timer.phase("load"):
        kind, model = _load_model(args.model)
        if kind not in ("ppgp", "latent", "ms"):
            raise SchemaError(f"{args.model}: expected a density model, got {kind!r}")
        p = (model[0].X if kind == "ms" else model.X).shape[1]
        X = _load_inputs(args.inputs, p)
    with timer.phase("predict"):
        rows = []
        for i, x in enumerate(X):
            if kind == "ppgp":
                mean, var = gp_vector.predict_pp(model, x)
            elif kind == "latent":
                mean, cov = gp_vector.predict_latent(model, x)
                var = np.diag(cov)
            else:
                mv = [gp_scalar.predict(m, x) for m in model]
                mean, var = np.array([a for a, _ in mv]), np.array([b for _, b in mv])
            rows.extend([str(i), str(j), _fmt(m), _fmt(v)] for j, (m, v) in enumerate(zip(mean, var)))
    _emit_csv(["input", "grid", "mean", "variance"], rows)
    return 0


def cmd_vmc(args, timer):
    trial = vmc.HydrogenTrial(args.alpha)
    delta = args.delta
    if args.tune:
        with timer.phase("tune"):
            delta = vmc.tune_step(trial, target=args.target, seed=args.seed)
    with timer.phase("sample"):
        cfg = vmc.VMCConfig(delta=delta, samples=args.samples, burn_in=args.burn_in,
                            thinning=args.thinning, seed=args.seed)
        res = vmc.run_vmc(trial, cfg)
    out = {**res.to_dict(), "seed": args.seed, "alpha": args.alpha, "delta": delta, "version": VERSION}
    text = dumps(out)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_rerun(args, timer):
    man = read_json(args.manifest, "manifest")
    argv = list(man["argv"])
    if argv and argv[0] == "rerun":
        raise SchemaError("a rerun manifest cannot replay itself")
    return main(argv)


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpemu", description="Emulators for first-principles simulation data.")
    parser.add_argument("--version", action="version", version=f"fpemu {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads; FPEMU_THREADS overrides")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a toy dataset")
    p.add_argument("dataset", choices=("sines", "diatomic", "density"))
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--noise-var", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary", action="store_true", help="store P as raw float64 with a sidecar")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("emulate", help="scalar GP emulator")
    esub = p.add_subparsers(dest="action", required=True)
    f = esub.add_parser("fit")
    f.add_argument("--data")
    f.add_argument("--synth-sines", type=int, metavar="N", help="fit the built-in test function on N points")
    f.add_argument("--descriptor", choices=("inverse_distance", "coulomb"), default="inverse_distance")
    _add_kernel_args(f)
    f.add_argument("--basis", choices=("constant", "zero"), default="constant")
    f.add_argument("--noise", choices=("interpolating", "noisy"), default="interpolating")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_emulate_fit)
    f = esub.add_parser("predict")
    _add_predict_args(f)

    p = sub.add_parser("predict", help="predict with a scalar GP model")
    _add_predict_args(p)

    p = sub.add_parser("force", help="gradient-domain force field")
    fsub = p.add_subparsers(dest="action", required=True)
    f = fsub.add_parser("fit")
    f.add_argument("--data", required=True)
    _add_kernel_args(f, gamma=None)
    f.add_argument("--lambda-c", type=float, default=None)
    f.add_argument("--symmetrize", action="store_true", help="align atom labels to the first configuration")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_force_fit)
    f = fsub.add_parser("predict")
    f.add_argument("--model", required=True)
    f.add_argument("--configs", required=True)
    f.set_defaults(func=cmd_force_predict)

    p = sub.add_parser("density", help="vector-output density emulators")
    dsub = p.add_subparsers(dest="action", required=True)
    for name in ("fit-pp", "fit-ms", "fit-factor"):
        f = dsub.add_parser(name)
        f.add_argument("--data", required=True)
        _add_kernel_args(f)
        if name == "fit-factor":
            f.add_argument("--d", type=int, default=2)
            f.add_argument("--basis", choices=("estimated", "dct"), default="estimated")
        else:
            f.add_argument("--basis", choices=("constant", "zero"), default="constant")
            f.add_argument("--noise", choices=("interpolating", "noisy"), default="interpolating")
        f.add_argument("--seed", type=int, default=0)
        f.add_argument("--out", required=True)
        f.set_defaults(func=cmd_density_fit)
    f = dsub.add_parser("predict")
    f.add_argument("--model", required=True)
    f.add_argument("--inputs", required=True)
    f.set_defaults(func=cmd_density_predict)

    p = sub.add_parser("vmc", help="variational Monte Carlo for hydrogen")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thinning", type=int, default=1)
    p.add_argument("--tune", action="store_true", help="tune the step length first")
    p.add_argument("--target", type=float, default=0.5, help="acceptance target for --tune")
    p.add_argument("--out")
    p.set_defaults(func=cmd_vmc)

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def _add_predict_args(p):
    p.add_argument("--model", required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_predict)


def _write_manifest(args, argv, timer):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "manifest")}
    inputs = [config[k] for k in ("data", "model", "inputs", "configs") if config.get(k)]
    man = {
        "version": VERSION,
        "command": " ".join(x for x in (args.command, getattr(args, "action", None)) if x),
        "argv": list(argv),
        "inputs": inputs,
        "config": config,
        "seed": config.get("seed"),
        "tool_version": __version__,
        "timings": {k: round(v, 6) for k, v in timer.phases.items()},
    }
    target = args.manifest or (f"{args.out}.manifest.json" if getattr(args, "out", None) else None)
    if target:
        write_json(man, target)
    else:
        print("manifest: " + json.dumps(man, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    env = os.environ.get("FPEMU_THREADS")
    args.threads = max(1, int(env)) if env else max(1, args.threads)
    timer = _Timer()
    try:
        status = args.func(args, timer)
        if args.command != "rerun":
            _write_manifest(args, argv, timer)
        return status
    except FpemuError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"IOError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
