"""Batch entry point: ``vortexlab <subcommand> --config <json> [--threads N] [--out DIR]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(Exception):
    def __init__(self, fields: dict[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in fields.items()))
        self.fields = fields


# ------------------------------------------------------------------ schema

@dataclass(frozen=True)
class Key:
    kind: type | tuple
    default: Any = None
    check: Callable[[Any], bool] | None = None
    hint: str = ""
    required: bool = False


def _pos(x):
    return x > 0


def _prob(x):
    return 0 < x < 1


def _source_key():
    return Key(dict, {"kind": "vortex"}, hint="object with kind snapshot | vortex | pullback | ansatz")


GRID_KEYS = {
    "epsilon": Key((int, float), 1.0, _pos, "positive"),
    "half_width": Key((int, float), 6.0, _pos, "positive"),
    "spacing": Key((int, float), 0.2, _pos, "positive"),
}

ANSATZ_KEYS = {
    "epsilon": Key((int, float), 0.05, lambda x: 0 < x <= 0.2, "in (0, 0.2]"),
    "tangential_dim": Key(int, 1, lambda x: 1 <= x <= 3, "1, 2 or 3"),
    "tangential_half_width": Key((int, float), math.pi, _pos, "positive"),
    "tangential_spacing": Key((int, float), 0.1, _pos, "positive"),
    "normal_half_width": Key((int, float, type(None)), None, lambda x: x is None or x > 0, "positive or null"),
    "normal_spacing": Key((int, float, type(None)), None, lambda x: x is None or x > 0, "positive or null"),
    "graph": Key(dict, {"kind": "sine", "amplitude": 0.1}, hint="flat | sine | chart"),
    "tube_radius": Key((int, float), 0.5, _pos, "positive"),
}

PULLBACK_KEYS = {
    "epsilon": Key((int, float), 1.0, _pos, "positive"),
    "tangential_dim": Key(int, 1, lambda x: 1 <= x <= 3, "1, 2 or 3"),
    "tangential_half_width": Key((int, float), 4.0, _pos, "positive"),
    "tangential_spacing": Key((int, float), 0.5, _pos, "positive"),
    "normal_half_width": Key((int, float), 8.0, _pos, "positive"),
    "normal_spacing": Key((int, float), 0.2, _pos, "positive"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "solve-radial": {
        "r_max": Key((int, float), 20.0, lambda x: x >= 5, ">= 5"),
        "tol": Key((int, float), 1e-8, _pos, "positive"),
        "dr": Key((int, float), 0.01, _pos, "positive"),
    },
    "solve-planar": {
        **GRID_KEYS,
        "tolerance": Key((int, float), 1e-6, _pos, "positive"),
        "max_iterations": Key(int, 2000, lambda x: x >= 0, "non-negative"),
        "gauge_fix_weight": Key((int, float), 1.0, lambda x: x >= 0, "non-negative"),
        "boundary_mode": Key(str, "vortex_trace", lambda x: x in ("vortex_trace", "vacuum"), "vortex_trace | vacuum"),
        "step_rule": Key(str, "backtracking", lambda x: x in ("backtracking", "fixed"), "backtracking | fixed"),
        "init": Key(str, "perturbed_vortex", lambda x: x in ("perturbed_vortex", "vortex", "vacuum"),
                    "perturbed_vortex | vortex | vacuum"),
        "perturbation_amplitude": Key((int, float), 0.05, lambda x: x >= 0, "non-negative"),
    },
    "build-ansatz": dict(ANSATZ_KEYS),
    "ansatz-study": {
        "epsilons": Key(list, [0.1, 0.05, 0.025],
                        lambda x: len(x) >= 2 and all(isinstance(e, (int, float)) and 0 < e <= 0.2 for e in x),
                        "at least two values in (0, 0.2]"),
        "radial_spacing": Key((int, float), 0.01, _pos, "positive"),
    },
    "excess": {
        "source": _source_key(),
        "center": Key((list, type(None)), None, hint="coordinates or null for the origin"),
        "radius": Key((int, float), 1.0, _pos, "positive"),
        "plane": Key((list, type(None)), None, hint="n x (n+2) frame or null for the tangential axes"),
    },
    "density": {
        "source": _source_key(),
        "center": Key((list, type(None)), None, hint="coordinates or null for the origin"),
        "radius": Key((int, float), 1.0, _pos, "positive"),
    },
    "nodal": {
        "source": _source_key(),
        "alpha": Key((int, float), 0.5, lambda x: 0 <= x < 1, "in [0, 1)"),
        "sheet_tolerance": Key((int, float, type(None)), None, lambda x: x is None or x > 0, "positive or null"),
    },
    "levelset": {
        "source": _source_key(),
        "level": Key((int, float), 0.5, _prob, "in (0, 1)"),
    },
    "linops": {
        **GRID_KEYS,
        "half_width": Key((int, float), 8.0, _pos, "positive"),
        "samples": Key(int, 20, lambda x: x >= 1, ">= 1"),
        "delta": Key((int, float), 1e-4, lambda x: 1e-7 <= x <= 1e-2, "in [1e-7, 1e-2]"),
        "eigen": Key(bool, True),
        "eigen_count": Key(int, 5, lambda x: 1 <= x <= 20, "in [1, 20]"),
    },
    "verify-identities": {
        "source": _source_key(),
        "tolerance_factor": Key((int, float), 10.0, _pos, "positive"),
    },
}

SOURCE_SCHEMAS = {
    "snapshot": {"path": Key(str, required=True, hint="snapshot file")},
    "vortex": {**GRID_KEYS, "center": Key(list, [0.0, 0.0], lambda x: len(x) == 2, "two coordinates")},
    "pullback": PULLBACK_KEYS,
    "ansatz": ANSATZ_KEYS,
}

COMMON = {"seed": Key(int, 0, lambda x: x >= 0, "non-negative"), "command": Key(str, None)}


def _validate(raw: dict, schema: dict[str, Key], prefix: str = "") -> dict:
    errors: dict[str, str] = {}
    out = {}
    for k in raw:
        if k not in schema:
            errors[prefix + k] = "unknown key"
    for k, key in schema.items():
        if k not in raw:
            if key.required:
                errors[prefix + k] = "required"
            out[k] = key.default
            continue
        v = raw[k]
        kinds = key.kind if isinstance(key.kind, tuple) else (key.kind,)
        if isinstance(v, bool) and bool not in kinds:
            errors[prefix + k] = f"expected {key.hint or kinds}"
            continue
        if not isinstance(v, kinds):
            errors[prefix + k] = f"expected {key.hint or '/'.join(t.__name__ for t in kinds)}"
            continue
        if isinstance(v, float) and not math.isfinite(v):
            errors[prefix + k] = "must be finite"
            continue
        if key.check is not None and not key.check(v):
            errors[prefix + k] = f"must be {key.hint}"
            continue
        out[k] = v
    if errors:
        raise ConfigError(errors)
    return out


def validate_config(command: str, raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError({"": "config must be a JSON object"})
    if command not in SCHEMAS:
        raise ConfigError({"command": f"unknown subcommand {command!r}"})
    if raw.get("command") not in (None, command):
        raise ConfigError({"command": f"config is for {raw['command']!r}, invoked as {command!r}"})
    cfg = _validate(raw, {**SCHEMAS[command], **COMMON})
    cfg["command"] = command
    if "source" in cfg:
        src = dict(cfg["source"])
        kind = src.pop("kind", None)
        if kind not in SOURCE_SCHEMAS:
            raise ConfigError({"source.kind": f"must be one of {sorted(SOURCE_SCHEMAS)}"})
        cfg["source"] = {"kind": kind, **_validate(src, SOURCE_SCHEMAS[kind], "source.")}
    graph = cfg.get("graph") or (cfg.get("source") or {}).get("graph")
    if graph is not None:
        _validate_graph(graph)
    return cfg


def _validate_graph(graph: dict):
    kind = graph.get("kind")
    schemas = {"flat": {}, "sine": {"amplitude": Key((int, float), 0.1, hint="number"),
                                    "frequency": Key((int, float), 1.0, hint="number")},
               "chart": {"path": Key(str, required=True, hint="chart CSV")}}
    if kind not in schemas:
        raise ConfigError({"graph.kind": "must be flat | sine | chart"})
    _validate({k: v for k, v in graph.items() if k != "kind"}, schemas[kind], "graph.")


# ------------------------------------------------------------ subcommands

class Runner:
    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.outputs: list[Path] = []
        self.timings: dict[str, float] = {}
        self._profile = None

    def emit(self, path: Path):
        self.outputs.append(path)

    def json(self, name: str, data):
        from .io import write_json
        self.emit(write_json(self.out / name, data))

    def csv(self, name: str, header, rows):
        from .io import write_csv
        self.emit(write_csv(self.out / name, header, rows))

    def timed(self, label: str, fn, *args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        self.timings[label] = time.perf_counter() - t
        return res

    def profile(self, r_max: float = 40.0):
        from .radial import solve_bogomolny
        if self._profile is None or self._profile.r_max < r_max:
            self._profile = self.timed("radial_profile", solve_bogomolny, r_max, 1e-8)
        return self._profile

    # -- sources ------------------------------------------------------
    def grid2(self, c):
        from .fields import Grid2
        return Grid2.from_spacing(float(c["half_width"]), float(c["spacing"]))

    def chart_and_grid(self, c):
        import numpy as np
        from .fermi import FermiChart
        from .fields import Grid2, GridN
        from .io import load_chart
        eps = float(c["epsilon"])
        g = c["graph"]
        if g["kind"] == "chart":
            chart = load_chart(g["path"])
            n = chart.tangential_dim
            T = float(chart.tangential_axis[-1] - chart.tangential_axis[0]) / 2
            hy = chart.spacing
        else:
            n = int(c["tangential_dim"])
            T, hy = float(c["tangential_half_width"]), float(c["tangential_spacing"])
            chart = None
        if chart is not None:
            hmax_guess = float(np.abs(chart.h).max())
        else:
            hmax_guess = abs(float(g.get("amplitude", 0.1))) if g["kind"] == "sine" else 0.0
        Ln = c["normal_half_width"]
        if Ln is None:
            Ln = abs(hmax_guess) + 8 * eps * abs(math.log(eps)) + 0.02
        hn = c["normal_spacing"] or eps / 4
        grid = GridN.create(n, T, hy, Grid2.from_spacing(float(Ln), float(hn)))
        if chart is None:
            y = grid.tangential_coords()
            if g["kind"] == "flat":
                chart = FermiChart.flat(n, y, float(c["tube_radius"]))
            else:
                amp, k = float(g.get("amplitude", 0.1)), float(g.get("frequency", 1.0))
                chart = FermiChart.from_function(n, y, lambda *Y: (amp * np.sin(k * Y[0]), 0 * Y[0]),
                                                 float(c["tube_radius"]))
        return chart, grid

    def ansatz(self, c):
        from .fermi import build_ansatz, build_cutoff_vortex
        eps = float(c["epsilon"])
        chart, grid = self.chart_and_grid(c)
        cv = build_cutoff_vortex(eps, self.profile(max(40.0, 6 * abs(math.log(eps)) + 4)))
        return self.timed("build_ansatz", build_ansatz, chart, eps, cv, grid), chart, cv

    def source(self):
        import numpy as np
        from .fields import FieldConfiguration, Grid2, GridN
        from .io import load_snapshot
        from .radial import sample_vortex
        src = self.cfg["source"]
        kind = src["kind"]
        if kind == "snapshot":
            return load_snapshot(src["path"])[0]
        if kind == "vortex":
            grid = self.grid2(src)
            s_max = math.sqrt(2) * (grid.half_width + max(map(abs, src["center"]))) / src["epsilon"] + 1
            return sample_vortex(self.profile(max(40.0, s_max)), grid, tuple(src["center"]), float(src["epsilon"]))
        if kind == "pullback":
            eps = float(src["epsilon"])
            normal = Grid2.from_spacing(float(src["normal_half_width"]), float(src["normal_spacing"]))
            grid = GridN.create(int(src["tangential_dim"]), float(src["tangential_half_width"]),
                                float(src["tangential_spacing"]), normal)
            s_max = math.sqrt(2) * normal.half_width / eps + 1
            c2 = sample_vortex(self.profile(max(40.0, s_max)), normal, (0.0, 0.0), eps)
            n = grid.tangential_dim
            u = np.broadcast_to(c2.u, grid.shape).copy()
            A = np.zeros((grid.ndim,) + grid.shape)
            A[n:] = c2.A.reshape((2,) + (1,) * n + normal.shape)
            return FieldConfiguration(u, A, eps, grid)
        return self.ansatz(src)[0]

    # -- commands -----------------------------------------------------
    def solve_radial(self):
        from .io import save_profile
        from .radial import decay_fit, first_order_residual, second_order_residual, solve_bogomolny
        c = self.cfg
        prof = self.timed("solve", solve_bogomolny, float(c["r_max"]), float(c["tol"]), float(c["dr"]))
        for p in save_profile(self.out / "profile.csv", prof):
            self.emit(p)
        r1 = first_order_residual(prof)
        r2 = second_order_residual(prof)
        report = {"alpha": prof.shoot_slope, "first_order_residual": {"a": r1[0], "f": r1[1]},
                  "second_order_residual": {"f": r2[0], "a": r2[1]},
                  "splice_radius": prof.splice_radius}
        if prof.r_max >= 16:
            d = decay_fit(prof, 8.0, 16.0)
            report["decay_rates"] = {"f": d.rate_f, "a": d.rate_a}
        self.json("radial_report.json", report)
        print(f"second-order residual: f {r2[0]:.3e}  a {r2[1]:.3e}")
        return 0

    def solve_planar(self):
        import numpy as np
        from .fields import FieldConfiguration, Perturbation
        from .io import save_snapshot
        from .planar_solver import SolveSettings, solve_planar
        from .radial import sample_vortex
        c = self.cfg
        grid = self.grid2(c)
        eps = float(c["epsilon"])
        prof = self.profile(max(40.0, math.sqrt(2) * grid.half_width / eps + 1))
        settings = SolveSettings(max_iterations=c["max_iterations"], step_rule=c["step_rule"],
                                 tolerance=float(c["tolerance"]), gauge_fix_weight=float(c["gauge_fix_weight"]),
                                 boundary_mode=c["boundary_mode"])
        if c["init"] == "vacuum":
            init = FieldConfiguration.vacuum(grid, eps)
        else:
            init = sample_vortex(prof, grid, (0.0, 0.0), eps)
            if c["init"] == "perturbed_vortex" and c["perturbation_amplitude"] > 0:
                from .linearized import random_smooth_perturbation
                rng = np.random.default_rng(c["seed"])
                p = random_smooth_perturbation(grid, rng)
                init = init.perturbed(p, float(c["perturbation_amplitude"]))
        cfg, rep = self.timed("solve", solve_planar, eps, grid, init, settings, prof)
        self.timings["solver_wall_time"] = rep.wall_time
        d = rep.as_dict()
        d.pop("wall_time")
        self.emit(save_snapshot(self.out / "solution.snap", cfg, {"command": "solve-planar"}))
        self.json("convergence_report.json", d)
        if not rep.converged:
            raise _Numerical(f"planar solver: {rep.message} after {rep.iterations} iterations "
                             f"(residual {rep.residual_augmented:.3e})")
        return 0

    def build_ansatz(self):
        import numpy as np
        from .fermi import ansatz_residual
        from .io import save_chart, save_snapshot
        c = self.cfg
        an, chart, cv = self.ansatz(c)
        res = self.timed("residual", ansatz_residual, an, chart, float(c["epsilon"]), cv)
        self.emit(save_snapshot(self.out / "ansatz.snap", an, {"command": "build-ansatz"}))
        for p in save_chart(self.out / "chart.csv", chart):
            self.emit(p)
        norm = res.normalized()
        report = {"mode_norms": res.mode_norms, "cutoff_residual_sup": cv.residual_sup(),
                  "inner_radius": cv.inner_radius, "outer_radius": cv.outer_radius}
        if chart.tangential_dim == 1:
            y = chart.tangential_axis
            s = slice(2, -2)
            pred = res.prediction[0][s]
            if np.linalg.norm(pred) > 0:
                report["relative_l2_error"] = float(np.linalg.norm(norm[0][s] - pred) / np.linalg.norm(pred))
            self.csv("coefficients.csv", ["y", "c1_normalized", "c2_normalized", "prediction1", "prediction2"],
                     zip(y, norm[0], norm[1], res.prediction[0], res.prediction[1]))
        else:
            report["coefficients_normalized"] = norm
            report["prediction"] = res.prediction
        self.json("ansatz_report.json", report)
        return 0

    def ansatz_study(self):
        import numpy as np
        from .fermi import build_cutoff_vortex
        c = self.cfg
        eps = sorted((float(e) for e in c["epsilons"]), reverse=True)
        prof = self.profile(max(40.0, 6 * abs(math.log(min(eps))) + 4))
        sups = [build_cutoff_vortex(e, prof, float(c["radial_spacing"])).residual_sup() for e in eps]
        slope = float(np.polyfit(np.log(eps), np.log(sups), 1)[0])
        self.csv("cutoff_residuals.csv", ["epsilon", "residual_sup"], zip(eps, sups))
        self.json("ansatz_study.json", {"epsilons": eps, "residual_sup": sups, "loglog_slope": slope})
        print(f"log-log slope: {slope:.3f}")
        return 0

    def _center(self, cfg_center, ndim):
        if cfg_center is None:
            return [0.0] * ndim
        if len(cfg_center) != ndim:
            raise ConfigError({"center": f"needs {ndim} coordinates"})
        return [float(x) for x in cfg_center]

    def excess(self):
        from .geometry_diagnostics import excess
        c = self.cfg
        cfg = self.source()
        d = cfg.grid.ndim
        plane = c["plane"] or [[1.0 if j == i else 0.0 for j in range(d)] for i in range(d - 2)]
        rep = self.timed("excess", excess, cfg, self._center(c["center"], d), float(c["radius"]), plane)
        self.json("excess_report.json", rep.as_dict())
        return 0

    def density(self):
        from .geometry_diagnostics import density_ratio
        c = self.cfg
        cfg = self.source()
        rep = self.timed("density", density_ratio, cfg, float(c["radius"]), self._center(c["center"], cfg.grid.ndim))
        self.json("density_report.json", rep)
        return 0

    def nodal(self):
        from .geometry_diagnostics import extract_nodal_set, fit_graph
        c = self.cfg
        cfg = self.source()
        pts = self.timed("extract", extract_nodal_set, cfg)
        d = cfg.grid.ndim
        self.csv("nodal_points.csv", [f"x{k + 1}" for k in range(d)], pts)
        if d > 2:
            y = cfg.grid.tangential_coords()
            ng = self.timed("fit", fit_graph, pts, y, float(c["alpha"]), c["sheet_tolerance"])
            self.json("nodal_graph.json", ng.as_dict())
            if d == 3:
                self.csv("nodal_graph.csv", ["y", "f1", "f2", "mean_curvature1", "mean_curvature2"],
                         zip(y, ng.values[0], ng.values[1], ng.mean_curvature[0], ng.mean_curvature[1]))
        return 0

    def levelset(self):
        from .geometry_diagnostics import modulus_level_tube
        c = self.cfg
        cfg = self.source()
        tube = self.timed("levelset", modulus_level_tube, cfg, float(c["level"]))
        self.csv("level_points.csv", [f"x{k + 1}" for k in range(cfg.grid.ndim)], tube.points)
        self.json("level_tube.json", tube.as_dict())
        return 0

    def linops(self):
        import numpy as np
        from .fields import Ball, Interior, Perturbation
        from .linearized import (assemble, decomposition_check, random_smooth_perturbation,
                                 smallest_ritz_values, translational_zero_modes)
        from .radial import sample_vortex
        c = self.cfg
        grid = self.grid2(c)
        eps = float(c["epsilon"])
        prof = self.profile(max(40.0, math.sqrt(2) * grid.half_width / eps + 1))
        base = sample_vortex(prof, grid, (0.0, 0.0), eps)
        system = self.timed("assemble", assemble, base)
        edge = ~Interior(1).mask(grid)
        modes = [Perturbation(np.where(edge, 0, v.phi), np.where(edge, 0, v.omega))
                 for v in translational_zero_modes(prof, grid, (0.0, 0.0), eps)]
        bulk = Ball((0.0, 0.0), 0.6 * grid.half_width).mask(grid)
        zero = [system.apply_L(v).sup_norm(bulk) / v.sup_norm() for v in modes]
        X, Y = grid.mesh()
        gamma = np.exp(-(X ** 2 + (Y - 0.5 * eps) ** 2) / (2 * eps ** 2)) * (~edge)
        tg = system.apply_theta(gamma)
        inner = Interior(2).mask(grid)
        gauge = {"decomposed_operator": system.apply_decomposed(tg).sup_norm(inner) / tg.sup_norm(),
                 "elliptic_operator": system.apply_L(tg).sup_norm(inner) / tg.sup_norm()}
        rng = np.random.default_rng(c["seed"])
        checks = [decomposition_check(system, random_smooth_perturbation(grid, rng), float(c["delta"]))
                  for _ in range(c["samples"])]
        report = {"spacing": grid.spacing, "epsilon": eps,
                  "zero_mode_relative_residual": zero, "gauge_mode_relative_residual": gauge,
                  "decomposition": {"max_relative_discrepancy": max(k["relative_discrepancy"] for k in checks),
                                    "bound": max(5 * grid.spacing ** 2, 5 * float(c["delta"]) ** 2),
                                    "samples": checks}}
        self.json("linops_report.json", report)
        if c["eigen"]:
            er = self.timed("eigen", smallest_ritz_values, system, modes, c["eigen_count"], seed=c["seed"])
            self.json("eigen_report.json", {"base": {"grid": grid.describe(), "epsilon": eps, "kind": "radial vortex"},
                                            **er.as_dict()})
        return 0

    def verify_identities(self):
        import numpy as np
        from .fields import (Interior, Perturbation, bogomolny_residual, coulomb_residual, energy,
                             gauge_transform)
        from .linearized import assemble, translational_zero_modes
        c = self.cfg
        cfg = self.source()
        grid = cfg.grid
        if grid.ndim != 2:
            raise ConfigError({"source": "verify-identities needs a planar configuration"})
        h = max(grid.spacings)
        tol = float(c["tolerance_factor"]) * h * h
        inner = Interior(2).mask(grid)
        rng = np.random.default_rng(c["seed"])
        X, Y = grid.mesh()
        k = rng.normal(size=2) / grid.half_width
        gamma = np.sin(k[0] * X + k[1] * Y + rng.uniform(0, 2 * np.pi))
        e0 = energy(cfg).total
        e1 = energy(gauge_transform(cfg, gamma)).total
        b1, b2 = bogomolny_residual(cfg)
        checks = {
            "gauge_invariance": {"value": abs(e1 - e0) / max(abs(e0), 1.0)},
            "self_duality": {"value": float(max(np.abs(b1[inner]).max(), np.abs(b2[inner]).max()))},
            "coulomb": {"value": float(np.abs(coulomb_residual(cfg)[inner]).max())},
        }
        # zero modes of the vortex centred at the nodal point
        from .geometry_diagnostics import extract_nodal_set
        zeros = extract_nodal_set(cfg)
        if len(zeros) == 1:
            center = tuple(zeros[0])
            prof = self.profile(max(40.0, math.sqrt(2) * (grid.half_width + max(map(abs, center))) / cfg.epsilon + 1))
            system = assemble(cfg)
            edge = ~Interior(1).mask(grid)
            bulk = inner & (np.hypot(X - center[0], Y - center[1]) < 0.6 * grid.half_width)
            vals = []
            for v in translational_zero_modes(prof, grid, center, cfg.epsilon):
                v = Perturbation(np.where(edge, 0, v.phi), np.where(edge, 0, v.omega))
                vals.append(system.apply_L(v).sup_norm(bulk) / v.sup_norm())
            checks["zero_modes"] = {"value": max(vals)}
        else:
            checks["zero_modes"] = {"value": None, "note": f"{len(zeros)} zeros found; need exactly one"}
        for v in checks.values():
            v["tolerance"] = tol
            v["pass"] = v["value"] is not None and v["value"] <= tol
        self.json("identities_report.json", {"tolerance": tol, "spacing": h, "checks": checks,
                                             "all_pass": all(v["pass"] for v in checks.values())})
        for name, v in checks.items():
            print(f"{name}: {'PASS' if v['pass'] else 'FAIL'} ({v['value']})")
        return 0


class _Numerical(Exception):
    pass


COMMANDS = {
    "solve-radial": Runner.solve_radial, "solve-planar": Runner.solve_planar,
    "build-ansatz": Runner.build_ansatz, "ansatz-study": Runner.ansatz_study,
    "excess": Runner.excess, "density": Runner.density, "nodal": Runner.nodal,
    "levelset": Runner.levelset, "linops": Runner.linops, "verify-identities": Runner.verify_identities,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fail(kind: str, code: int, message: str, fields: dict | None = None) -> int:
    err = {"error": kind, "message": message}
    if fields:
        err["fields"] = fields
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def run(command: str, config_path: str, out: str | None = None, threads: int | None = None) -> int:
    if threads is None and os.environ.get("VORTEXLAB_THREADS"):
        try:
            threads = int(os.environ["VORTEXLAB_THREADS"])
        except ValueError:
            return _fail("ValidationError", 2, "VORTEXLAB_THREADS must be an integer",
                         {"VORTEXLAB_THREADS": "not an integer"})
    if threads is not None:
        if threads < 1:
            return _fail("ValidationError", 2, "thread count must be >= 1", {"threads": "must be >= 1"})
        for var in THREAD_VARS:
            os.environ[var] = str(threads)
    try:
        raw = json.loads(Path(config_path).read_text())
    except OSError as exc:
        return _fail("ValidationError", 2, f"cannot read config: {exc}", {"config": "unreadable"})
    except ValueError as exc:
        return _fail("ValidationError", 2, f"config is not valid JSON: {exc}", {"config": "invalid JSON"})
    try:
        cfg = validate_config(command, raw)
    except ConfigError as exc:
        return _fail("ValidationError", 2, str(exc), exc.fields)

    import numpy
    import scipy
    from . import __version__
    from .errors import NumericalError, ValidationError

    out_dir = Path(out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = Runner(cfg, out_dir)
    started = time.time()
    t0 = time.perf_counter()
    status = 0
    error = None
    try:
        status = COMMANDS[command](runner)
    except ConfigError as exc:
        status, error = 2, {"error": "ValidationError", "message": str(exc), "fields": exc.fields}
    except ValidationError as exc:
        status, error = 2, {"error": "ValidationError", "message": str(exc)}
    except (NumericalError, _Numerical) as exc:
        status, error = 3, {"error": "NumericalError", "message": str(exc)}
    manifest = {
        "command": command, "config": cfg, "config_path": str(config_path),
        "versions": {"vortexlab": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": threads, "started_unix": started, "wall_time": time.perf_counter() - t0,
        "timings": runner.timings, "exit_status": status, "error": error,
        "outputs": {p.name: _sha256(p) for p in runner.outputs},
    }
    from .io import write_json
    write_json(out_dir / "manifest.json", manifest)
    if error is not None:
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="vortexlab", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("--out", default=None, help="output directory (default: current directory)")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
