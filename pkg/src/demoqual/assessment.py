"""Demonstration-quality assessment: learn, reproduce, score, label.

One model is fit per trial (nine demonstrations of one face). Each of the
nine demonstrated targets and the 49 grid targets is then attempted by
regression from the model and closed-loop tracking; the per-target
outcomes give a task success rate and a generalization success rate.
Rates above a threshold mark high-quality demonstration sets; a
demonstrator whose first-session rates clear the threshold on both faces
counts as a fast adapter. The study driver evaluates trials concurrently
and pools per-trial rate pairs into a task-vs-generalization Pearson
correlation.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clik import ClikParams, closest_demonstration, track_trajectory
from .demonstrations import FACES, dtw_align
from .errors import (EmptyOutcomes, EmptySet, LengthMismatch, MissingSession,
                     SchemaViolation, ZeroVariance)
from .kinematics import forward_kinematics
from .rotations import basis_from_z, matrix_to_quat
from .taskworld import check_collisions, first_goal_contact
from .tpgmm import TaskFrame, fit_em, generate_trajectory, project_demoset

OUTCOMES = ("success", "box_collision", "self_collision", "unreached",
            "infeasible_ik")
HIGH, LOW = "high", "low"
FAST, SLOW = "fast", "slow"


@dataclass(frozen=True)
class EvalParams:
    """Knobs of one evaluation run.

    samples is the per-target work cap: demonstrations are aligned to
    this length, the regressed trajectory has this many samples, and the
    tracker runs exactly that long before the attempt is scored.
    """

    delta: float = 0.8
    components: int = 6
    reg: float = 1e-6
    clik: ClikParams = field(default_factory=ClikParams)
    samples: int = 100

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise SchemaViolation(f"delta must be in (0, 1), "
                                  f"got {self.delta}")
        if self.components < 1:
            raise SchemaViolation("components must be >= 1")
        if self.reg < 0:
            raise SchemaViolation("reg must be >= 0")
        if self.samples < 2:
            raise SchemaViolation("samples must be >= 2")

    def to_dict(self):
        return {"delta": self.delta, "components": self.components,
                "reg": self.reg, "samples": self.samples,
                "clik": {"lam": self.clik.lam,
                         "kp": float(self.clik.kp[0, 0]),
                         "dt": self.clik.dt,
                         "null_gain": self.clik.null_gain,
                         "limit_margin_min": self.clik.limit_margin_min,
                         "max_retries": self.clik.max_retries}}

    @classmethod
    def from_dict(cls, d):
        try:
            c = dict(d.get("clik", {}))
            if "kp" in c:
                c["kp"] = float(c["kp"]) * np.eye(6)
            clik = ClikParams(**c)
            return cls(delta=float(d.get("delta", 0.8)),
                       components=int(d.get("components", 6)),
                       reg=float(d.get("reg", 1e-6)),
                       clik=clik,
                       samples=int(d.get("samples", 100)))
        except (TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad evaluation params: {exc}") from exc


@dataclass(frozen=True)
class TrialResult:
    """Outcome of reproducing one trial's model on every target."""

    face_id: str
    task_outcomes: tuple
    gen_outcomes: tuple
    task_rate: float
    gen_rate: float

    @classmethod
    def from_outcomes(cls, face_id, task_outcomes, gen_outcomes):
        task_outcomes = tuple(task_outcomes)
        gen_outcomes = tuple(gen_outcomes)
        for out in task_outcomes + gen_outcomes:
            if out not in OUTCOMES:
                raise SchemaViolation(f"unknown outcome {out!r}")
        return cls(face_id, task_outcomes, gen_outcomes,
                   success_rate(task_outcomes), success_rate(gen_outcomes))

    def to_dict(self):
        return {"face": self.face_id,
                "task_outcomes": list(self.task_outcomes),
                "gen_outcomes": list(self.gen_outcomes),
                "task_rate": self.task_rate, "gen_rate": self.gen_rate}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls.from_outcomes(d["face"], d["task_outcomes"],
                                     d["gen_outcomes"])
        except KeyError as exc:
            raise SchemaViolation(f"trial result missing {exc}") from exc


def success_rate(outcomes):
    """Fraction of outcomes that are presses."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyOutcomes("no outcomes to score")
    return sum(o == "success" for o in outcomes) / len(outcomes)


def classify_quality(task_rate, delta=0.8):
    """high iff the task success rate strictly exceeds the threshold."""
    return HIGH if task_rate > delta else LOW


def target_frame(world, target):
    """Task frame at a button: origin at its center, z along the face
    normal, in-plane axes deterministic."""
    quat = matrix_to_quat(basis_from_z(world.face_normal(target.face_id)))
    return TaskFrame.from_pose(target.position, quat)


def _fit_trial_model(demoset, world, params):
    frames = []
    targets = {f: world.demonstrated_targets(f) for f in FACES}
    for demo in demoset:
        tgt = targets[demo.meta.face_id][demo.meta.target_id]
        frames.append([
            TaskFrame.from_pose(demo.positions[0], demo.quats[0]),
            target_frame(world, tgt)])
    local = project_demoset(demoset, frames)
    model, _ = fit_em(local, K=params.components, reg=params.reg)
    return model


def _attempt_target(chain, demoset, model, start_frame, world, target,
                    params):
    frames = [start_frame, target_frame(world, target)]
    cart = generate_trajectory(model, frames, params.samples)
    policy = closest_demonstration(demoset, target)
    jt = track_trajectory(chain, chain.start_config, cart, policy,
                          params.clik)
    if not jt.feasible:
        return "infeasible_ik"
    report = check_collisions(chain, jt, world, target=target)
    if not report.clear:
        return "box_collision" if report.box_hit else "self_collision"
    if first_goal_contact(chain, jt, world, target) >= 0:
        return "success"
    return "unreached"


def evaluate_trial(chain, demoset, world, face, params=None):
    """Score one trial: fit on its nine demos, press every target.

    Per target the outcome is infeasible_ik when tracking fails, the
    collision kind when the swept arm is not clear, success when the tip
    touches the goal sphere at any sample, and unreached otherwise.
    """
    params = params or EvalParams()
    if len(demoset) == 0:
        raise EmptySet("cannot evaluate an empty trial")
    for demo in demoset:
        if demo.meta.face_id != face:
            raise SchemaViolation(
                f"demo on face {demo.meta.face_id!r} in a {face!r} trial")
    demoset = dtw_align(demoset, params.samples)
    model = _fit_trial_model(demoset, world, params)
    start = forward_kinematics(chain, chain.start_config)
    start_frame = TaskFrame.from_pose(start.position, start.orientation)
    outcomes = {"demonstrated": [], "grid": []}
    for target in (world.demonstrated_targets(face)
                   + world.generalization_grid(face)):
        outcomes[target.kind].append(_attempt_target(
            chain, demoset, model, start_frame, world, target, params))
    return TrialResult.from_outcomes(face, outcomes["demonstrated"],
                                     outcomes["grid"])


def cluster_adapters(results, delta=0.8):
    """Label each demonstrator fast or slow from session-1 task rates.

    fast iff the mean session-1 task rate strictly exceeds delta on both
    faces. Raises MissingSession when a demonstrator has no session-1
    trials for one of the faces.
    """
    by_who = {}
    for (who, session, _trial, face), result in results.items():
        if session == 1:
            by_who.setdefault(who, {}).setdefault(face, []).append(
                result.task_rate)
    labels = {}
    for who in sorted({key[0] for key in results}):
        rates = by_who.get(who, {})
        missing = [f for f in FACES if not rates.get(f)]
        if missing:
            raise MissingSession(
                f"{who} has no session-1 trials on face(s) "
                f"{', '.join(missing)}")
        fast = all(float(np.mean(rates[f])) > delta for f in FACES)
        labels[who] = FAST if fast else SLOW
    return labels


def pearson(task_rates, gen_rates):
    """Sample Pearson correlation of paired rates."""
    x = np.asarray(task_rates, dtype=float)
    y = np.asarray(gen_rates, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"paired vectors, got {x.shape} vs {y.shape}")
    if x.size < 3:
        raise LengthMismatch("need at least 3 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("correlation undefined for a constant vector")
    return float(np.dot(dx, dy) / (sx * sy))


# ---------------------------------------------------------------------------
# study driver


class StudyReport:
    """Everything a cohort evaluation produces: per-trial results keyed
    by (demonstrator, session, trial, face), adapter labels, the pooled
    task-vs-generalization correlation, and per-(session, face, adapter)
    rate tables."""

    def __init__(self, results, labels, rho, cells, delta):
        self.results = dict(results)
        self.labels = dict(labels)
        self.rho = rho
        self.cells = dict(cells)
        self.delta = delta

    def sorted_keys(self):
        return sorted(self.results.keys())

    def rates_csv(self):
        lines = ["demonstrator,session,trial,face,task_rate,gen_rate,label"]
        for key in self.sorted_keys():
            who, session, trial, face = key
            r = self.results[key]
            lines.append(f"{who},{session},{trial},{face},"
                         f"{r.task_rate!r},{r.gen_rate!r},"
                         f"{self.labels[who]}")
        return "\n".join(lines) + "\n"

    def summary(self):
        cells = []
        for (session, face, label) in sorted(self.cells):
            stats = self.cells[(session, face, label)]
            cells.append({"session": session, "face": face, "label": label,
                          **stats})
        counts = {FAST: 0, SLOW: 0}
        for label in self.labels.values():
            counts[label] += 1
        return {"pearson_rho": self.rho, "delta": self.delta,
                "trials": len(self.results),
                "adapters": counts, "cells": cells}

    def save(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "rates.csv").write_text(self.rates_csv())
        with open(out_dir / "summary.json", "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")


def _rate_cells(results, labels):
    groups = {}
    for (who, session, _trial, face), r in results.items():
        groups.setdefault((session, face, labels[who]), []).append(
            (r.task_rate, r.gen_rate))
    cells = {}
    for key, pairs in groups.items():
        arr = np.asarray(pairs)
        cells[key] = {"task_mean": float(arr[:, 0].mean()),
                      "task_std": float(arr[:, 0].std()),
                      "gen_mean": float(arr[:, 1].mean()),
                      "gen_std": float(arr[:, 1].std()),
                      "trials": len(pairs)}
    return cells


_WORKER_STATE = {}


def _init_worker(chain, world, params):
    _WORKER_STATE["args"] = (chain, world, params)


def _eval_worker(item):
    key, demoset = item
    chain, world, params = _WORKER_STATE["args"]
    return key, evaluate_trial(chain, demoset, world, key[3], params)


def run_study(chain, dataset, world, params=None, jobs=None):
    """Evaluate a whole cohort and assemble the report.

    dataset maps (demonstrator, session, trial, face) to a DemoSet.
    Trials are independent and evaluated in a process pool; results are
    aggregated in sorted-key order so the report does not depend on
    completion order.
    """
    params = params or EvalParams()
    items = sorted(dataset.items())
    if not items:
        raise EmptySet("cannot run a study on an empty dataset")
    results = {}
    if jobs == 1:
        for item in items:
            key, result = _eval_worker_serial(chain, world, params, item)
            results[key] = result
    else:
        with ProcessPoolExecutor(max_workers=jobs,
                                 initializer=_init_worker,
                                 initargs=(chain, world, params)) as pool:
            for key, result in pool.map(_eval_worker, items):
                results[key] = result
    labels = cluster_adapters(results, params.delta)
    keys = sorted(results.keys())
    rho = pearson([results[k].task_rate for k in keys],
                  [results[k].gen_rate for k in keys])
    cells = _rate_cells(results, labels)
    return StudyReport(results, labels, rho, cells, params.delta)


def _eval_worker_serial(chain, world, params, item):
    key, demoset = item
    return key, evaluate_trial(chain, demoset, world, key[3], params)
