"""Bridge to externally trained allocators.

Computes the per-time-step input features a learned allocator sees (the
OTA-acquirable quantities, evaluated in closed form), applies its output
post-processing (power scaling plus blend), and moves data across the
package boundary: channel drops and features are exported to a line-
delimited dataset file, trained-model decisions are imported back and
evaluated.  Array payloads are little-endian float64, base64-encoded, with
explicit shapes, so round trips are bit-exact from any language.

Dataset schema (one JSON object per line):
  {"record": "header", "schema": "cellfree-rb-dataset/1", "scenario": {...},
   "n_drops": int, "feature_steps": [1]}
  {"record": "drop", "drop_id": int, "scenario_hash": str,
   "h_re"/"h_im": array (N,K,F), "beta_db": array (N,K),
   "noise_power_w": array (K,F), "v0_re"/"v0_im": array (N,K,F),
   "features": [{"step": 1, "r_re"/"r_im": array (N,K,F),
                 "b": array (N,K,F)}]}
Decision schema:
  {"record": "header", "schema": "cellfree-rb-decisions/1"}
  {"record": "decision", "drop_id": int, "ap": int,
   "v_re"/"v_im": array (K,F)}
where array = {"shape": [...], "dtype": "float64", "encoding": "base64-le",
"data": base64 string}.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass

import numpy as np

from .metrics import UeCoefficients, check_power_feasible, effective_gains, \
    sum_rate_per_subcarrier
from .scenario import STREAM_INIT, ChannelRealization, Scenario, generate_drop
from .wmmse import coefficients_for, group_terms, initial_decisions

log = logging.getLogger(__name__)

DATASET_SCHEMA = "cellfree-rb-dataset/1"
DECISIONS_SCHEMA = "cellfree-rb-decisions/1"


@dataclass
class RolloutConfig:
    """Inference-time knobs for a learned allocator rollout."""

    steps: int = 4
    blend: float | None = None     # None: 0.5 for <=2 steps, 0.7 beyond

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.blend is not None and not 0.0 <= self.blend < 1.0:
            raise ValueError("blend must lie in [0, 1)")

    @property
    def gamma(self) -> float:
        if self.blend is not None:
            return self.blend
        return 0.5 if self.steps <= 2 else 0.7


@dataclass
class FeatureArrays:
    """Per-AP allocator inputs: complex r[n, k, f] and real b[n, k, f]
    (rows of b are identical; it broadcasts the per-RB curvature)."""

    r: np.ndarray
    b: np.ndarray


def decision_features(chan: ChannelRealization, v_prev: np.ndarray,
                      coeffs: UeCoefficients | None = None) -> FeatureArrays:
    """Inputs each AP can assemble from one signaling round.

    Uses the simultaneous-update gain snapshot (every AP sees only previous
    decisions).  r is the conjugated difference of the matched-filter and
    cross-interference terms; b tiles the per-RB curvature across UEs.
    """
    g = effective_gains(chan, v_prev)
    if coeffs is None:
        coeffs = coefficients_for(chan, v_prev, gains=g)
    terms = group_terms(chan, coeffs, np.arange(chan.n_aps), g)
    a = np.stack([t.a for t in terms])
    m = np.stack([t.m for t in terms])
    d = np.stack([t.d for t in terms])
    r = np.conj(a - m)
    b = np.broadcast_to(d[:, None, :], r.shape).copy()
    return FeatureArrays(r=r, b=b)


def postprocess_decision(raw: np.ndarray, v_prev_ap: np.ndarray,
                         gamma: float, p_t: float) -> np.ndarray:
    """Scale a raw network output onto the power sphere, then blend."""
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        log.debug("zero raw decision: blend falls back to the previous value")
        return gamma * v_prev_ap
    scaled = raw * (np.sqrt(p_t) / norm)
    return gamma * v_prev_ap + (1.0 - gamma) * scaled


def encode_array(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "float64",
            "encoding": "base64-le",
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj: dict) -> np.ndarray:
    if obj.get("encoding") != "base64-le" or obj.get("dtype") != "float64":
        raise ValueError(f"unsupported array encoding: {obj.get('encoding')}")
    buf = base64.b64decode(obj["data"])
    return np.frombuffer(buf, dtype="<f8").reshape(obj["shape"]).copy()


def _encode_complex(arr: np.ndarray, key: str) -> dict:
    return {f"{key}_re": encode_array(arr.real), f"{key}_im": encode_array(arr.imag)}


def _decode_complex(obj: dict, key: str) -> np.ndarray:
    return decode_array(obj[f"{key}_re"]) + 1j * decode_array(obj[f"{key}_im"])


@dataclass
class DropRecord:
    drop_id: int
    chan: ChannelRealization
    v0: np.ndarray
    features: FeatureArrays
    scenario_hash: str


@dataclass
class Dataset:
    scenario: Scenario
    drops: list[DropRecord]


def export_dataset(scenario: Scenario, n_drops: int, path) -> None:
    """Write drops plus first-step allocator features for external training."""
    if n_drops < 1:
        raise ValueError("n_drops must be >= 1")
    with open(path, "w") as fh:
        header = {"record": "header", "schema": DATASET_SCHEMA,
                  "scenario": scenario.to_dict(), "n_drops": int(n_drops),
                  "feature_steps": [1]}
        fh.write(json.dumps(header) + "\n")
        for i in range(n_drops):
            chan = generate_drop(scenario, i)
            v0 = initial_decisions(chan, scenario.p_ap_w,
                                   scenario.drop_rng(i, STREAM_INIT))
            feats = decision_features(chan, v0)
            rec = {"record": "drop", "drop_id": i,
                   "scenario_hash": chan.scenario_hash}
            rec.update(_encode_complex(chan.h, "h"))
            rec["beta_db"] = encode_array(chan.beta_db)
            rec["noise_power_w"] = encode_array(chan.noise_power_w)
            rec.update(_encode_complex(v0, "v0"))
            step = {"step": 1, "b": encode_array(feats.b)}
            step.update(_encode_complex(feats.r, "r"))
            rec["features"] = [step]
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    scenario = None
    drops = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "header":
                if rec.get("schema") != DATASET_SCHEMA:
                    raise ValueError(f"unsupported dataset schema "
                                     f"{rec.get('schema')!r}")
                scenario = Scenario.from_dict(rec["scenario"])
            elif kind == "drop":
                if scenario is None:
                    raise ValueError("drop record before dataset header")
                h = _decode_complex(rec, "h")
                chan = ChannelRealization(
                    h=h, beta_db=decode_array(rec["beta_db"]),
                    noise_power_w=decode_array(rec["noise_power_w"]),
                    ap_positions=np.zeros((h.shape[0], 2)),
                    ue_positions=np.zeros((h.shape[1], 2)),
                    subcarriers_per_rb=scenario.subcarriers_per_rb,
                    drop_index=int(rec["drop_id"]),
                    scenario_hash=rec.get("scenario_hash", ""))
                step = rec["features"][0]
                feats = FeatureArrays(r=_decode_complex(step, "r"),
                                      b=decode_array(step["b"]))
                drops.append(DropRecord(
                    drop_id=int(rec["drop_id"]), chan=chan,
                    v0=_decode_complex(rec, "v0"), features=feats,
                    scenario_hash=rec.get("scenario_hash", "")))
            else:
                raise ValueError(f"unknown record type {kind!r}")
    if scenario is None:
        raise ValueError("dataset has no header record")
    return Dataset(scenario=scenario, drops=drops)


def write_decisions(path, entries) -> None:
    """Write (drop_id, ap, K-by-F complex array) triples in import format."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"record": "header",
                             "schema": DECISIONS_SCHEMA}) + "\n")
        for drop_id, ap, v_ap in entries:
            rec = {"record": "decision", "drop_id": int(drop_id),
                   "ap": int(ap)}
            rec.update(_encode_complex(np.asarray(v_ap, dtype=complex), "v"))
            fh.write(json.dumps(rec) + "\n")


def import_decisions(path) -> dict[tuple[int, int], np.ndarray]:
    """Parse a decision file into {(drop_id, ap): K-by-F array}."""
    out: dict[tuple[int, int], np.ndarray] = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "header":
                if rec.get("schema") != DECISIONS_SCHEMA:
                    raise ValueError(f"unsupported decisions schema "
                                     f"{rec.get('schema')!r}")
            elif kind == "decision":
                out[(int(rec["drop_id"]), int(rec["ap"]))] = \
                    _decode_complex(rec, "v")
            else:
                raise ValueError(f"unknown record type {kind!r}")
    return out


@dataclass
class EvaluationRow:
    drop_id: int
    sr_per_subcarrier: float


@dataclass
class EvaluationReport:
    rows: list[EvaluationRow]

    @property
    def mean_sr(self) -> float:
        return float(np.mean([r.sr_per_subcarrier for r in self.rows]))


def evaluate_decisions(dataset: Dataset,
                       decisions: dict[tuple[int, int], np.ndarray],
                       power_tol: float = 1e-6) -> EvaluationReport:
    """Score imported decisions on the dataset's drops.

    Every (drop, AP) pair must be present; missing pairs are reported in one
    error.  Decisions are checked against the per-AP power budget.
    """
    missing = []
    for drop in dataset.drops:
        for ap in range(drop.chan.n_aps):
            if (drop.drop_id, ap) not in decisions:
                missing.append((drop.drop_id, ap))
    if missing:
        raise ValueError(f"decision file is missing {len(missing)} "
                         f"(drop, ap) entries: {missing[:10]}...")

    p_t = dataset.scenario.p_ap_w
    rows = []
    for drop in dataset.drops:
        v = np.stack([decisions[(drop.drop_id, ap)]
                      for ap in range(drop.chan.n_aps)])
        check_power_feasible(v, p_t, tol=power_tol)
        rows.append(EvaluationRow(
            drop_id=drop.drop_id,
            sr_per_subcarrier=sum_rate_per_subcarrier(drop.chan, v)))
    return EvaluationReport(rows=rows)
