# backend/manager.py

import logging
from typing import Dict, List

import numpy as np

from backend import __version__
from backend.entity import QnmfFactors, RunConfig
from backend.errors import ConfigError, RankMismatchError, VanishingSourceError
from backend.interfaces import StorageInterface
from backend.quaternion import QuaternionMatrix
from backend.solver import align_factors, restart_agreement, select_best, solve_all
from backend.sources.synthetic import SyntheticSource
from backend.sources.table import StokesTableSource
from backend.stokes import project_cone_array
from backend.uniqueness import (
    admissibility_report,
    admissible_envelopes,
    check_feasible,
    check_necessary_conditions,
    check_separable_delegate,
    check_sufficient_conditions,
    elementary_shift_interval,
)

logger = logging.getLogger(__name__)

RESTART_COLUMNS = ["seed", "status", "iterations", "converged", "final_error", "zero_rows", "eps_W", "eps_H", "message"]


class ExperimentManager:
    """
    核心业务控制器
    Source -> solver / uniqueness -> Storage
    """

    def __init__(self, storage: StorageInterface, progress: bool = False):
        self.storage = storage
        self.progress = progress

    def run(self, config: RunConfig) -> Dict[str, str]:
        handler = {
            "generate": self.run_generate,
            "factorize": self.run_factorize,
            "uniqueness": self.run_uniqueness,
            "evaluate": self.run_evaluate,
            "project": self.run_project,
        }.get(config.command)
        if handler is None:
            raise ConfigError("command", f"unknown command {config.command!r}")
        outputs = handler(config)
        logger.info(f"[Manager] {config.command} wrote {len(outputs)} file(s)")
        return outputs

    def _manifest(self, config: RunConfig, outputs: Dict[str, str], inputs: List[str], extra: dict = None) -> str:
        manifest = {
            "command": config.command,
            "config": config.to_dict(),
            "seed": config.seed,
            "version": __version__,
            "outputs": sorted(outputs),
        }
        manifest.update(extra or {})
        return self.storage.save_manifest(manifest, inputs)

    @staticmethod
    def _require(path: str, field_path: str) -> str:
        if not path:
            raise ConfigError(field_path, "input path is required for this command")
        return path

    # --- generate ---

    def run_generate(self, config: RunConfig) -> Dict[str, str]:
        if not config.sources:
            raise ConfigError("sources", "at least one source spec is required")
        source = SyntheticSource(config.sources, config.activations, config.noise_sigma, config.seed)
        payload = source.fetch()

        outputs = {"X": self.storage.save_table("X.csv", payload.X)}
        factor_paths = self.storage.save_factors("truth_", payload.truth.W, payload.truth.H)
        outputs["truth_W"] = factor_paths["W"]
        outputs["truth_H"] = factor_paths["H"]
        outputs["manifest"] = self._manifest(
            config, outputs, [], {"pure_pixels": payload.origin_info.get("pure_pixels", [])}
        )
        return outputs

    # --- factorize ---

    def run_factorize(self, config: RunConfig) -> Dict[str, str]:
        data_path = self._require(config.inputs.data, "inputs.data")
        source = StokesTableSource(data_path, self.storage, config.project_input, config.tolerance)
        payload = source.fetch()

        reports = solve_all(payload.X, config.solver, progress=self.progress)
        best = select_best(reports)
        agreement = {row["seed"]: row for row in restart_agreement(reports, best)}

        records = []
        for r in reports:
            row = r.summary()
            row["eps_W"] = agreement.get(r.seed, {}).get("eps_W")
            row["eps_H"] = agreement.get(r.seed, {}).get("eps_H")
            records.append(row)

        outputs = self.storage.save_factors("", best.factors.W, best.factors.H)
        outputs["trace"] = self.storage.save_trace("trace.csv", best.residual_trace)
        outputs["restarts"] = self.storage.save_records("restarts.csv", records, RESTART_COLUMNS)

        ok = [r for r in reports if r.ok]
        report = {
            "selected": best.summary(),
            "final_error": best.final_error,
            "iterations": best.iterations,
            "converged": best.converged,
            "residual_trace": list(best.residual_trace),
            "restarts": {
                "total": len(reports),
                "succeeded": len(ok),
                "mean_iterations": float(np.mean([r.iterations for r in ok])),
                "max_eps_W": max((row["eps_W"] for row in agreement.values()), default=0.0),
                "max_eps_H": max((row["eps_H"] for row in agreement.values()), default=0.0),
            },
            "projected_entries": payload.origin_info.get("projected", 0),
            "solver": config.solver.to_dict(),
        }
        outputs["report"] = self.storage.save_report("report.json", report)
        logger.info(
            f"[Manager] selected seed {best.seed}: eps={best.final_error:.3e} after {best.iterations} iterations "
            f"(converged={best.converged})"
        )
        outputs["manifest"] = self._manifest(config, outputs, [data_path])
        return outputs

    # --- uniqueness ---

    def run_uniqueness(self, config: RunConfig) -> Dict[str, str]:
        w_path = self._require(config.inputs.W, "inputs.W")
        h_path = self._require(config.inputs.H, "inputs.H")
        W, H = self.storage.load_factors(w_path, h_path)
        if W.cols != H.shape[0]:
            raise RankMismatchError(f"W has {W.cols} sources but H has {H.shape[0]} rows")
        check_feasible(W, H, config.tolerance)

        P = W.cols
        outputs: Dict[str, str] = {}
        report = {"num_sources": P}

        if P == 2:
            admissible = admissibility_report(W, H, config.tolerance)
            report["intervals"] = admissible.to_dict()
            report["sufficient"] = check_sufficient_conditions(W, H, config.tolerance).to_dict()
            envelope_index = []
            if config.envelopes:
                for env in admissible_envelopes(W, H, admissible):
                    paths = self.storage.save_factors(f"envelopes/{env['label']}_", env["W"], env["H"])
                    outputs[f"{env['label']}_W"] = paths["W"]
                    outputs[f"{env['label']}_H"] = paths["H"]
                    envelope_index.append({"label": env["label"], "alpha": env["alpha"], "beta": env["beta"]})
            report["envelopes"] = envelope_index
        else:
            report["intervals"] = None
            report["intervals_omitted"] = (
                f"admissible-interval analysis is defined for two sources, got P={P}; "
                "only the necessary-condition, separability and elementary-shift checks apply"
            )

        try:
            report["necessary"] = check_necessary_conditions(W, H, config.tolerance).to_dict()
        except VanishingSourceError as e:
            logger.warning(f"[Manager] necessary-condition check skipped: {e}")
            report["necessary"] = {"holds": None, "skipped": str(e)}
        report["separability"] = check_separable_delegate(W, H).to_dict()
        report["elementary_shifts"] = self._elementary_shifts(W, H)

        outputs["report"] = self.storage.save_report("uniqueness.json", report)
        outputs["manifest"] = self._manifest(config, outputs, [w_path, h_path])
        return outputs

    @staticmethod
    def _elementary_shifts(W: QuaternionMatrix, H: np.ndarray) -> List[dict]:
        shifts = []
        for p in range(W.cols):
            for q in range(W.cols):
                if p == q:
                    continue
                interval = elementary_shift_interval(W, H, p, q)
                shifts.append({
                    "p": p,
                    "q": q,
                    "interval": interval.to_dict(),
                    "nondegenerate": not interval.is_point(0.0),
                })
        witnesses = [s for s in shifts if s["nondegenerate"]]
        if witnesses:
            logger.info(f"[Manager] {len(witnesses)} elementary shift(s) keep the factors feasible")
        return shifts

    # --- evaluate ---

    def run_evaluate(self, config: RunConfig) -> Dict[str, str]:
        paths = [
            self._require(config.inputs.W, "inputs.W"),
            self._require(config.inputs.H, "inputs.H"),
            self._require(config.inputs.truth_W, "inputs.truth_W"),
            self._require(config.inputs.truth_H, "inputs.truth_H"),
        ]
        W_est, H_est = self.storage.load_factors(paths[0], paths[1])
        W_true, H_true = self.storage.load_factors(paths[2], paths[3])
        aligned = align_factors(QnmfFactors(W_est, H_est), QnmfFactors(W_true, H_true))
        logger.info(f"[Manager] eps_W={aligned.eps_w:.3e} eps_H={aligned.eps_h:.3e}")

        outputs = {"metrics": self.storage.save_report("metrics.json", aligned.to_dict())}
        outputs["manifest"] = self._manifest(config, outputs, paths)
        return outputs

    # --- project ---

    def run_project(self, config: RunConfig) -> Dict[str, str]:
        data_path = self._require(config.inputs.data, "inputs.data")
        X = self.storage.load_table(data_path)
        projected = project_cone_array(X.data)
        displacement = np.linalg.norm(projected - X.data, axis=-1)
        changed = int(np.count_nonzero(displacement))

        outputs = {"table": self.storage.save_table("projected.csv", QuaternionMatrix(projected))}
        summary = {
            "entries": X.rows * X.cols,
            "changed": changed,
            "max_displacement": float(displacement.max()) if displacement.size else 0.0,
        }
        outputs["summary"] = self.storage.save_report("summary.json", summary)
        logger.info(f"[Manager] projected {changed} of {summary['entries']} entries")
        outputs["manifest"] = self._manifest(config, outputs, [data_path])
        return outputs
