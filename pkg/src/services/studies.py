"""
Solver benchmark against the projected-gradient oracle and the relaxation-gap
study against the exhaustive MIP.
"""
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.config import Config
from src.core.logger import logger
from src.models.configs import OracleConfig, SolverConfig
from src.models.reports import BenchRow, GapRow
from src.services import reference_oracles, tree_solver
from src.services.performance_monitor import peak_memory_mib, time_calls
from src.services.tree_topology import build_complete_tree

DEFAULT_LAMBDAS = (0.1, 1.0, 10.0, 100.0)


def run_bench(
    depths: Sequence[int],
    ns: Sequence[int],
    reps: int = 5,
    seed: int = 0,
    lam: float = 1.0,
    oracle_cap: Optional[int] = None,
) -> List[BenchRow]:
    """
    Median solver and oracle times per (n, D) cell on q ~ Uniform[-2, 2]

    Cells with n * |T| above ``oracle_cap`` leave the oracle columns empty.
    """
    oracle_cap = Config.BENCH_ORACLE_CAP if oracle_cap is None else oracle_cap
    solver_config = SolverConfig(lam=lam)
    oracle_config = OracleConfig(max_problem_size=max(oracle_cap, 1))
    rows = []
    for depth in depths:
        topology = build_complete_tree(int(depth))
        for n in ns:
            # one generator per cell keeps each cell reproducible on its own
            rng = np.random.default_rng([seed, int(depth), int(n)])
            q = rng.uniform(-2.0, 2.0, size=(int(n), topology.num_nodes))

            def run_solver():
                return tree_solver.solve(q, solver_config, topology)

            solver = time_calls(run_solver, reps)
            row = BenchRow(
                n=int(n),
                D=int(depth),
                solver_ms_median=solver.median_ms,
                solver_peak_mib=peak_memory_mib(run_solver),
            )
            if q.size <= oracle_cap:
                def run_oracle():
                    return reference_oracles.qp_oracle(q, lam, topology, oracle_config)

                oracle = time_calls(run_oracle, reps)
                row.oracle_ms_median = oracle.median_ms
                row.speedup = oracle.median_ms / solver.median_ms if solver.median_ms > 0 else None
                row.oracle_peak_mib = peak_memory_mib(run_oracle)
            logger.info(f"bench n={n} D={depth}: solver {solver.median_ms:.3f} ms, oracle {row.oracle_ms_median}")
            rows.append(row)
    return rows


def parent_bounded_rewards(rng: np.random.Generator, n: int, depth: int) -> np.ndarray:
    """q ~ Uniform[-2, 2] with every child capped by its parent, q_it = min(q_it, q_ip(t))"""
    topology = build_complete_tree(depth)
    q = rng.uniform(-2.0, 2.0, size=(n, topology.num_nodes))
    for t in range(2, topology.num_nodes + 1):
        q[:, t - 1] = np.minimum(q[:, t - 1], q[:, t // 2 - 1])
    return q


def run_gap_study(
    lambdas: Iterable[float] = DEFAULT_LAMBDAS,
    instances: int = 1000,
    n: int = 10,
    depth: int = 2,
    seed: int = 0,
) -> List[GapRow]:
    """
    Mean max-norm distance between the relaxed optimum and the exhaustive MIP optimum

    Every lambda sees the same seeded instances.
    """
    configs = [SolverConfig(lam=lam) for lam in lambdas]
    topology = build_complete_tree(depth)
    rng = np.random.default_rng(seed)
    problems = [parent_bounded_rewards(rng, n, depth) for _ in range(instances)]

    rows = []
    for config in configs:
        gaps_a, gaps_z = [], []
        for q in problems:
            relaxed = tree_solver.solve(q, config, topology)
            z_mip, a_mip = reference_oracles.mip_oracle(q, config.lam, topology)
            gaps_a.append(float(np.max(np.abs(relaxed.a - a_mip))))
            gaps_z.append(float(np.max(np.abs(relaxed.z - z_mip))))
        row = GapRow(
            lam=config.lam,
            mean_gap_a=float(np.mean(gaps_a)) if gaps_a else 0.0,
            mean_gap_z=float(np.mean(gaps_z)) if gaps_z else 0.0,
        )
        logger.info(f"gap study lambda={config.lam}: a {row.mean_gap_a:.4f}, z {row.mean_gap_z:.4f}")
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence, columns: Sequence[str]) -> str:
    """CSV text with empty cells for missing values"""
    frame = pd.DataFrame([row.model_dump(by_alias=True) for row in rows], columns=list(columns))
    return frame.to_csv(index=False, na_rep="")
