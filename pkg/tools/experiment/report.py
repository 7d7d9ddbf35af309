"""
Report writer.

Writes the results table (TSV and JSON), per-fold scores, per-instance
diagnostics and bootstrap significance against greedy decoding into the run
directory, and renders the table in the terminal. Report files hold no
timestamps so identical runs produce identical bytes.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.table import Table

from core.corpus import CorpusInstance
from core.data_model import tokenize_sentence
from core.evaluation import paired_bootstrap
from core.log_utils import get_logger

from .runner import GREEDY, CVResult, SetupResult

logger = get_logger("nlg.experiment")

COLUMNS = ["Setup", "BLEU", "NIST", "Missing", "Superfluous", "Repeated"]
FAILED = "failed"

RESULTS_TSV = "results.tsv"
RESULTS_JSON = "results.json"
FOLDS_TSV = "folds.tsv"
DIAGNOSTICS_JSON = "diagnostics.json"
SIGNIFICANCE_TSV = "significance.tsv"


def _row(result: SetupResult) -> List[str]:
    if result.failed or result.report is None:
        return [result.setup] + [FAILED] * (len(COLUMNS) - 1)
    r = result.report
    return [result.setup, f"{r.bleu:.4f}", f"{r.nist:.4f}", str(r.missing), str(r.superfluous), str(r.repeated)]


def _write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(row) + "\n")
    return path


def _write_json(path: Path, data: Dict) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    return path


def results_summary(cv: CVResult, mode: str, config_hash: str) -> Dict:
    setups = []
    for result in cv.setups:
        entry: Dict = {"setup": result.setup, "status": result.status}
        if result.failed:
            entry["error"] = result.error
        else:
            entry["pooled"] = result.report.to_dict(with_instances=False)
            entry["folds"] = {str(k): r.to_dict(with_instances=False) for k, r in sorted(result.per_fold.items())}
        setups.append(entry)
    return {
        "config_hash": config_hash,
        "mode": mode,
        "aggregation": "pooled",
        "fold_errors": {str(k): v for k, v in sorted(cv.fold_errors.items())},
        "setups": setups,
    }


def significance_rows(cv: CVResult, corpus: Sequence[CorpusInstance], plural_lexicon: frozenset,
                      iterations: int, seed: int) -> List[List[str]]:
    """Paired bootstrap BLEU p-value of every setup against greedy."""
    by_name = {r.setup: r for r in cv.setups}
    baseline = by_name.get(GREEDY)
    if baseline is None or baseline.failed:
        logger.warning("No greedy results; skipping significance tests")
        return []
    index = {inst.da_id: inst for inst in corpus}
    refs = [[tokenize_sentence(r, plural_lexicon) for r in index[o.da_id].refs] for o in baseline.outputs]
    base_hyps = [tokenize_sentence(o.text, plural_lexicon) for o in baseline.outputs]
    rows = []
    for result in cv.setups:
        if result.setup == GREEDY:
            continue
        if result.failed:
            rows.append([result.setup, GREEDY, FAILED, FAILED, FAILED])
            continue
        hyps = [tokenize_sentence(o.text, plural_lexicon) for o in result.outputs]
        test = paired_bootstrap(base_hyps, hyps, refs, "bleu", iterations, seed)
        rows.append([result.setup, GREEDY, f"{test.score_b:.4f}", f"{test.score_a:.4f}", f"{test.p_value:.4f}"])
    return rows


def write_reports(run_dir: Path, cv: CVResult, corpus: Sequence[CorpusInstance], mode: str, config_hash: str,
                  plural_lexicon: frozenset, bootstrap_iterations: int = 1000, seed: int = 1) -> Dict[str, Path]:
    """Write every report file and return their paths by name."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "results_tsv": _write_tsv(run_dir / RESULTS_TSV, COLUMNS, [_row(r) for r in cv.setups]),
        "results_json": _write_json(run_dir / RESULTS_JSON, results_summary(cv, mode, config_hash)),
    }

    fold_rows = []
    for result in cv.setups:
        for k, report in sorted(result.per_fold.items()):
            fold_rows.append([result.setup, str(k), f"{report.bleu:.4f}", f"{report.nist:.4f}",
                              str(report.missing), str(report.superfluous), str(report.repeated)])
    paths["folds_tsv"] = _write_tsv(run_dir / FOLDS_TSV, ["Setup", "Fold"] + COLUMNS[1:], fold_rows)

    diagnostics = {
        "plan": cv.plan.to_dict(),
        "setups": {r.setup: r.report.instances if r.report else [] for r in cv.setups},
    }
    paths["diagnostics"] = _write_json(run_dir / DIAGNOSTICS_JSON, diagnostics)
    paths["significance"] = _write_tsv(
        run_dir / SIGNIFICANCE_TSV, ["Setup", "Baseline", "BLEU", "BaselineBLEU", "p"],
        significance_rows(cv, corpus, plural_lexicon, bootstrap_iterations, seed))
    logger.info(f"Reports written to {run_dir}")
    return paths


def render_table(cv: CVResult, console: Optional[Console] = None, title: str = "Results") -> Table:
    """Print the results table with rich."""
    table = Table(title=title)
    for column in COLUMNS:
        table.add_column(column, justify="left" if column == "Setup" else "right")
    for result in cv.setups:
        row = _row(result)
        table.add_row(*row, style="red" if result.failed else None)
    (console or Console()).print(table)
    return table
