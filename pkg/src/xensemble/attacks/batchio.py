"""JSON-lines files of adversarial examples.

One record per line::

    {"id": ..., "kind": ..., "target_mode": ..., "original_ref": ...,
     "perturbed": [...], "true_label": ..., "target_label": ... | null,
     "success": ..., "gen_time_s": ...}

``original_ref`` is ``"<dataset-name>:<index>"``; loading resolves it
against the dataset the batch was generated from.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import AdversarialExample


def example_to_record(ex: AdversarialExample, ex_id: str, original_ref: str,
                      record_time: bool = True) -> dict:
    return {
        "id": ex_id,
        "kind": ex.kind,
        "target_mode": ex.target_mode,
        "original_ref": original_ref,
        "perturbed": np.asarray(ex.perturbed, dtype=np.float64).reshape(-1).tolist(),
        "true_label": int(ex.true_label),
        "target_label": None if ex.target_label is None else int(ex.target_label),
        "success": bool(ex.success),
        "gen_time_s": float(ex.gen_time_s) if record_time else 0.0,
    }


def save_adv_batch(path, examples: Sequence[AdversarialExample], refs: Sequence[str],
                   ids: Optional[Sequence[str]] = None, record_time: bool = True) -> None:
    if len(refs) != len(examples):
        raise ValueError("need one original_ref per example")
    ids = ids or [str(i) for i in range(len(examples))]
    with open(path, "w") as fh:
        for ex, ref, ex_id in zip(examples, refs, ids):
            fh.write(json.dumps(example_to_record(ex, ex_id, ref, record_time)) + "\n")


def resolve_ref(ref: str, dataset) -> np.ndarray:
    name, _, idx = ref.rpartition(":")
    if name != dataset.name:
        raise ValueError(f"reference {ref!r} does not point into dataset {dataset.name!r}")
    return dataset.images[int(idx)]


def load_adv_batch(path, dataset) -> tuple[list[AdversarialExample], list[dict]]:
    """Returns the examples and the raw records (for ids and refs)."""
    examples, records = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            original = np.asarray(resolve_ref(rec["original_ref"], dataset), dtype=np.float64)
            perturbed = np.asarray(rec["perturbed"], dtype=np.float64).reshape(original.shape)
            examples.append(AdversarialExample(
                original, perturbed, int(rec["true_label"]),
                None if rec["target_label"] is None else int(rec["target_label"]),
                bool(rec["success"]), float(rec["gen_time_s"]), rec["kind"], rec["target_mode"]))
        except (KeyError, ValueError, TypeError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: bad adversarial record ({exc})") from None
        records.append(rec)
    return examples, records
