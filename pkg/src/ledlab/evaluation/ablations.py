"""Ablation table: dialog variants of one trained model plus separately trained model variants."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DataError
from ..model import LingUNet, load_checkpoint
from .metrics import MetricsReport
from .predictors import ModelPredictor, evaluate

# rows answered by the full model with a different dialog encoding
DIALOG_ROWS = {
    "full": "full",
    "first_half": "first_half",
    "second_half": "second_half",
    "observer_only": "observer_only",
    "locator_only": "locator_only",
    "shuffled": "shuffled",
}
# rows that need their own trained weights
MODEL_ROWS = ("no_dialog", "no_vision", "no_residual", "no_aug")
ABLATIONS = ("full", "no_aug", "no_residual", "no_dialog", "no_vision", "first_half", "second_half",
             "observer_only", "locator_only", "shuffled")

ROW_LABELS = {
    "full": "Full model",
    "no_aug": "w/o data aug.",
    "no_residual": "w/o residual",
    "no_dialog": "No dialog",
    "no_vision": "No vision",
    "first_half": "First-half dialog",
    "second_half": "Second-half dialog",
    "observer_only": "Observer only",
    "locator_only": "Locator only",
    "shuffled": "Shuffled rounds",
}


@dataclass
class AblationRow:
    name: str
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    missing: str | None = None  # reason the row could not be evaluated

    @property
    def present(self) -> bool:
        return self.missing is None


def parse_ablations(selection: str | None) -> tuple[str, ...]:
    """Comma separated row names; ``None`` or ``all`` selects every row."""
    if selection is None or selection.strip() in ("", "all"):
        return ABLATIONS
    names = tuple(s.strip() for s in selection.split(",") if s.strip())
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise KeyError(f"unknown ablation(s) {unknown}; valid names: {', '.join(ABLATIONS)}")
    return names


def _resolve(model) -> LingUNet:
    if isinstance(model, LingUNet):
        return model
    path = Path(model)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    return load_checkpoint(path)[0]


def run_ablations(full_model, vocab, splits: dict, envs: dict, variant_models: dict | None = None,
                  rows=ABLATIONS, seed: int = 0) -> list[AblationRow]:
    """Evaluate every requested row on every split.

    ``full_model`` and the values of ``variant_models`` may be models or
    checkpoint paths. A model-variant row whose weights are absent or
    unreadable comes back with ``missing`` set instead of aborting the run.
    """
    variant_models = variant_models or {}
    out = []
    full = None
    for name in rows:
        row = AblationRow(name)
        try:
            if name in DIALOG_ROWS:
                if full is None:
                    full = _resolve(full_model)
                predictor = ModelPredictor(full, vocab, DIALOG_ROWS[name], seed)
            elif name in MODEL_ROWS:
                if variant_models.get(name) is None:
                    raise DataError(f"no checkpoint configured for {name}")
                predictor = ModelPredictor(_resolve(variant_models[name]), vocab, "full", seed)
            else:
                raise KeyError(f"unknown ablation {name!r}; valid names: {', '.join(ABLATIONS)}")
        except DataError as exc:
            row.missing = str(exc)
            out.append(row)
            continue
        for split in sorted(splits):
            row.reports[split] = MetricsReport.from_records(split, evaluate(predictor, splits[split], envs))
        out.append(row)
    return out
