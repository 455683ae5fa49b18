"""Class labels shared across the pipeline.

"AD" is the positive class everywhere (confusion matrices, SVM/ANN target
coding +1); "HC" is negative (-1). Label strings are matched exactly, no
trimming or case folding.
"""

AD = "AD"
HC = "HC"

VALID_LABELS = (AD, HC)


def to_sign(label: str) -> int:
    """Map a class label to its +/-1 target coding."""
    if label == AD:
        return 1
    if label == HC:
        return -1
    raise ValueError(f"unknown label {label!r}; expected one of {VALID_LABELS}")


def from_sign(value: float) -> str:
    """Map a decision value to a label; ties (value == 0) go to HC."""
    return AD if value > 0 else HC
