"""Loss with a hole where the support annotation lives.

Query labels use 255 for pixels covered by the support piece of the
object; those must contribute nothing — not a small weight, nothing —
to either the loss value or the gradient.
"""
import torch.nn.functional as F

IGNORE_LABEL = 255


def masked_cross_entropy(logits, target):
    """Cross entropy over {0, 1} targets; 255 pixels are excluded entirely.

    Args:
        logits: (B, 2, H, W) float scores.
        target: (B, H, W) integer labels in {0, 1, 255}.
    """
    return F.cross_entropy(logits, target.long(), ignore_index=IGNORE_LABEL)
