"""Few-shot prompt-based fine-tuning with contrastive paraphrase views.

The package trains a masked language model on cloze-style prompts built
from a K-shot split, pairing each prompt with a second "view" (a
paraphrase, a same-class neighbour, or a different-class sample) and
optimizing a masked-LM loss plus a supervised contrastive loss in two
phases per step.
"""

__version__ = "0.1.0"

from cppf.tasks import (
    FewShotSplit,
    LabeledExample,
    TaskSpec,
    get_task,
    load_dataset,
    register_task,
    sample_few_shot,
)

__all__ = [
    "FewShotSplit",
    "LabeledExample",
    "TaskSpec",
    "get_task",
    "load_dataset",
    "register_task",
    "sample_few_shot",
    "__version__",
]
