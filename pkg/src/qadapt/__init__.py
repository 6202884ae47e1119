"""Span-extraction QA with paragraph selection and pretrain/fine-tune
domain adaptation, on a small numpy autodiff core."""

__version__ = "0.1.0"
