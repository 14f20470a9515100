"""Cross-modal teacher-student distillation for frame-level action detection."""

__version__ = "0.1.0"
