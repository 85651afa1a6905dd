"""Document-level event causality as multiple-choice QA.

Pipeline: canonical corpus -> MCQ samples -> multi-task SFT records ->
inference against a chat-completion endpoint -> pair-level scoring.
"""
from __future__ import annotations

__version__ = "0.1.0"
