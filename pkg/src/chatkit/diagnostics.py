"""Structured diagnostic records shared by all pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    """One validation or processing issue tied to a file location.

    Diagnostics are advisory: they never abort processing by themselves,
    but the CLI turns them into a non-zero exit code in strict mode.
    """

    code: str
    message: str
    file: str | None = None
    line: int | None = None

    def as_line(self) -> str:
        """Render as one tab-separated line: file, line, code, message."""
        return "\t".join(
            [
                self.file if self.file is not None else "-",
                str(self.line) if self.line is not None else "-",
                self.code,
                self.message,
            ]
        )
