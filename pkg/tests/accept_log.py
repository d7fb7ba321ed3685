"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number, name: str, ok: bool, detail: str = "") -> str:
    line = f"[ACCEPT] {number} {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    LINES.append(line)
    print(line, flush=True)
    return line
