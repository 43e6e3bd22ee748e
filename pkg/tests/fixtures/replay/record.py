"""Regenerate scenarios.jsonl from the scripted model answers.

    python3 tests/fixtures/replay/record.py [OUT]

Run after changing prompts or scripted answers; the drift test compares a
fresh recording against the committed store.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2]))

import scripted  # noqa: E402
from msgpipe.llm import RecordBackend, ScriptedBackend  # noqa: E402
from msgpipe.orchestrator import run_suite  # noqa: E402


def record(out: Path) -> None:
    if out.exists():
        out.unlink()
    llm = RecordBackend(ScriptedBackend(scripted.respond), out, clock=lambda: scripted.CLOCK)
    ws = scripted.suite_workspace()
    for name, targets, _ in scripted.SCENARIOS:
        _, config = scripted.scenario(name)
        run_suite(ws, config, llm, targets=targets)
    scripted.agent_calls(llm)


if __name__ == "__main__":
    record(Path(sys.argv[1]) if len(sys.argv) > 1 else scripted.REPLAY_STORE)
