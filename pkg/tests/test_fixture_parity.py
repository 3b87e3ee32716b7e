"""The web console ships a client-side tokenizer for highlighting; parity
with the backend lexer is anchored by golden token fixtures checked on both
sides of the language boundary.

Regenerate after lexer changes with:  python3 -m tests.test_fixture_parity
"""

from __future__ import annotations

import json
from pathlib import Path

from huntql.lang.tokens import tokenize

from .golden_queries import GOLDEN

FIXTURE_PATH = Path(__file__).resolve().parents[1] / "frontend" / "fixtures" / "golden-tokens.json"


def token_streams() -> dict:
    queries = []
    for name, text, _ast in GOLDEN:
        tokens, diagnostics = tokenize(text)
        assert not diagnostics, f"golden query {name} must lex cleanly"
        queries.append({
            "name": name,
            "text": text,
            "tokens": [
                {"kind": t.kind.value, "value": t.value, "line": t.line,
                 "col": t.col, "len": t.length}
                for t in tokens
            ],
        })
    return {"queries": queries}


def test_golden_token_fixture_matches_lexer():
    assert FIXTURE_PATH.exists(), (
        f"{FIXTURE_PATH} missing; regenerate with python3 -m tests.test_fixture_parity"
    )
    on_disk = json.loads(FIXTURE_PATH.read_text(encoding="utf-8"))
    assert on_disk == token_streams(), (
        "fixture is stale; regenerate with python3 -m tests.test_fixture_parity"
    )


if __name__ == "__main__":
    FIXTURE_PATH.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE_PATH.write_text(
        json.dumps(token_streams(), indent=1) + "\n", encoding="utf-8"
    )
    print(f"wrote {FIXTURE_PATH}")
