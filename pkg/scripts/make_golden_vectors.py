"""Regenerate tests/golden/fnv_vectors.json with the C reference hasher.

Rows are given as canonical cell text (None = null) with column types; the
C program does the byte encoding and hashing, so the Python implementation
is never consulted.

    python3 scripts/make_golden_vectors.py
"""

import json
import subprocess
import tempfile
from pathlib import Path

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"

VECTORS = [
    ([], []),
    ([("country", "text")], ["USA"]),
    ([("country", "text"), ("gross_amount", "decimal")], ["USA", "5000.00"]),
    ([("country", "text"), ("gross_amount", "decimal")], ["UK", "5000.00"]),
    ([("country", "text"), ("gross_amount", "decimal")], ["USA", "5000.01"]),
    ([("a", "text"), ("b", "text")], ["ab", "c"]),
    ([("a", "text"), ("b", "text")], ["a", "bc"]),
    ([("a", "text"), ("b", "text")], [None, "x"]),
    ([("a", "text"), ("b", "text")], ["x", None]),
    ([("a", "text")], [None]),
    ([("n", "integer"), ("d", "decimal")], ["-42", "0.000001"]),
    ([("n", "integer"), ("d", "decimal")], ["0", "-0.5"]),
    ([("flag", "boolean"), ("other", "boolean")], ["true", "false"]),
    ([("ts", "timestamp")], ["2024-01-01T00:00:00.000Z"]),
    ([("ts", "timestamp"), ("n", "integer")], ["1970-01-01T00:00:00.000Z", "9223372036854775807"]),
    ([("sector", "text"), ("desc", "text")], ["Économie", "naïve, \"quoted\" café ☕"]),
    ([("d", "decimal"), ("d2", "decimal"), ("d3", "decimal")], ["1E+3", "1.50", "123456789012345678901234567890.1"]),
    ([("id", "integer"), ("country", "text"), ("sector", "text"), ("amount", "decimal"),
      ("ts", "timestamp"), ("ok", "boolean")],
     ["7", "Brazil", "Finance", "12.34", "2023-12-31T23:59:59.999Z", None]),
]


def encode(row):
    cells = ["N" if v is None else "V" + v.encode("utf-8").hex() for v in row]
    return "\t".join(cells)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        exe = Path(tmp) / "fnv1a_ref"
        subprocess.run(["cc", "-O2", "-o", str(exe), str(GOLDEN / "fnv1a_ref.c")], check=True)
        stdin = "".join(encode(row) + "\n" for _, row in VECTORS)
        out = subprocess.run([str(exe)], input=stdin.encode(), capture_output=True, check=True)
    hashes = out.stdout.decode().split()
    assert len(hashes) == len(VECTORS)
    doc = [{"columns": [list(c) for c in cols], "row": row, "expected_hash_hex": h}
           for (cols, row), h in zip(VECTORS, hashes)]
    (GOLDEN / "fnv_vectors.json").write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n",
                                             encoding="utf-8")
    print(f"wrote {len(doc)} vectors")


if __name__ == "__main__":
    main()
